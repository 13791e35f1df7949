//! Differential evolution (DE/rand/1/bin) fit of Fung parameters to
//! stress–stretch records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pk_stress, FungBounds, FungParams};
use crate::error::{Error, Result};
use crate::grid::StressStretchRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    /// Population size; at least ten times the dimension.
    pub population: usize,
    pub generations: usize,
    pub crossover: f64,
    pub weight: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 300,
            crossover: 0.9,
            weight: 0.8,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 40 {
            return Err(Error::Config(format!(
                "DE population must be at least 10x the dimension (40), got {}",
                self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) || !(self.weight > 0.0 && self.weight <= 2.0) {
            return Err(Error::Config("DE crossover must be in [0,1] and weight in (0,2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FungParams,
    pub objective: f64,
    pub bounds: FungBounds,
    pub config: DeConfig,
    pub seed: u64,
    /// Best objective after initialization and after every generation.
    pub trace: Vec<f64>,
}

/// Mean squared stress residual over both components, `+inf` for
/// inadmissible or overflowing parameters.
pub fn stress_mse(params: &FungParams, records: &[StressStretchRecord]) -> f64 {
    if !params.is_admissible() {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for r in records {
        match pk_stress(r.lambda1, r.lambda2, params) {
            Ok((p11, p22)) => sum += (p11 - r.p11).powi(2) + (p22 - r.p22).powi(2),
            Err(_) => return f64::INFINITY,
        }
    }
    let v = sum / (2 * records.len()) as f64;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

pub fn fit_fung_de(
    records: &[StressStretchRecord],
    bounds: &FungBounds,
    config: &DeConfig,
    seed: u64,
) -> Result<FitResult> {
    bounds.validate()?;
    config.validate()?;
    if records.len() < 4 {
        return Err(Error::Data(format!("need at least 4 stress-stretch records, got {}", records.len())));
    }
    let spans = |f: fn(&StressStretchRecord) -> f64| {
        let (lo, hi) = records
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        hi - lo > 0.0
    };
    if !spans(|r| r.lambda1) || !spans(|r| r.lambda2) {
        return Err(Error::Data("records must vary along both stretch axes".into()));
    }

    let np = config.population;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> [f64; 4] {
        std::array::from_fn(|k| rng.gen_range(bounds.lower[k]..=bounds.upper[k]))
    };
    let eval = |x: &[f64; 4]| stress_mse(&FungParams::from_array(*x), records);

    let mut pop: Vec<[f64; 4]> = (0..np).map(|_| sample(&mut rng)).collect();
    let mut cost: Vec<f64> = pop.iter().map(eval).collect();
    if cost.iter().all(|c| !c.is_finite()) {
        return Err(Error::Config(
            "every initial candidate is inadmissible; check the Fung search bounds".into(),
        ));
    }
    let best_of = |cost: &[f64]| {
        (0..cost.len()).fold(0, |b, i| if cost[i] < cost[b] { i } else { b })
    };
    let mut trace = Vec::with_capacity(config.generations + 1);
    trace.push(cost[best_of(&cost)]);

    for _ in 0..config.generations {
        for i in 0..np {
            let mut pick = || loop {
                let r = rng.gen_range(0..np);
                if r != i {
                    break r;
                }
            };
            let r1 = pick();
            let r2 = loop {
                let r = pick();
                if r != r1 {
                    break r;
                }
            };
            let r3 = loop {
                let r = pick();
                if r != r1 && r != r2 {
                    break r;
                }
            };
            let forced = rng.gen_range(0..4);
            let mut trial = pop[i];
            for k in 0..4 {
                if k == forced || rng.gen::<f64>() < config.crossover {
                    let v = pop[r1][k] + config.weight * (pop[r2][k] - pop[r3][k]);
                    // out-of-box coordinates are resampled inside the box
                    trial[k] = if v < bounds.lower[k] || v > bounds.upper[k] {
                        rng.gen_range(bounds.lower[k]..=bounds.upper[k])
                    } else {
                        v
                    };
                }
            }
            let c = eval(&trial);
            if c <= cost[i] {
                pop[i] = trial;
                cost[i] = c;
            }
        }
        trace.push(cost[best_of(&cost)]);
    }
    let b = best_of(&cost);
    Ok(FitResult {
        params: FungParams::from_array(pop[b]),
        objective: cost[b],
        bounds: *bounds,
        config: *config,
        seed,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fung::synthesize_records;

    fn planted_records() -> (FungParams, Vec<StressStretchRecord>) {
        let p = FungParams::new(10.0, 5.0, 3.0, 1.0);
        let mut stretches = Vec::new();
        for k in 1..=8 {
            let t = k as f64 / 8.0;
            stretches.push((1.0 + 0.25 * t, 1.0 + 0.25 * t));
            stretches.push((1.0 + 0.25 * t, 1.0 + 0.08 * t));
            stretches.push((1.0 + 0.08 * t, 1.0 + 0.25 * t));
        }
        let recs = synthesize_records(&p, &stretches).unwrap();
        (p, recs)
    }

    #[test]
    fn objective_vanishes_at_planted_parameters() {
        let (p, recs) = planted_records();
        assert!(stress_mse(&p, &recs) <= 1e-16);
    }

    #[test]
    fn recovers_planted_parameters() {
        let (p, recs) = planted_records();
        let fit = fit_fung_de(&recs, &FungBounds::default(), &DeConfig::default(), 3).unwrap();
        for (got, want) in fit.params.to_array().iter().zip(p.to_array()) {
            assert!((got - want).abs() / want.abs() < 0.01, "{:?}", fit.params);
        }
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        let again = fit_fung_de(&recs, &FungBounds::default(), &DeConfig::default(), 3).unwrap();
        assert_eq!(again, fit);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (_, recs) = planted_records();
        let cfg = DeConfig::default();
        assert!(fit_fung_de(&recs[..3], &FungBounds::default(), &cfg, 0).is_err());
        let inverted = FungBounds {
            lower: [1.0, 1.0, 1.0, 1.0],
            upper: [0.5, 2.0, 2.0, 2.0],
        };
        assert!(fit_fung_de(&recs, &inverted, &cfg, 0).is_err());
        // a3 forced so large that a1 a2 - a3^2 < 0 everywhere
        let nonconvex = FungBounds {
            lower: [1.0, 0.1, 0.1, 5.0],
            upper: [2.0, 0.2, 0.2, 6.0],
        };
        assert!(matches!(fit_fung_de(&recs, &nonconvex, &cfg, 0), Err(Error::Config(_))));
        let small = DeConfig { population: 12, ..cfg };
        assert!(fit_fung_de(&recs, &FungBounds::default(), &small, 0).is_err());
    }
}
