//! Fung-type planar hyperelastic baseline: strain energy, stresses,
//! parameter fitting and a membrane finite element predictor.

mod de;
mod fem;

pub use de::{fit_fung_de, DeConfig, FitResult};
pub use fem::{fem_solve_fung, FemConfig, FemSolution};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::StressStretchRecord;

/// Largest exponent accepted before `exp` is considered an overflow.
pub const EXPONENT_GUARD: f64 = 700.0;

/// `ψ = (c/2)[exp(a1 E11² + a2 E22² + 2 a3 E11 E22) − 1]`, `c` in kPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FungParams {
    pub c: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl FungParams {
    pub fn new(c: f64, a1: f64, a2: f64, a3: f64) -> Self {
        Self { c, a1, a2, a3 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.c, self.a1, self.a2, self.a3]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// `c > 0`, `a1, a2 > 0` and a positive definite exponent form.
    pub fn is_admissible(&self) -> bool {
        self.c > 0.0 && self.a1 > 0.0 && self.a2 > 0.0 && self.a1 * self.a2 - self.a3 * self.a3 > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) || !self.is_admissible() {
            return Err(Error::Config(format!(
                "Fung parameters need c > 0, a1 > 0, a2 > 0, a1*a2 > a3^2; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Exponent `Q(E11, E22)`.
    #[inline]
    pub fn exponent(&self, e11: f64, e22: f64) -> f64 {
        self.a1 * e11 * e11 + self.a2 * e22 * e22 + 2.0 * self.a3 * e11 * e22
    }

    fn guarded_exp(&self, e11: f64, e22: f64) -> Result<f64> {
        let q = self.exponent(e11, e22);
        if q > EXPONENT_GUARD || q.is_nan() {
            return Err(Error::Overflow(q));
        }
        Ok(q.exp())
    }

    /// `(∂ψ/∂E11, ∂ψ/∂E22)`.
    pub fn energy_gradient(&self, e11: f64, e22: f64) -> Result<[f64; 2]> {
        let ce = self.c * self.guarded_exp(e11, e22)?;
        Ok([
            ce * (self.a1 * e11 + self.a3 * e22),
            ce * (self.a3 * e11 + self.a2 * e22),
        ])
    }

    /// Second derivatives `∂²ψ/∂Ea∂Eb`, row-major 2×2.
    pub fn energy_hessian(&self, e11: f64, e22: f64) -> Result<[f64; 4]> {
        let ce = self.c * self.guarded_exp(e11, e22)?;
        let g = [self.a1 * e11 + self.a3 * e22, self.a3 * e11 + self.a2 * e22];
        Ok([
            ce * (2.0 * g[0] * g[0] + self.a1),
            ce * (2.0 * g[0] * g[1] + self.a3),
            ce * (2.0 * g[1] * g[0] + self.a3),
            ce * (2.0 * g[1] * g[1] + self.a2),
        ])
    }
}

/// Green–Lagrange strain of a principal stretch.
#[inline]
pub fn green_strain(lambda: f64) -> f64 {
    0.5 * (lambda * lambda - 1.0)
}

pub fn strain_energy(e11: f64, e22: f64, p: &FungParams) -> Result<f64> {
    let q = p.exponent(e11, e22);
    if q > EXPONENT_GUARD || q.is_nan() {
        return Err(Error::Overflow(q));
    }
    Ok(0.5 * p.c * q.exp_m1())
}

/// First Piola–Kirchhoff stresses `(P11, P22)` of a shear-free biaxial
/// stretch.
pub fn pk_stress(lambda1: f64, lambda2: f64, p: &FungParams) -> Result<(f64, f64)> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Err(Error::Data(format!("stretches must be positive, got ({lambda1}, {lambda2})")));
    }
    let [s1, s2] = p.energy_gradient(green_strain(lambda1), green_strain(lambda2))?;
    Ok((lambda1 * s1, lambda2 * s2))
}

/// Search box for the fit, in `[c, a1, a2, a3]` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FungBounds {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for FungBounds {
    fn default() -> Self {
        Self {
            lower: [0.01, 0.01, 0.01, -10.0],
            upper: [100.0, 20.0, 20.0, 10.0],
        }
    }
}

impl FungBounds {
    pub fn validate(&self) -> Result<()> {
        for k in 0..4 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("bound {k} is empty or non-finite: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    lambda1: f64,
    lambda2: f64,
    #[serde(rename = "P11_kPa")]
    p11: f64,
    #[serde(rename = "P22_kPa")]
    p22: f64,
}

pub fn write_records_csv<W: std::io::Write>(records: &[StressStretchRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(RecordRow {
            lambda1: r.lambda1,
            lambda2: r.lambda2,
            p11: r.p11,
            p22: r.p22,
        })?;
    }
    wr.flush().map_err(|e| Error::io("<records>", e))
}

pub fn read_records_csv<R: std::io::Read>(r: R) -> Result<Vec<StressStretchRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: RecordRow = row?;
        let rec = StressStretchRecord {
            lambda1: row.lambda1,
            lambda2: row.lambda2,
            p11: row.p11,
            p22: row.p22,
        };
        if !(rec.lambda1 > 0.0 && rec.lambda2 > 0.0) || !rec.p11.is_finite() || !rec.p22.is_finite() {
            return Err(Error::Data(format!("invalid stress-stretch record {rec:?}")));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_records_csv(records: &[StressStretchRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records_csv(records, f)
}

pub fn load_records_csv(path: &Path) -> Result<Vec<StressStretchRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records_csv(f)
}

/// Noiseless records of `params` on a set of stretch pairs.
pub fn synthesize_records(params: &FungParams, stretches: &[(f64, f64)]) -> Result<Vec<StressStretchRecord>> {
    stretches
        .iter()
        .map(|&(l1, l2)| {
            let (p11, p22) = pk_stress(l1, l2, params)?;
            Ok(StressStretchRecord {
                lambda1: l1,
                lambda2: l2,
                p11,
                p22,
            })
        })
        .collect()
}
