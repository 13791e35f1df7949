//! Seeded synthetic ground-truth operator standing in for measured fields.
//!
//! Each displacement component solves `∇·(μ∇w) = 0` with Dirichlet data on
//! the boundary, where `μ ∈ [1, 3]` is a fixed sum of Gaussian bumps, and is
//! then passed through the monotone map `u = w + α w|w|/s`. The boundary data
//! for `w` is the inverse map of the loading, so the field matches the
//! loading exactly on the boundary. Zero loading gives an exactly zero field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::protocol::{protocol, protocol_table};
use super::Dataset;
use crate::error::{Error, Result};
use crate::fung::{pk_stress, FungParams};
use crate::grid::{extract_boundary, BoundaryLoading, GridField, GridSpec, Provenance, Sample, StressStretchRecord};
use crate::linalg::{BandLu, BandMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub nx: usize,
    pub ny: usize,
    /// Specimen size in mm.
    pub extent: [f64; 2],
    pub n_samples: usize,
    pub protocols: Vec<u8>,
    pub seed: u64,
    /// Loading/unloading cycles per protocol.
    pub cycles: usize,
    /// Gaussian bumps in the stiffness field; zero gives `μ ≡ 1`.
    pub bumps: usize,
    pub alpha: f64,
    /// Displacement scale `s` of the nonlinearity (mm).
    pub scale: f64,
    /// Relative spread of the per-frame stretch amplitudes.
    pub perturbation: f64,
    /// Standard deviation of additive field noise (mm).
    pub noise_std: f64,
    /// Relative standard deviation of the stress record noise.
    pub stress_noise: f64,
    /// Parameters generating the homogenized stress records.
    pub planted: FungParams,
    /// Random sample pairs used for the recorded continuity constant.
    pub lipschitz_pairs: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nx: 21,
            ny: 21,
            extent: [5.5, 5.5],
            n_samples: 210,
            protocols: (1..=7).collect(),
            seed: 0,
            cycles: 3,
            bumps: 4,
            alpha: 0.3,
            scale: 1.0,
            perturbation: 0.05,
            noise_std: 0.0,
            stress_noise: 0.01,
            planted: FungParams::new(2.0, 3.0, 2.0, 0.5),
            lipschitz_pairs: 16,
        }
    }
}

impl SyntheticConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.nx, self.ny, self.extent)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::Config("synthetic grid needs interior nodes (at least 3x3)".into()));
        }
        if self.protocols.is_empty() {
            return Err(Error::Config("at least one protocol is required".into()));
        }
        for &p in &self.protocols {
            protocol(p)?;
        }
        if self.cycles == 0 {
            return Err(Error::Config("cycles must be at least 1".into()));
        }
        let nonneg = [self.alpha, self.perturbation, self.noise_std, self.stress_noise];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(self.scale > 0.0) {
            return Err(Error::Config("alpha, perturbation and noise levels must be >= 0 and scale > 0".into()));
        }
        self.planted.validate()
    }
}

/// The fixed ground-truth map from boundary loading to displacement field.
#[derive(Debug, Clone)]
pub struct SyntheticOperator {
    grid: GridSpec,
    mu: Vec<f64>,
    alpha: f64,
    scale: f64,
    lu: BandLu,
    /// per interior unknown: `(boundary node, coupling)` terms of the right-hand side
    couplings: Vec<Vec<(usize, f64)>>,
}

impl SyntheticOperator {
    /// Stiffness field from `bumps` seeded Gaussian bumps, rescaled to `[1, 3]`.
    pub fn new(grid: GridSpec, bumps: usize, seed: u64, alpha: f64, scale: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_b0b5);
        let [ex, ey] = grid.extent;
        let centres: Vec<(f64, f64, f64, f64)> = (0..bumps)
            .map(|_| {
                (
                    rng.gen_range(0.0..ex),
                    rng.gen_range(0.0..ey),
                    rng.gen_range(0.1..0.25) * ex.max(ey),
                    rng.gen_range(0.5..1.0),
                )
            })
            .collect();
        let raw: Vec<f64> = (0..grid.num_nodes())
            .map(|k| {
                let [x, y] = grid.coord(k / grid.ny, k % grid.ny);
                centres
                    .iter()
                    .map(|&(cx, cy, s, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
                    .sum()
            })
            .collect();
        let peak = raw.iter().copied().fold(0.0, f64::max);
        let mu = if peak > 0.0 {
            raw.iter().map(|b| 1.0 + 2.0 * b / peak).collect()
        } else {
            vec![1.0; grid.num_nodes()]
        };
        Self::with_stiffness(grid, mu, alpha, scale)
    }

    pub fn with_stiffness(grid: GridSpec, mu: Vec<f64>, alpha: f64, scale: f64) -> Result<Self> {
        let (nx, ny) = (grid.nx, grid.ny);
        if nx < 3 || ny < 3 || mu.len() != grid.num_nodes() {
            return Err(Error::Shape("stiffness field must cover a grid with interior nodes".into()));
        }
        let [hx, hy] = grid.spacing();
        let m = ny - 2;
        let idx = |i: usize, j: usize| (i - 1) * m + (j - 1);
        let mut a = BandMatrix::zeros((nx - 2) * m, m);
        let mut couplings = vec![Vec::new(); (nx - 2) * m];
        for i in 1..nx - 1 {
            for j in 1..ny - 1 {
                let k = idx(i, j);
                let here = mu[grid.node(i, j)];
                for (di, dj, h2) in [(-1i64, 0i64, hx * hx), (1, 0, hx * hx), (0, -1, hy * hy), (0, 1, hy * hy)] {
                    let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    let coeff = 0.5 * (here + mu[grid.node(ni, nj)]) / h2;
                    a.add(k, k, coeff);
                    if grid.is_boundary(ni, nj) {
                        couplings[k].push((grid.node(ni, nj), coeff));
                    } else {
                        a.add(k, idx(ni, nj), -coeff);
                    }
                }
            }
        }
        let lu = a
            .factorize()
            .ok_or_else(|| Error::Numerical("synthetic operator system is singular".into()))?;
        Ok(Self {
            grid,
            mu,
            alpha,
            scale,
            lu,
            couplings,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn stiffness(&self) -> &[f64] {
        &self.mu
    }

    fn forward_map(&self, w: f64) -> f64 {
        w + self.alpha * w * w.abs() / self.scale
    }

    fn inverse_map(&self, u: f64) -> f64 {
        let kappa = self.alpha / self.scale;
        if kappa == 0.0 {
            return u;
        }
        // positive root of κ w² + w = |u|, in cancellation-free form
        u.signum() * 2.0 * u.abs() / (1.0 + (1.0 + 4.0 * kappa * u.abs()).sqrt())
    }

    pub fn apply(&self, b: &BoundaryLoading) -> Result<GridField> {
        let g = &self.grid;
        if b.dims() != (g.nx, g.ny) {
            return Err(Error::Shape(format!("loading sized for {:?}, operator grid is {}x{}", b.dims(), g.nx, g.ny)));
        }
        let n = g.num_nodes();
        let mut values = vec![0.0; 2 * n];
        let bnodes = g.boundary_nodes();
        for c in 0..2 {
            let mut wb = vec![0.0; n];
            for (&(i, j), v) in bnodes.iter().zip(b.values()) {
                wb[g.node(i, j)] = self.inverse_map(v[c]);
                values[c * n + g.node(i, j)] = v[c];
            }
            let rhs: Vec<f64> = self
                .couplings
                .iter()
                .map(|terms| terms.iter().map(|&(node, coeff)| coeff * wb[node]).sum())
                .collect();
            let w = self
                .lu
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("synthetic solve produced non-finite values".into()))?;
            let m = g.ny - 2;
            for i in 1..g.nx - 1 {
                for j in 1..g.ny - 1 {
                    values[c * n + g.node(i, j)] = self.forward_map(w[(i - 1) * m + (j - 1)]);
                }
            }
        }
        GridField::from_values(*g, 2, values)
    }
}

/// Position in the triangular loading ramp of frame `k` out of `frames`.
/// Returns `(cycle, amplitude in (0, 1])`.
pub fn ramp(k: usize, frames: usize, cycles: usize) -> (usize, f64) {
    let phase = (k as f64 + 0.5) / frames as f64 * cycles as f64;
    let cycle = (phase.floor() as usize).min(cycles - 1);
    let frac = phase - cycle as f64;
    (cycle, 1.0 - (2.0 * frac - 1.0).abs())
}

/// Homogenized stretches from mean edge displacements.
pub fn edge_stretches(field: &GridField) -> (f64, f64) {
    let g = field.grid();
    let [ex, ey] = g.extent;
    let mean = |c: usize, nodes: &mut dyn Iterator<Item = (usize, usize)>| {
        let v: Vec<f64> = nodes.map(|(i, j)| field.get(c, i, j)).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let right = mean(0, &mut (0..g.ny).map(|j| (g.nx - 1, j)));
    let left = mean(0, &mut (0..g.ny).map(|j| (0, j)));
    let top = mean(1, &mut (0..g.nx).map(|i| (i, g.ny - 1)));
    let bottom = mean(1, &mut (0..g.nx).map(|i| (i, 0)));
    (1.0 + (right - left) / ex, 1.0 + (top - bottom) / ey)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let op = SyntheticOperator::new(grid, cfg.bumps, cfg.seed, cfg.alpha, cfg.scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let [ex, ey] = grid.extent;
    let (cx, cy) = (ex / 2.0, ey / 2.0);
    let np = cfg.protocols.len();
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for (pi, &pid) in cfg.protocols.iter().enumerate() {
        let spec = protocol(pid)?;
        let frames = cfg.n_samples / np + usize::from(pi < cfg.n_samples % np);
        let [l1, l2] = spec.max_stretch;
        for k in 0..frames {
            let (cycle, amp) = ramp(k, frames, cfg.cycles);
            let d1: f64 = rng.gen_range(-1.0..=1.0) * cfg.perturbation;
            let d2: f64 = rng.gen_range(-1.0..=1.0) * cfg.perturbation;
            let shear: f64 = rng.gen_range(-0.02..=0.02);
            let bulge_x: f64 = rng.gen_range(-0.05..=0.05);
            let bulge_y: f64 = rng.gen_range(-0.05..=0.05);
            let (e1, e2) = (amp * (l1 - 1.0) * (1.0 + d1), amp * (l2 - 1.0) * (1.0 + d2));
            let b = BoundaryLoading::from_fn(&grid, |x, y| {
                let (xi, eta) = (x - cx, y - cy);
                let ux = e1 * xi
                    + amp * shear * eta
                    + amp * bulge_x * (l1 - 1.0) * xi * (1.0 - (2.0 * eta / ey).powi(2));
                let uy = e2 * eta
                    + amp * shear * xi
                    + amp * bulge_y * (l2 - 1.0) * eta * (1.0 - (2.0 * xi / ex).powi(2));
                [ux, uy]
            });
            let mut field = op.apply(&b)?;
            let (lam1, lam2) = edge_stretches(&field);
            let (p11, p22) = pk_stress(lam1, lam2, &cfg.planted)?;
            let record = StressStretchRecord {
                lambda1: lam1,
                lambda2: lam2,
                p11: p11 * (1.0 + cfg.stress_noise * unit.sample(&mut rng)),
                p22: p22 * (1.0 + cfg.stress_noise * unit.sample(&mut rng)),
            };
            if cfg.noise_std > 0.0 {
                let noisy: Vec<f64> = field.values().iter().map(|v| v + cfg.noise_std * unit.sample(&mut rng)).collect();
                field = GridField::from_values(grid, 2, noisy)?;
            }
            let boundary = extract_boundary(&field)?;
            samples.push(Sample {
                boundary,
                field,
                protocol_id: pid,
                frame_index: k,
                cycle,
                provenance: Provenance::Synthetic,
                record: Some(record),
            });
        }
    }
    let lipschitz = empirical_lipschitz(&op, &samples, cfg.lipschitz_pairs, cfg.seed)?;
    Ok(Dataset {
        grid,
        samples,
        protocols: protocol_table(),
        seed: Some(cfg.seed),
        lipschitz,
        generator: Some(cfg.clone()),
    })
}

/// Largest `‖G[b1] − G[b2]‖_{L2(Ω)} / ‖b1 − b2‖₂` over seeded sample pairs.
pub fn empirical_lipschitz(op: &SyntheticOperator, samples: &[Sample], pairs: usize, seed: u64) -> Result<Option<f64>> {
    if samples.len() < 2 || pairs == 0 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x11b5));
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let a = rng.gen_range(0..samples.len());
        let b = rng.gen_range(0..samples.len());
        let (ba, bb) = (&samples[a].boundary, &samples[b].boundary);
        let den = ba
            .values()
            .iter()
            .zip(bb.values())
            .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
            .sum::<f64>()
            .sqrt();
        if den > 0.0 {
            let num = op.apply(ba)?.l2_dist_sq(&op.apply(bb)?)?.sqrt();
            worst = worst.max(num / den);
        }
    }
    Ok(Some(worst))
}
