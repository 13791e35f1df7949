//! Central-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::Sample;
use crate::ifno::IfnoParams;
use crate::train::loss::{grad, Evaluator};

/// Denominator floor for relative errors of near-zero derivatives.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Compares `grad` of `f` at `x` against central differences on the chosen
/// coordinates; returns the per-coordinate relative errors.
pub fn central_difference(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    grad: &[f64],
    coords: &[usize],
    eps: f64,
) -> Vec<f64> {
    let mut xp = x.to_vec();
    coords
        .iter()
        .map(|&k| {
            xp[k] = x[k] + eps;
            let fp = f(&xp);
            xp[k] = x[k] - eps;
            let fm = f(&xp);
            xp[k] = x[k];
            rel_err(grad[k], (fp - fm) / (2.0 * eps))
        })
        .collect()
}

/// Checks every parameter block of both sub-networks on up to
/// `per_block` randomly chosen coordinates (all of them for small blocks).
///
/// Meant for smooth activations; a ReLU kink inside `±eps` breaks the check.
pub fn fd_gradient_check(
    params: &IfnoParams,
    samples: &[Sample],
    gamma: f64,
    eps: f64,
    per_block: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let analytic = grad(params, samples, gamma)?;
    let ev = Evaluator::new(params)?;
    let loss = |p: &IfnoParams| -> f64 {
        let d = ev.data_loss(p, samples).expect("validated samples");
        if gamma == 0.0 {
            d
        } else {
            d + gamma * ev.physics_loss(p)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = params.named_blocks().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic
        .grad
        .named_blocks()
        .into_iter()
        .map(|(_, b)| b.to_vec())
        .collect();
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let len = grads[b].len();
        let coords: Vec<usize> = if len <= per_block {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, per_block).into_vec();
            c.sort_unstable();
            c
        };
        let mut work = params.clone();
        let x: Vec<f64> = params.named_blocks()[b].1.to_vec();
        let mut f = |v: &[f64]| {
            work.blocks_mut()[b].copy_from_slice(v);
            loss(&work)
        };
        let errs = central_difference(&mut f, &x, &grads[b], &coords, eps);
        blocks.push(BlockCheck {
            name,
            checked: errs.len(),
            max_rel_err: errs.iter().copied().fold(0.0, f64::max),
            mean_rel_err: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
        });
    }
    Ok(GradCheckReport { eps, blocks })
}
