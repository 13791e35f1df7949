//! Data, physics and hybrid losses with their exact reverse-mode gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{build_input_features, BoundaryLoading, GridSpec, Sample};
use crate::ifno::{Engine, IfnoParams, SubNetParams};

/// Samples per parallel work unit. Fixed so that summation order does not
/// depend on the thread count.
const CHUNK: usize = 4;

/// Loss values and gradient for one evaluation.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub data_loss: f64,
    pub physics_loss: f64,
    pub gamma: f64,
    pub grad: IfnoParams,
}

impl LossGrad {
    pub fn total(&self) -> f64 {
        hybrid(self.data_loss, self.physics_loss, self.gamma)
    }
}

#[inline]
fn hybrid(data: f64, physics: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        data
    } else {
        data + gamma * physics
    }
}

/// Reusable loss evaluator bound to one parameter structure.
pub struct Evaluator {
    engine: Engine,
    grid: GridSpec,
    weights: Vec<f64>,
    zero_features: Vec<f64>,
}

impl Evaluator {
    pub fn new(params: &IfnoParams) -> Result<Self> {
        let grid = params.grid;
        let zero = build_input_features(&BoundaryLoading::zeros(&grid), &grid)?;
        Ok(Self {
            engine: Engine::new(params),
            grid,
            weights: grid.trapezoid_weights(),
            zero_features: zero.into_values(),
        })
    }

    fn check(&self, s: &Sample) -> Result<()> {
        let g = s.field.grid();
        if (g.nx, g.ny) != (self.grid.nx, self.grid.ny) || s.field.channels() != 2 {
            return Err(Error::Shape(format!(
                "sample field {}x{}x{} does not match network grid {}x{}",
                g.nx,
                g.ny,
                s.field.channels(),
                self.grid.nx,
                self.grid.ny
            )));
        }
        Ok(())
    }

    /// `Σ ω (G[b] − target)²` for one input, optionally with its gradient.
    fn single(
        &self,
        params: &IfnoParams,
        features: &[f64],
        target: Option<&[f64]>,
        grad: Option<&mut IfnoParams>,
    ) -> f64 {
        let n = self.grid.num_nodes();
        let act = params.config.activation;
        let record = grad.is_some();
        let mut loss = 0.0;
        let mut grads = grad.map(|g| g.subnets_mut());
        for (ch, sub) in params.subnets().into_iter().enumerate() {
            let (u, tape) = self.engine.forward_subnet(
                sub,
                params.config.layers,
                params.dt,
                act,
                features,
                record,
            );
            let mut cot = vec![0.0; n];
            for k in 0..n {
                let r = u[k] - target.map_or(0.0, |t| t[ch * n + k]);
                loss += self.weights[k] * r * r;
                cot[k] = 2.0 * self.weights[k] * r;
            }
            if let (Some(gs), Some(tape)) = (grads.as_mut(), tape) {
                let g: &mut SubNetParams = &mut *gs[ch];
                self.engine
                    .backward_subnet(sub, params.dt, act, features, &tape, &cot, g);
            }
        }
        loss
    }

    fn sample_features(&self, s: &Sample) -> Result<Vec<f64>> {
        Ok(build_input_features(&s.boundary, &self.grid)?.into_values())
    }

    /// Sum of squared L2 errors over samples.
    pub fn data_loss(&self, params: &IfnoParams, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Data("data loss over an empty sample set".into()));
        }
        let parts: Result<Vec<f64>> = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = 0.0;
                for s in chunk {
                    self.check(s)?;
                    let f = self.sample_features(s)?;
                    acc += self.single(params, &f, Some(s.field.values()), None);
                }
                Ok(acc)
            })
            .collect();
        Ok(parts?.into_iter().sum())
    }

    /// Squared L2 norm of the prediction under zero loading.
    pub fn physics_loss(&self, params: &IfnoParams) -> f64 {
        self.single(params, &self.zero_features, None, None)
    }

    /// Losses and their gradient with respect to every parameter block.
    pub fn loss_and_grad(&self, params: &IfnoParams, samples: &[Sample], gamma: f64) -> Result<LossGrad> {
        if samples.is_empty() {
            return Err(Error::Data("gradient over an empty sample set".into()));
        }
        let parts: Result<Vec<(f64, IfnoParams)>> = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = params.zeros_like();
                let mut acc = 0.0;
                for s in chunk {
                    self.check(s)?;
                    let f = self.sample_features(s)?;
                    acc += self.single(params, &f, Some(s.field.values()), Some(&mut g));
                }
                Ok((acc, g))
            })
            .collect();
        let mut grad = params.zeros_like();
        let mut data_loss = 0.0;
        for (l, g) in parts? {
            data_loss += l;
            add_into(&mut grad, &g, 1.0);
        }
        let physics_loss = if gamma > 0.0 {
            let mut g = params.zeros_like();
            let l = self.single(params, &self.zero_features, None, Some(&mut g));
            add_into(&mut grad, &g, gamma);
            l
        } else {
            self.physics_loss(params)
        };
        Ok(LossGrad {
            data_loss,
            physics_loss,
            gamma,
            grad,
        })
    }
}

/// `dst += a * src`, blockwise.
pub(crate) fn add_into(dst: &mut IfnoParams, src: &IfnoParams, a: f64) {
    let src_blocks: Vec<&[f64]> = src
        .subnets()
        .into_iter()
        .flat_map(|s| s.blocks())
        .collect();
    for (d, s) in dst.blocks_mut().into_iter().zip(src_blocks) {
        for (x, y) in d.iter_mut().zip(s) {
            *x += a * y;
        }
    }
}

/// `Σ_j ‖G[(u_D)_j] − u_j‖²` over the samples.
pub fn data_loss(params: &IfnoParams, samples: &[Sample]) -> Result<f64> {
    Evaluator::new(params)?.data_loss(params, samples)
}

/// `‖G[0]‖²`, the zero-loading penalty.
pub fn physics_loss(params: &IfnoParams) -> Result<f64> {
    Ok(Evaluator::new(params)?.physics_loss(params))
}

/// `data_loss + gamma * physics_loss`.
pub fn hybrid_loss(params: &IfnoParams, samples: &[Sample], gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("penalty weight must be >= 0, got {gamma}")));
    }
    let ev = Evaluator::new(params)?;
    let data = ev.data_loss(params, samples)?;
    if gamma == 0.0 {
        return Ok(data);
    }
    Ok(hybrid(data, ev.physics_loss(params), gamma))
}

/// Exact gradient of [`hybrid_loss`].
pub fn grad(params: &IfnoParams, samples: &[Sample], gamma: f64) -> Result<LossGrad> {
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("penalty weight must be >= 0, got {gamma}")));
    }
    Evaluator::new(params)?.loss_and_grad(params, samples, gamma)
}
