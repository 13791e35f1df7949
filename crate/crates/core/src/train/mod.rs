//! Training: losses, exact gradients, Adam and the shallow-to-deep loop.

pub mod adam;
pub mod gradcheck;
pub mod loss;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use gradcheck::{fd_gradient_check, GradCheckReport};
pub use loss::{data_loss, grad, hybrid_loss, physics_loss, Evaluator, LossGrad};

use crate::error::{Error, Result};
use crate::grid::{relative_l2_error, GridSpec, Sample};
use crate::ifno::{forward_many, init_params, shallow_to_deep, IfnoConfig, IfnoParams};

/// When the stepped learning-rate decay starts within a depth stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayMode {
    /// `lr = lr0 · ratio^⌊epoch / every⌋` from the first epoch.
    InTraining,
    /// Constant `lr0` for `warmup` epochs, then one decay every `every` epochs.
    AfterWarmup { warmup: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Architecture; `layers` is overridden by the last depth of the schedule.
    pub model: IfnoConfig,
    pub epochs_per_depth: usize,
    pub lr0: f64,
    pub decay_ratio: f64,
    pub decay_every: usize,
    pub decay_mode: DecayMode,
    pub depth_schedule: Vec<usize>,
    /// Zero-loading penalty weight; 0 trains the vanilla operator.
    pub gamma: f64,
    /// `None` = full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: IfnoConfig::default(),
            epochs_per_depth: 1000,
            lr0: 3e-3,
            decay_ratio: 0.5,
            decay_every: 100,
            decay_mode: DecayMode::InTraining,
            depth_schedule: vec![3, 6, 12],
            gamma: 0.0,
            batch_size: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Physics-guided defaults (`gamma = 1`).
    pub fn physics_guided() -> Self {
        Self {
            gamma: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut model = self.model;
        model.layers = *self.depth_schedule.last().unwrap_or(&1);
        model.validate()?;
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay_ratio > 0.0 && self.decay_ratio <= 1.0) {
            return Err(Error::Config("decay_ratio must lie in (0, 1]".into()));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be >= 1".into()));
        }
        if self.depth_schedule.is_empty() {
            return Err(Error::Config("depth_schedule must not be empty".into()));
        }
        if self.depth_schedule.windows(2).any(|w| w[1] <= w[0]) || self.depth_schedule[0] == 0 {
            return Err(Error::Config(format!(
                "depth_schedule must be positive and strictly increasing, got {:?}",
                self.depth_schedule
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Learning rate for an epoch counted from the start of a depth stage.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let decays = match self.decay_mode {
            DecayMode::InTraining => epoch / self.decay_every,
            DecayMode::AfterWarmup { warmup } => {
                if epoch < warmup {
                    0
                } else {
                    (epoch - warmup) / self.decay_every + 1
                }
            }
        };
        self.lr0 * self.decay_ratio.powi(decays as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Global epoch counter across depth stages.
    pub epoch: usize,
    pub depth: usize,
    pub lr: f64,
    pub data_loss: f64,
    pub physics_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Hybrid loss of the returned checkpoint on the training set.
    pub best_loss: f64,
    pub final_train_error: Option<f64>,
    pub final_test_error: Option<f64>,
}

impl TrainHistory {
    /// Same trace ignoring wall-clock columns.
    pub fn same_numbers(&self, other: &TrainHistory) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.depth == b.depth
                    && a.lr.to_bits() == b.lr.to_bits()
                    && a.data_loss.to_bits() == b.data_loss.to_bits()
                    && a.physics_loss.to_bits() == b.physics_loss.to_bits()
            })
            && self.best_loss.to_bits() == other.best_loss.to_bits()
            && self.final_train_error == other.final_train_error
            && self.final_test_error == other.final_test_error
    }

    /// CSV with columns `epoch,lr,data_loss,physics_loss,seconds`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,lr,data_loss,physics_loss,seconds")?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:.6}",
                r.epoch, r.lr, r.data_loss, r.physics_loss, r.seconds
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

/// Training and (possibly empty) evaluation samples.
#[derive(Debug, Clone, Copy)]
pub struct DatasetSplit<'a> {
    pub train: &'a [Sample],
    pub test: &'a [Sample],
}

/// Mean relative L2 error over samples with a well-defined reference norm.
pub fn mean_relative_error(params: &IfnoParams, samples: &[Sample]) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let loads: Vec<_> = samples.iter().map(|s| &s.boundary).collect();
    let preds = forward_many(&loads, params)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, s) in preds.iter().zip(samples) {
        if let Some(e) = relative_l2_error(p, &s.field)?.value() {
            sum += e;
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

fn grid_of(samples: &[Sample]) -> Result<GridSpec> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Data("training split is empty".into()))?;
    Ok(*first.field.grid())
}

/// Shallow-to-deep training from a seeded initialization.
pub fn train(split: DatasetSplit<'_>, config: &TrainConfig) -> Result<(IfnoParams, TrainHistory)> {
    config.validate()?;
    let grid = grid_of(split.train)?;
    let mut model = config.model;
    model.layers = config.depth_schedule[0];
    let init = init_params(&model, grid, config.seed)?;
    train_from(init, split, config)
}

/// Continues training from given parameters through the depth schedule;
/// the first schedule entry must equal the current depth.
pub fn train_from(
    mut params: IfnoParams,
    split: DatasetSplit<'_>,
    config: &TrainConfig,
) -> Result<(IfnoParams, TrainHistory)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if params.config.layers != config.depth_schedule[0] {
        return Err(Error::Config(format!(
            "initial depth {} differs from schedule start {}",
            params.config.layers, config.depth_schedule[0]
        )));
    }
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5a3b_1e00_0000);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut global_epoch = 0usize;
    let mut best_loss = f64::INFINITY;

    for (stage, &depth) in config.depth_schedule.iter().enumerate() {
        if stage > 0 {
            params = shallow_to_deep(&params, depth)?;
        }
        let ev = Evaluator::new(&params)?;
        let mut adam = AdamState::default();
        let mut stage_best: Option<(f64, IfnoParams)> = None;

        for epoch in 0..config.epochs_per_depth {
            let start = Instant::now();
            let lr = config.learning_rate(epoch);
            let (data_loss, physics_loss, full_batch_loss) = match config.batch_size {
                None => {
                    let lg = ev.loss_and_grad(&params, split.train, config.gamma)?;
                    let total = lg.total();
                    check_finite(depth, epoch, lg.data_loss, lg.physics_loss)?;
                    if stage_best.as_ref().is_none_or(|(b, _)| total < *b) {
                        stage_best = Some((total, params.clone()));
                    }
                    adam_step(&mut params, &lg.grad, &mut adam, lr);
                    (lg.data_loss, lg.physics_loss, Some(total))
                }
                Some(bs) => {
                    order.shuffle(&mut rng);
                    let mut data = 0.0;
                    let mut phys = 0.0;
                    for idx in order.chunks(bs) {
                        let batch: Vec<Sample> = idx.iter().map(|&i| split.train[i].clone()).collect();
                        let lg = ev.loss_and_grad(&params, &batch, config.gamma)?;
                        check_finite(depth, epoch, lg.data_loss, lg.physics_loss)?;
                        data += lg.data_loss;
                        phys = lg.physics_loss;
                        adam_step(&mut params, &lg.grad, &mut adam, lr);
                    }
                    (data, phys, None)
                }
            };
            if full_batch_loss.is_none() {
                let total = if config.gamma == 0.0 {
                    data_loss
                } else {
                    data_loss + config.gamma * physics_loss
                };
                if stage_best.as_ref().is_none_or(|(b, _)| total < *b) {
                    stage_best = Some((total, params.clone()));
                }
            }
            history.epochs.push(EpochRecord {
                epoch: global_epoch,
                depth,
                lr,
                data_loss,
                physics_loss,
                seconds: start.elapsed().as_secs_f64(),
            });
            global_epoch += 1;
        }

        // the parameters after the final update are a candidate too
        let data = ev.data_loss(&params, split.train)?;
        let phys = ev.physics_loss(&params);
        check_finite(depth, config.epochs_per_depth, data, phys)?;
        let last = if config.gamma == 0.0 { data } else { data + config.gamma * phys };
        match stage_best {
            Some((b, p)) if b < last => {
                params = p;
                best_loss = b;
            }
            _ => best_loss = last,
        }
    }

    history.best_loss = best_loss;
    history.final_train_error = mean_relative_error(&params, split.train)?;
    history.final_test_error = mean_relative_error(&params, split.test)?;
    Ok((params, history))
}

fn check_finite(depth: usize, epoch: usize, data_loss: f64, physics_loss: f64) -> Result<()> {
    if data_loss.is_finite() && physics_loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            depth,
            epoch,
            data_loss,
            physics_loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_trace() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate(0), 3e-3);
        assert_eq!(c.learning_rate(99), 3e-3);
        assert_eq!(c.learning_rate(100), 1.5e-3);
        assert_eq!(c.learning_rate(199), 1.5e-3);
        assert_eq!(c.learning_rate(200), 7.5e-4);
        let alt = TrainConfig {
            decay_mode: DecayMode::AfterWarmup { warmup: 1000 },
            ..TrainConfig::default()
        };
        assert_eq!(alt.learning_rate(999), 3e-3);
        assert_eq!(alt.learning_rate(1000), 1.5e-3);
        assert_eq!(alt.learning_rate(1100), 7.5e-4);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.lr0 = 0.0));
        assert!(bad(|c| c.depth_schedule = vec![]));
        assert!(bad(|c| c.depth_schedule = vec![6, 3]));
        assert!(bad(|c| c.depth_schedule = vec![3, 3]));
        assert!(bad(|c| c.gamma = -1.0));
        assert!(bad(|c| c.batch_size = Some(0)));
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let c: TrainConfig = serde_json::from_str(r#"{"gamma": 1.0, "epochs_per_depth": 5}"#).unwrap();
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.epochs_per_depth, 5);
        assert_eq!(c.lr0, 3e-3);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"gama": 1.0}"#).is_err());
    }

    #[test]
    fn empty_training_split_is_rejected() {
        let r = train(DatasetSplit { train: &[], test: &[] }, &TrainConfig::default());
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
