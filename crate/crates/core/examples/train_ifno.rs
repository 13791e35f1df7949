//! Train a vanilla and a physics-guided operator on the same data and
//! compare their errors and their response to zero loading.
//!
//! cargo run --release --example train_ifno

use tissue_ifno::data::{generate_synthetic, split_study, SyntheticConfig};
use tissue_ifno::grid::{BoundaryLoading, GridField};
use tissue_ifno::ifno::{forward, IfnoConfig};
use tissue_ifno::train::{mean_relative_error, physics_loss, train, DatasetSplit, TrainConfig};

fn main() -> tissue_ifno::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        nx: 11,
        ny: 11,
        n_samples: 35,
        ..SyntheticConfig::default()
    })?;
    let ds_split = split_study(&ds, 2, 0)?;
    let split = DatasetSplit {
        train: &ds_split.0,
        test: &ds_split.1,
    };
    let base = TrainConfig {
        model: IfnoConfig {
            width: 8,
            proj_width: 32,
            ..IfnoConfig::default()
        },
        epochs_per_depth: 100,
        batch_size: Some(1),
        ..TrainConfig::default()
    };

    for (name, gamma) in [("vanilla", 0.0), ("physics-guided", 1.0)] {
        let (params, history) = train(split, &TrainConfig { gamma, ..base.clone() })?;
        let seconds: f64 = history.epochs.iter().map(|e| e.seconds).sum();
        let rest = forward(&BoundaryLoading::zeros(&ds.grid), &params)?;
        println!(
            "{name:>15}: train {:.2}%  test {:.2}%  physics loss {:.2e}  |G[0]|max {:.2e}  ({:.1}s)",
            100.0 * mean_relative_error(&params, split.train)?.unwrap_or(f64::NAN),
            100.0 * mean_relative_error(&params, split.test)?.unwrap_or(f64::NAN),
            physics_loss(&params)?,
            rest.max_abs_diff(&GridField::zeros(ds.grid, 2)),
            seconds,
        );
    }
    Ok(())
}
