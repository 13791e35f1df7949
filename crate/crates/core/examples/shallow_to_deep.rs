//! Depth continuation: train at 3 layers, copy the learned layer into 6 and
//! then 12, and compare against training 12 layers from scratch for the
//! same number of epochs.

use tissue_ifno::data::{generate_synthetic, SyntheticConfig};
use tissue_ifno::ifno::IfnoConfig;
use tissue_ifno::train::{data_loss, train, DatasetSplit, TrainConfig};

fn main() -> tissue_ifno::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        nx: 11,
        ny: 11,
        n_samples: 20,
        ..SyntheticConfig::default()
    })?;
    let split = DatasetSplit {
        train: &ds.samples,
        test: &[],
    };
    let staged = TrainConfig {
        model: IfnoConfig {
            width: 8,
            proj_width: 32,
            k1: 4,
            k2: 4,
            ..IfnoConfig::default()
        },
        depth_schedule: vec![3, 6, 12],
        epochs_per_depth: 100,
        ..TrainConfig::default()
    };
    let direct = TrainConfig {
        depth_schedule: vec![12],
        epochs_per_depth: 300,
        ..staged.clone()
    };

    let (ps, hs) = train(split, &staged)?;
    let (pd, hd) = train(split, &direct)?;
    for e in hs.epochs.iter().step_by(50) {
        let d = &hd.epochs[e.epoch];
        println!("epoch {:3}  staged (L={:2}) {:.3e}   direct {:.3e}", e.epoch, e.depth, e.data_loss, d.data_loss);
    }
    println!(
        "final loss: staged {:.3e}, direct {:.3e}",
        data_loss(&ps, &ds.samples)?,
        data_loss(&pd, &ds.samples)?
    );
    Ok(())
}
