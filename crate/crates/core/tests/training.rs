use tissue_ifno::data::{generate_synthetic, SyntheticConfig};
use tissue_ifno::grid::Sample;
use tissue_ifno::ifno::{Activation, IfnoConfig};
use tissue_ifno::train::{data_loss, physics_loss, train, DatasetSplit, TrainConfig};

fn dataset(n: usize, nx: usize, seed: u64) -> Vec<Sample> {
    generate_synthetic(&SyntheticConfig {
        nx,
        ny: nx,
        n_samples: n,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
    .samples
}

fn small_model() -> IfnoConfig {
    IfnoConfig {
        width: 8,
        proj_width: 32,
        k1: 4,
        k2: 4,
        layers: 4,
        activation: Activation::Relu,
        ..IfnoConfig::default()
    }
}

#[test]
fn training_loss_drops_two_orders_of_magnitude() {
    let s = dataset(50, 9, 0);
    let cfg = TrainConfig {
        model: small_model(),
        depth_schedule: vec![4],
        epochs_per_depth: 500,
        ..TrainConfig::default()
    };
    let (params, h) = train(DatasetSplit { train: &s, test: &[] }, &cfg).unwrap();
    let first = h.epochs[0].data_loss;
    let last = data_loss(&params, &s).unwrap();
    assert_eq!(h.epochs.len(), 500);
    assert!(last < 0.01 * first, "final {last:.3e} vs initial {first:.3e}");
}

#[test]
fn training_is_deterministic() {
    let s = dataset(12, 7, 3);
    let cfg = TrainConfig {
        model: small_model(),
        depth_schedule: vec![1, 2],
        epochs_per_depth: 6,
        batch_size: Some(5),
        gamma: 1.0,
        ..TrainConfig::default()
    };
    let split = DatasetSplit { train: &s[..8], test: &s[8..] };
    let (p1, h1) = train(split, &cfg).unwrap();
    let (p2, h2) = train(split, &cfg).unwrap();
    assert_eq!(p1, p2);
    assert!(h1.same_numbers(&h2));
    assert_eq!(h1.epochs.len(), 12);
    assert_eq!(h1.epochs[6].depth, 2);
    assert!(h1.final_test_error.is_some());
}

#[test]
fn zero_loading_penalty_pins_the_rest_state() {
    let mut wins = 0;
    for seed in 0..5 {
        let s = dataset(14, 9, seed);
        let mean_norm = s.iter().map(|x| x.field.l2_norm_sq()).sum::<f64>() / s.len() as f64;
        let base = TrainConfig {
            model: small_model(),
            depth_schedule: vec![2, 4],
            epochs_per_depth: 100,
            batch_size: Some(1),
            seed,
            ..TrainConfig::default()
        };
        let split = DatasetSplit { train: &s, test: &[] };
        let (vanilla, _) = train(split, &base).unwrap();
        let (pg, _) = train(split, &TrainConfig { gamma: 1.0, ..base }).unwrap();
        let (pv, pp) = (physics_loss(&vanilla).unwrap(), physics_loss(&pg).unwrap());
        assert!(pp < 1e-2 * mean_norm, "seed {seed}: {pp:.3e} vs mean norm {mean_norm:.3e}");
        wins += usize::from(pp <= pv);
    }
    assert!(wins >= 4, "penalized network was closer to rest in only {wins} of 5 seeds");
}
