use tissue_ifno::grid::{BoundaryLoading, GridField, GridSpec, Provenance, Sample};
use tissue_ifno::ifno::{init_params, Activation, IfnoConfig};
use tissue_ifno::train::{fd_gradient_check, grad, hybrid_loss};

fn tiny_config() -> IfnoConfig {
    IfnoConfig {
        width: 2,
        proj_width: 4,
        k1: 2,
        k2: 2,
        layers: 2,
        horizon: 1.0,
        activation: Activation::smooth(),
    }
}

fn sample(grid: GridSpec, a: f64, b: f64) -> Sample {
    let field = GridField::from_fn(grid, 2, |x, y| {
        vec![a * x + 0.1 * (3.0 * y).sin(), b * y + 0.05 * x * y]
    });
    Sample::from_field(field, 1, 0, Provenance::Synthetic).unwrap()
}

fn tiny_samples(grid: GridSpec) -> Vec<Sample> {
    vec![sample(grid, 0.2, 0.1), sample(grid, -0.1, 0.3), sample(grid, 0.05, -0.2)]
}

#[test]
fn tiny_net_matches_central_differences() {
    let grid = GridSpec::unit(5, 5).unwrap();
    let params = init_params(&tiny_config(), grid, 17).unwrap();
    let samples = tiny_samples(grid);
    for gamma in [0.0, 1.0] {
        let rep = fd_gradient_check(&params, &samples, gamma, 1e-6, usize::MAX, 0).unwrap();
        for b in &rep.blocks {
            println!("gamma={gamma} {:6} n={:3} max={:.2e} mean={:.2e}", b.name, b.checked, b.max_rel_err, b.mean_rel_err);
        }
        assert!(rep.max_rel_err() < 1e-4);
    }
}

#[test]
fn directional_derivative_matches() {
    use rand::{Rng, SeedableRng};
    let grid = GridSpec::new(6, 5, [2.0, 1.5]).unwrap();
    let params = init_params(&tiny_config(), grid, 5).unwrap();
    let samples = tiny_samples(grid);
    let lg = grad(&params, &samples, 1.0).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dir: Vec<Vec<f64>> = lg.grad.named_blocks().iter()
        .map(|(_, b)| (0..b.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let along = |t: f64| {
        let mut p = params.clone();
        for (blk, d) in p.blocks_mut().into_iter().zip(&dir) {
            for (x, v) in blk.iter_mut().zip(d) { *x += t * v; }
        }
        hybrid_loss(&p, &samples, 1.0).unwrap()
    };
    let h = 1e-6;
    let fd = (along(h) - along(-h)) / (2.0 * h);
    let an: f64 = lg.grad.named_blocks().iter().zip(&dir)
        .map(|((_, g), d)| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>()).sum();
    assert!((fd - an).abs() / an.abs() < 1e-6, "fd {fd} analytic {an}");
}

#[test]
fn gradient_vanishes_at_exact_fit() {
    // dead projection reproduces all-zero targets exactly
    let grid = GridSpec::unit(5, 5).unwrap();
    let mut params = init_params(&tiny_config(), grid, 3).unwrap();
    for sub in params.subnets_mut() {
        sub.q2_w.iter_mut().for_each(|v| *v = 0.0);
        sub.q2_b = 0.0;
    }
    let zero = Sample {
        boundary: BoundaryLoading::from_fn(&grid, |x, _| [x, 0.0]),
        ..Sample::from_field(GridField::zeros(grid, 2), 1, 0, Provenance::Synthetic).unwrap()
    };
    let lg = grad(&params, &[zero], 1.0).unwrap();
    assert_eq!(lg.total(), 0.0);
    // only Q2 and q2 can see a nonzero cotangent, and it is zero here
    assert!(lg.grad.named_blocks().iter().all(|(_, b)| b.iter().all(|&v| v == 0.0)));
}
