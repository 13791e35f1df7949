mod common;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tissue_ifno::grid::{GridField, GridSpec};
use tissue_ifno::spectral::{spectral_conv, ModeSet, SpectralWeights};

fn random_weights(d_out: usize, d_in: usize, modes: ModeSet, seed: u64) -> SpectralWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = SpectralWeights::zeros(d_out, d_in, modes);
    r.values
        .iter_mut()
        .for_each(|c| *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    r
}

fn check(nx: usize, ny: usize, d: usize, seed: u64) -> f64 {
    let g = GridSpec::unit(nx, ny).unwrap();
    let r = random_weights(d, d, ModeSet::new(nx, ny, nx, ny).unwrap(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let h: Vec<f64> = (0..d * nx * ny).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let field = GridField::from_values(g, d, h.clone()).unwrap();
    let y = spectral_conv(&field, &r).unwrap();
    assert!(common::max_kernel_imag(&r) < 1e-12);
    let oracle = common::circular_conv_oracle(&r, &h);
    y.values()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn full_modes_match_circular_convolution_4x4() {
    assert!(check(4, 4, 1, 1) < 1e-10);
}

#[test]
fn full_modes_match_circular_convolution_8x8() {
    assert!(check(8, 8, 1, 2) < 1e-10);
}

#[test]
fn multichannel_and_odd_grids_match_oracle() {
    assert!(check(5, 7, 2, 3) < 1e-10);
    assert!(check(6, 5, 3, 4) < 1e-10);
}
