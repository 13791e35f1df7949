//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use tissue_ifno::spectral::SpectralWeights;

/// Full-spectrum multiplier implied by half-spectrum weights: mirrored
/// columns get their conjugate partner, self-conjugate columns are
/// Hermitian-symmetrized.
pub fn effective_multiplier(r: &SpectralWeights, o: usize, i: usize) -> Vec<Complex64> {
    let (nx, ny) = (r.modes.nx, r.modes.ny);
    let mut m = vec![Complex64::new(0.0, 0.0); nx * ny];
    let mut half = vec![None; nx * ny];
    for (k, (a, b)) in r.modes.iter().enumerate() {
        half[a * ny + b] = Some(r.values[r.index(o, i, k)]);
    }
    for a in 0..nx {
        for b in 0..ny {
            let neg = ((nx - a) % nx) * ny + (ny - b) % ny;
            let own = half[a * ny + b];
            let partner = half[neg].map(|c| c.conj());
            m[a * ny + b] = if b == 0 || 2 * b == ny {
                0.5 * (own.unwrap_or_default() + partner.unwrap_or_default())
            } else {
                own.or(partner).unwrap_or_default()
            };
        }
    }
    m
}

/// Inverse DFT by the direct double sum, `1/N` scaling.
pub fn direct_idft(c: &[Complex64], nx: usize, ny: usize) -> Vec<Complex64> {
    let n = (nx * ny) as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let mut s = Complex64::new(0.0, 0.0);
            for a in 0..nx {
                for b in 0..ny {
                    let t = 2.0 * std::f64::consts::PI
                        * ((a * i) as f64 / nx as f64 + (b * j) as f64 / ny as f64);
                    s += c[a * ny + b] * Complex64::new(t.cos(), t.sin());
                }
            }
            out[i * ny + j] = s / n;
        }
    }
    out
}

/// Spatial-domain circular convolution `y_o = Σ_i κ_oi ⊛ h_i` with kernels
/// `κ_oi = idft(multiplier_oi)`.
pub fn circular_conv_oracle(r: &SpectralWeights, h: &[f64]) -> Vec<f64> {
    let (nx, ny) = (r.modes.nx, r.modes.ny);
    let n = nx * ny;
    let mut y = vec![0.0; r.d_out * n];
    for o in 0..r.d_out {
        for i in 0..r.d_in {
            let kernel = direct_idft(&effective_multiplier(r, o, i), nx, ny);
            let hi = &h[i * n..(i + 1) * n];
            for x1 in 0..nx {
                for x2 in 0..ny {
                    let mut s = 0.0;
                    for z1 in 0..nx {
                        for z2 in 0..ny {
                            let k = kernel[z1 * ny + z2];
                            s += k.re * hi[((x1 + nx - z1) % nx) * ny + (x2 + ny - z2) % ny];
                        }
                    }
                    y[o * n + x1 * ny + x2] += s;
                }
            }
        }
    }
    y
}

/// Largest imaginary part of any oracle kernel (should vanish).
pub fn max_kernel_imag(r: &SpectralWeights) -> f64 {
    let (nx, ny) = (r.modes.nx, r.modes.ny);
    let mut worst = 0.0f64;
    for o in 0..r.d_out {
        for i in 0..r.d_in {
            for c in direct_idft(&effective_multiplier(r, o, i), nx, ny) {
                worst = worst.max(c.im.abs());
            }
        }
    }
    worst
}
