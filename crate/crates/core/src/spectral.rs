//! 2D discrete Fourier transforms and the truncated spectral convolution.
//!
//! Convention: the forward transform is the unnormalized sum
//! `Ĥ[a, b] = Σ h[i, j] exp(-2πi (a i / nx + b j / ny))` and the inverse is
//! scaled by `1 / (nx ny)`.
//!
//! Retained modes follow the real-input layout: rows `0..k1` and
//! `nx-k1..nx` (the lowest positive and negative x-frequencies) crossed with
//! columns `0..k2` of the half spectrum (`k2` is clamped to `ny/2 + 1`).
//! Weights live only on this half spectrum. On reconstruction every retained
//! mode with `0 < b < ny/2` is mirrored to its conjugate partner and the real
//! part is taken, so outputs are real by construction.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::linalg::{gemm, rm};

/// Cached FFT plans for one grid size.
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.nx, self.ny)
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Unnormalized forward transform of one row-major plane, in place.
    pub fn forward(&self, plane: &mut [Complex64]) {
        self.apply(plane, &self.fwd_y, &self.fwd_x);
    }

    /// Unnormalized inverse transform (no `1/N` factor), in place.
    pub fn inverse_unscaled(&self, plane: &mut [Complex64]) {
        self.apply(plane, &self.inv_y, &self.inv_x);
    }

    fn apply(&self, plane: &mut [Complex64], along_y: &Arc<dyn Fft<f64>>, along_x: &Arc<dyn Fft<f64>>) {
        let (nx, ny) = (self.nx, self.ny);
        debug_assert_eq!(plane.len(), nx * ny);
        // rows are contiguous along y
        along_y.process(plane);
        let mut col = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = plane[i * ny + j];
            }
            along_x.process(&mut col);
            for i in 0..nx {
                plane[i * ny + j] = col[i];
            }
        }
    }
}

/// Full complex spectrum (or complex samples) of a multi-channel field,
/// channel-major with row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub nx: usize,
    pub ny: usize,
    pub channels: usize,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(nx: usize, ny: usize, channels: usize) -> Self {
        Self {
            nx,
            ny,
            channels,
            values: vec![Complex64::new(0.0, 0.0); nx * ny * channels],
        }
    }

    #[inline]
    pub fn get(&self, ch: usize, a: usize, b: usize) -> Complex64 {
        self.values[(ch * self.nx + a) * self.ny + b]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, a: usize, b: usize, v: Complex64) {
        self.values[(ch * self.nx + a) * self.ny + b] = v;
    }

    /// Real parts as a field on `grid`.
    pub fn real_part(&self, grid: GridSpec) -> Result<GridField> {
        GridField::from_values(grid, self.channels, self.values.iter().map(|c| c.re).collect())
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }
}

/// Forward 2D DFT of every channel.
pub fn dft2(field: &GridField) -> ComplexField {
    let g = field.grid();
    let fft = Fft2::new(g.nx, g.ny);
    let mut out = ComplexField {
        nx: g.nx,
        ny: g.ny,
        channels: field.channels(),
        values: field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    };
    for plane in out.values.chunks_mut(g.nx * g.ny) {
        fft.forward(plane);
    }
    out
}

/// Inverse 2D DFT of every channel, scaled by `1 / (nx ny)`.
pub fn idft2(coeffs: &ComplexField) -> ComplexField {
    let fft = Fft2::new(coeffs.nx, coeffs.ny);
    let scale = 1.0 / (coeffs.nx * coeffs.ny) as f64;
    let mut out = coeffs.clone();
    for plane in out.values.chunks_mut(coeffs.nx * coeffs.ny) {
        fft.inverse_unscaled(plane);
        plane.iter_mut().for_each(|c| *c *= scale);
    }
    out
}

/// The set of retained low-frequency modes for a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSet {
    pub nx: usize,
    pub ny: usize,
    pub k1: usize,
    pub k2: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl ModeSet {
    pub fn new(nx: usize, ny: usize, k1: usize, k2: usize) -> Result<Self> {
        if k1 == 0 || k2 == 0 || k1 > nx || k2 > ny {
            return Err(Error::Config(format!(
                "mode counts must satisfy 1 <= k1 <= nx, 1 <= k2 <= ny; got k1={k1}, k2={k2} on {nx}x{ny}"
            )));
        }
        let mut rows: Vec<usize> = (0..k1).chain(nx.saturating_sub(k1)..nx).collect();
        rows.sort_unstable();
        rows.dedup();
        let cols = (0..k2.min(ny / 2 + 1)).collect();
        Ok(Self {
            nx,
            ny,
            k1,
            k2,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of every retained mode, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .flat_map(move |&a| self.cols.iter().map(move |&b| (a, b)))
    }

    /// Flat plane index of every retained mode.
    pub fn plane_indices(&self) -> Vec<usize> {
        self.iter().map(|(a, b)| a * self.ny + b).collect()
    }

    /// Plane index of the conjugate partner, if the mode is mirrored.
    pub fn mirror_indices(&self) -> Vec<Option<usize>> {
        self.iter()
            .map(|(a, b)| {
                if b > 0 && 2 * b != self.ny {
                    Some(((self.nx - a) % self.nx) * self.ny + (self.ny - b))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Multiplicity of each retained mode in the real reconstruction.
    pub fn weights(&self) -> Vec<f64> {
        self.mirror_indices()
            .iter()
            .map(|m| if m.is_some() { 2.0 } else { 1.0 })
            .collect()
    }
}

/// Complex spectral weights `R[out][in][mode]` on the retained modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights {
    pub d_out: usize,
    pub d_in: usize,
    pub modes: ModeSet,
    pub values: Vec<Complex64>,
}

impl SpectralWeights {
    pub fn zeros(d_out: usize, d_in: usize, modes: ModeSet) -> Self {
        let n = d_out * d_in * modes.len();
        Self {
            d_out,
            d_in,
            modes,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, m: usize) -> usize {
        (o * self.d_in + i) * self.modes.len() + m
    }

    /// Real view (interleaved re/im) for optimizers and serialization.
    pub fn as_real(&self) -> &[f64] {
        complex_as_real(&self.values)
    }

    pub fn as_real_mut(&mut self) -> &mut [f64] {
        complex_as_real_mut(&mut self.values)
    }
}

pub(crate) fn complex_as_real(v: &[Complex64]) -> &[f64] {
    // SAFETY: Complex<f64> is #[repr(C)] with fields (re, im).
    unsafe { std::slice::from_raw_parts(v.as_ptr() as *const f64, v.len() * 2) }
}

pub(crate) fn complex_as_real_mut(v: &mut [Complex64]) -> &mut [f64] {
    // SAFETY: Complex<f64> is #[repr(C)] with fields (re, im).
    unsafe { std::slice::from_raw_parts_mut(v.as_mut_ptr() as *mut f64, v.len() * 2) }
}

/// Retained spectra of the input, kept for the adjoint pass.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    /// `[in][mode]` real parts
    re: Vec<f64>,
    /// `[in][mode]` imaginary parts
    im: Vec<f64>,
}

/// Partial DFT restricted to the retained modes, evaluated as dense matrix
/// products (the retained set is small compared with the grid).
#[derive(Debug)]
struct PartialDft {
    nx: usize,
    ny: usize,
    kr: usize,
    kc: usize,
    /// `ny × 2kc`: `[cos | −sin](2π b j / ny)`
    ey_fwd: Vec<f64>,
    /// `2kr × nx`: `[cos; −sin](2π a i / nx)`
    ex_fwd: Vec<f64>,
    /// `2nx × kr`: `[cos; sin](2π a i / nx)`
    ex_inv: Vec<f64>,
    /// `2kc × ny`: `[s_b cos; −s_b sin](2π b j / ny)` with `s_b = w_b / N`
    ey_inv_weighted: Vec<f64>,
    /// same with `s_b = 1`
    ey_inv_plain: Vec<f64>,
}

impl PartialDft {
    fn new(modes: &ModeSet) -> Self {
        use std::f64::consts::PI;
        let (nx, ny) = (modes.nx, modes.ny);
        let (kr, kc) = (modes.rows.len(), modes.cols.len());
        let n = (nx * ny) as f64;
        let mut ey_fwd = vec![0.0; ny * 2 * kc];
        let mut ey_inv_weighted = vec![0.0; 2 * kc * ny];
        let mut ey_inv_plain = vec![0.0; 2 * kc * ny];
        for (bi, &b) in modes.cols.iter().enumerate() {
            let w = if b > 0 && 2 * b != ny { 2.0 } else { 1.0 };
            for j in 0..ny {
                let t = 2.0 * PI * ((b * j) % ny) as f64 / ny as f64;
                let (s, c) = t.sin_cos();
                ey_fwd[j * 2 * kc + bi] = c;
                ey_fwd[j * 2 * kc + kc + bi] = -s;
                ey_inv_weighted[bi * ny + j] = w / n * c;
                ey_inv_weighted[(kc + bi) * ny + j] = -w / n * s;
                ey_inv_plain[bi * ny + j] = c;
                ey_inv_plain[(kc + bi) * ny + j] = -s;
            }
        }
        let mut ex_fwd = vec![0.0; 2 * kr * nx];
        let mut ex_inv = vec![0.0; 2 * nx * kr];
        for (ai, &a) in modes.rows.iter().enumerate() {
            for i in 0..nx {
                let t = 2.0 * PI * ((a * i) % nx) as f64 / nx as f64;
                let (s, c) = t.sin_cos();
                ex_fwd[ai * nx + i] = c;
                ex_fwd[(kr + ai) * nx + i] = -s;
                ex_inv[i * kr + ai] = c;
                ex_inv[(nx + i) * kr + ai] = s;
            }
        }
        Self {
            nx,
            ny,
            kr,
            kc,
            ey_fwd,
            ex_fwd,
            ex_inv,
            ey_inv_weighted,
            ey_inv_plain,
        }
    }

    /// Retained forward coefficients of `channels` real planes, as separate
    /// `[ch][mode]` real and imaginary arrays.
    fn forward(&self, h: &[f64], channels: usize) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny, kr, kc) = (self.nx, self.ny, self.kr, self.kc);
        let nm = kr * kc;
        // along y: (ch·nx × ny)(ny × 2kc)
        let mut c = vec![0.0; channels * nx * 2 * kc];
        gemm(channels * nx, ny, 2 * kc, 1.0, rm(h, ny), rm(&self.ey_fwd, 2 * kc), 0.0, &mut c, 2 * kc as isize, 1);
        let mut re = vec![0.0; channels * nm];
        let mut im = vec![0.0; channels * nm];
        let mut s = vec![0.0; 2 * kr * 2 * kc];
        for ch in 0..channels {
            let cc = &c[ch * nx * 2 * kc..(ch + 1) * nx * 2 * kc];
            gemm(2 * kr, nx, 2 * kc, 1.0, rm(&self.ex_fwd, nx), rm(cc, 2 * kc), 0.0, &mut s, 2 * kc as isize, 1);
            let (r, i) = (&mut re[ch * nm..(ch + 1) * nm], &mut im[ch * nm..(ch + 1) * nm]);
            for a in 0..kr {
                for b in 0..kc {
                    let pr = s[a * 2 * kc + b];
                    let pi = s[a * 2 * kc + kc + b];
                    let qr = s[(kr + a) * 2 * kc + b];
                    let qi = s[(kr + a) * 2 * kc + kc + b];
                    r[a * kc + b] = pr - qi;
                    i[a * kc + b] = pi + qr;
                }
            }
        }
        (re, im)
    }

    /// `out += Σ_m s_b Re(Y_m e_m(x))` for every channel.
    fn inverse_real(&self, re: &[f64], im: &[f64], channels: usize, weighted: bool, out: &mut [f64], beta: f64) {
        let (nx, ny, kr, kc) = (self.nx, self.ny, self.kr, self.kc);
        let nm = kr * kc;
        let mut y = vec![0.0; kr * 2 * kc];
        let mut t = vec![0.0; 2 * nx * 2 * kc];
        let mut d = vec![0.0; channels * nx * 2 * kc];
        for ch in 0..channels {
            for a in 0..kr {
                y[a * 2 * kc..a * 2 * kc + kc].copy_from_slice(&re[ch * nm + a * kc..ch * nm + (a + 1) * kc]);
                y[a * 2 * kc + kc..(a + 1) * 2 * kc].copy_from_slice(&im[ch * nm + a * kc..ch * nm + (a + 1) * kc]);
            }
            // along x: (2nx × kr)(kr × 2kc)
            gemm(2 * nx, kr, 2 * kc, 1.0, rm(&self.ex_inv, kr), rm(&y, 2 * kc), 0.0, &mut t, 2 * kc as isize, 1);
            let dc = &mut d[ch * nx * 2 * kc..(ch + 1) * nx * 2 * kc];
            for i in 0..nx {
                for b in 0..kc {
                    let cr = t[i * 2 * kc + b];
                    let ci = t[i * 2 * kc + kc + b];
                    let sr = t[(nx + i) * 2 * kc + b];
                    let si = t[(nx + i) * 2 * kc + kc + b];
                    dc[i * 2 * kc + b] = cr - si;
                    dc[i * 2 * kc + kc + b] = ci + sr;
                }
            }
        }
        let ey = if weighted { &self.ey_inv_weighted } else { &self.ey_inv_plain };
        // along y: (ch·nx × 2kc)(2kc × ny)
        gemm(channels * nx, 2 * kc, ny, 1.0, rm(&d, 2 * kc), rm(ey, ny), beta, out, ny as isize, 1);
    }
}

/// Spectral convolution operator bound to a grid and mode set.
#[derive(Debug)]
pub struct SpectralConv {
    dft: PartialDft,
}

impl SpectralConv {
    pub fn new(modes: &ModeSet) -> Self {
        Self {
            dft: PartialDft::new(modes),
        }
    }

    fn n(&self) -> usize {
        self.dft.nx * self.dft.ny
    }

    /// Applies `R` to channel-major input planes `h` (`d_in × N`), writing
    /// `d_out × N` into `out` (overwritten).
    pub fn forward(&self, r: &SpectralWeights, h: &[f64], out: &mut [f64]) -> SpectralCache {
        let n = self.n();
        let nm = r.num_modes();
        debug_assert_eq!(h.len(), r.d_in * n);
        debug_assert_eq!(out.len(), r.d_out * n);
        let (hr, hi) = self.dft.forward(h, r.d_in);
        let mut yr = vec![0.0; r.d_out * nm];
        let mut yi = vec![0.0; r.d_out * nm];
        let mut wr = vec![0.0; nm];
        let mut wi = vec![0.0; nm];
        for o in 0..r.d_out {
            let (yro, yio) = (&mut yr[o * nm..(o + 1) * nm], &mut yi[o * nm..(o + 1) * nm]);
            for i in 0..r.d_in {
                let base = r.index(o, i, 0);
                for (m, w) in r.values[base..base + nm].iter().enumerate() {
                    wr[m] = w.re;
                    wi[m] = w.im;
                }
                let (xr, xi) = (&hr[i * nm..(i + 1) * nm], &hi[i * nm..(i + 1) * nm]);
                for m in 0..nm {
                    yro[m] += wr[m] * xr[m] - wi[m] * xi[m];
                    yio[m] += wr[m] * xi[m] + wi[m] * xr[m];
                }
            }
        }
        self.dft.inverse_real(&yr, &yi, r.d_out, true, out, 0.0);
        SpectralCache { re: hr, im: hi }
    }

    /// Adjoint pass: given `∂L/∂out` (`d_out × N`), accumulates `∂L/∂h` into
    /// `grad_h` and `∂L/∂R` (as `∂/∂Re + i ∂/∂Im`) into `grad_r`.
    pub fn backward(
        &self,
        r: &SpectralWeights,
        cache: &SpectralCache,
        grad_out: &[f64],
        grad_h: &mut [f64],
        grad_r: &mut [Complex64],
    ) {
        let n = self.n() as f64;
        let nm = r.num_modes();
        let kc = self.dft.kc;
        let ny = self.dft.ny;
        // G_o(m) = (w_m / N) DFT(ȳ_o)(m)
        let (mut gr, mut gi) = self.dft.forward(grad_out, r.d_out);
        let scale: Vec<f64> = (0..nm)
            .map(|m| {
                let b = m % kc;
                if b > 0 && 2 * b != ny {
                    2.0 / n
                } else {
                    1.0 / n
                }
            })
            .collect();
        for o in 0..r.d_out {
            for m in 0..nm {
                gr[o * nm + m] *= scale[m];
                gi[o * nm + m] *= scale[m];
            }
        }
        let mut gin_r = vec![0.0; r.d_in * nm];
        let mut gin_i = vec![0.0; r.d_in * nm];
        let (mut wr, mut wi) = (vec![0.0; nm], vec![0.0; nm]);
        let (mut dr, mut di) = (vec![0.0; nm], vec![0.0; nm]);
        for o in 0..r.d_out {
            let (gor, goi) = (&gr[o * nm..(o + 1) * nm], &gi[o * nm..(o + 1) * nm]);
            for i in 0..r.d_in {
                let base = r.index(o, i, 0);
                for (m, w) in r.values[base..base + nm].iter().enumerate() {
                    wr[m] = w.re;
                    wi[m] = w.im;
                }
                let (xr, xi) = (&cache.re[i * nm..(i + 1) * nm], &cache.im[i * nm..(i + 1) * nm]);
                let (ar, ai) = (&mut gin_r[i * nm..(i + 1) * nm], &mut gin_i[i * nm..(i + 1) * nm]);
                for m in 0..nm {
                    // G_o conj(H_i)
                    dr[m] = gor[m] * xr[m] + goi[m] * xi[m];
                    di[m] = goi[m] * xr[m] - gor[m] * xi[m];
                    // conj(R_oi) G_o
                    ar[m] += wr[m] * gor[m] + wi[m] * goi[m];
                    ai[m] += wr[m] * goi[m] - wi[m] * gor[m];
                }
                for (g, (&x, &y)) in grad_r[base..base + nm].iter_mut().zip(dr.iter().zip(&di)) {
                    g.re += x;
                    g.im += y;
                }
            }
        }
        // h̄ += Re(Σ_m G_m e_m(x)), no mirroring
        self.dft.inverse_real(&gin_r, &gin_i, r.d_in, false, grad_h, 1.0);
    }
}

/// Truncated spectral convolution of a field with weights `R`.
pub fn spectral_conv(h: &GridField, r: &SpectralWeights) -> Result<GridField> {
    let g = h.grid();
    if h.channels() != r.d_in {
        return Err(Error::Shape(format!(
            "field has {} channels, weights expect {}",
            h.channels(),
            r.d_in
        )));
    }
    if (g.nx, g.ny) != (r.modes.nx, r.modes.ny) {
        return Err(Error::Shape(format!(
            "weights built for {}x{}, field is {}x{}",
            r.modes.nx, r.modes.ny, g.nx, g.ny
        )));
    }
    let op = SpectralConv::new(&r.modes);
    let mut out = vec![0.0; r.d_out * g.num_nodes()];
    op.forward(r, h.values(), &mut out);
    GridField::from_values(*g, r.d_out, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: GridSpec, ch: usize, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..ch * grid.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridField::from_values(grid, ch, v).unwrap()
    }

    /// Direct O(N²) DFT double sum.
    fn brute_dft(plane: &[f64], nx: usize, ny: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); nx * ny];
        for a in 0..nx {
            for b in 0..ny {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..nx {
                    for j in 0..ny {
                        let ang = -2.0 * std::f64::consts::PI
                            * ((a * i) as f64 / nx as f64 + (b * j) as f64 / ny as f64);
                        s += plane[i * ny + j] * Complex64::from_polar(1.0, ang);
                    }
                }
                out[a * ny + b] = s;
            }
        }
        out
    }

    #[test]
    fn constant_field_spectrum() {
        let g = GridSpec::unit(5, 7).unwrap();
        let f = GridField::from_fn(g, 1, |_, _| vec![2.5]);
        let s = dft2(&f);
        assert!((s.get(0, 0, 0) - Complex64::new(2.5 * 35.0, 0.0)).norm() < 1e-12);
        for a in 0..5 {
            for b in 0..7 {
                if (a, b) != (0, 0) {
                    assert!(s.get(0, a, b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_by_two_matches_brute_force() {
        let g = GridSpec::unit(2, 2).unwrap();
        let f = GridField::from_values(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = dft2(&f);
        let oracle = brute_dft(f.values(), 2, 2);
        // [[10, -2], [-4, 0]]
        for k in 0..4 {
            assert!((s.values[k] - oracle[k]).norm() < 1e-12);
        }
        assert!((oracle[0].re - 10.0).abs() < 1e-12);
        assert!((oracle[1].re + 2.0).abs() < 1e-12);
        assert!((oracle[2].re + 4.0).abs() < 1e-12);
    }

    #[test]
    fn odd_grid_matches_brute_force() {
        let g = GridSpec::unit(5, 6).unwrap();
        let f = random_field(g, 1, 3);
        let s = dft2(&f);
        let oracle = brute_dft(f.values(), 5, 6);
        for k in 0..30 {
            assert!((s.values[k] - oracle[k]).norm() < 1e-11);
        }
    }

    #[test]
    fn inverse_roundtrip_and_parseval() {
        let g = GridSpec::unit(9, 8).unwrap();
        let f = random_field(g, 3, 11);
        let s = dft2(&f);
        let back = idft2(&s);
        assert!(back.max_imag() < 1e-12);
        assert!(back.real_part(g).unwrap().max_abs_diff(&f) < 1e-12);
        let lhs: f64 = f.values().iter().map(|v| v * v).sum();
        let rhs: f64 = s.values.iter().map(|c| c.norm_sqr()).sum::<f64>() / 72.0;
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn zero_coefficients_and_single_mode() {
        let z = idft2(&ComplexField::zeros(4, 4, 1));
        assert!(z.values.iter().all(|c| c.norm() == 0.0));

        let (nx, ny) = (6, 5);
        let mut c = ComplexField::zeros(nx, ny, 1);
        c.set(0, 1, 0, Complex64::new(1.0, 0.0));
        let s = idft2(&c);
        for i in 0..nx {
            for j in 0..ny {
                let expect =
                    (2.0 * std::f64::consts::PI * i as f64 / nx as f64).cos() / (nx * ny) as f64;
                assert!((s.get(0, i, j).re - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mode_set_layout() {
        let m = ModeSet::new(21, 21, 8, 8).unwrap();
        assert_eq!(m.len(), 16 * 8);
        let full = ModeSet::new(4, 4, 4, 4).unwrap();
        assert_eq!(full.len(), 4 * 3);
        assert!(ModeSet::new(4, 4, 5, 1).is_err());
        assert!(ModeSet::new(4, 4, 0, 1).is_err());
    }

    #[test]
    fn zero_weights_give_zero() {
        let g = GridSpec::unit(6, 6).unwrap();
        let r = SpectralWeights::zeros(2, 2, ModeSet::new(6, 6, 2, 2).unwrap());
        let y = spectral_conv(&random_field(g, 2, 1), &r).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_multiplier_full_modes_is_identity() {
        for (nx, ny) in [(4, 4), (5, 7), (8, 6)] {
            let g = GridSpec::unit(nx, ny).unwrap();
            let modes = ModeSet::new(nx, ny, nx, ny).unwrap();
            let mut r = SpectralWeights::zeros(1, 1, modes);
            r.values.iter_mut().for_each(|c| *c = Complex64::new(1.0, 0.0));
            let h = random_field(g, 1, 5);
            let y = spectral_conv(&h, &r).unwrap();
            assert!(y.max_abs_diff(&h) < 1e-10, "{nx}x{ny}");
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let g = GridSpec::unit(4, 4).unwrap();
        let r = SpectralWeights::zeros(2, 2, ModeSet::new(4, 4, 2, 2).unwrap());
        assert!(spectral_conv(&GridField::zeros(g, 3), &r).is_err());
    }

    #[test]
    fn linear_in_input() {
        let g = GridSpec::unit(7, 6).unwrap();
        let modes = ModeSet::new(7, 6, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut r = SpectralWeights::zeros(3, 3, modes);
        r.values
            .iter_mut()
            .for_each(|c| *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let (h1, h2) = (random_field(g, 3, 1), random_field(g, 3, 2));
        let (a, b) = (0.7, -1.3);
        let combo = GridField::from_values(
            g,
            3,
            h1.values().iter().zip(h2.values()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let y1 = spectral_conv(&h1, &r).unwrap();
        let y2 = spectral_conv(&h2, &r).unwrap();
        let yc = spectral_conv(&combo, &r).unwrap();
        for k in 0..yc.values().len() {
            let rhs = a * y1.values()[k] + b * y2.values()[k];
            assert!((yc.values()[k] - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identity() {
        // <conv(h), v> = <h, conv^T(v)> and <∂/∂R> via finite differences
        let g = GridSpec::unit(6, 5).unwrap();
        let modes = ModeSet::new(6, 5, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut r = SpectralWeights::zeros(2, 3, modes.clone());
        r.values
            .iter_mut()
            .for_each(|c| *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = random_field(g, 3, 7);
        let v = random_field(g, 2, 8);
        let op = SpectralConv::new(&modes);
        let mut y = vec![0.0; 2 * 30];
        let cache = op.forward(&r, h.values(), &mut y);
        let mut gh = vec![0.0; 3 * 30];
        let mut gr = vec![Complex64::new(0.0, 0.0); r.values.len()];
        op.backward(&r, &cache, v.values(), &mut gh, &mut gr);
        let lhs: f64 = y.iter().zip(v.values()).map(|(a, b)| a * b).sum();
        let rhs: f64 = h.values().iter().zip(&gh).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);

        let objective = |r: &SpectralWeights| {
            let mut y = vec![0.0; 60];
            op.forward(r, h.values(), &mut y);
            y.iter().zip(v.values()).map(|(a, b)| a * b).sum::<f64>()
        };
        let eps = 1e-6;
        for k in [0, 5, 17, r.values.len() - 1] {
            for (part, analytic) in [(0, gr[k].re), (1, gr[k].im)] {
                let mut rp = r.clone();
                let mut rm = r.clone();
                rp.as_real_mut()[2 * k + part] += eps;
                rm.as_real_mut()[2 * k + part] -= eps;
                let fd = (objective(&rp) - objective(&rm)) / (2.0 * eps);
                assert!((fd - analytic).abs() < 1e-8, "k={k} part={part}: {fd} vs {analytic}");
            }
        }
    }
}
