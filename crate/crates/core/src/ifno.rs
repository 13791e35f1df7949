//! Implicit Fourier neural operator: lifting, shared-weight residual spectral
//! layers and a two-layer projection, one independent sub-network per
//! displacement component.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, rm, tr};
use crate::grid::{build_input_features, BoundaryLoading, GridField, GridSpec};
use crate::spectral::{ModeSet, SpectralCache, SpectralConv, SpectralWeights};

/// Elementwise activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// `ln(1 + exp(beta z)) / beta`; smooth stand-in for derivative checks.
    Softplus { beta: f64 },
}

impl Activation {
    pub fn smooth() -> Self {
        Activation::Softplus { beta: 100.0 }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus { beta } => {
                let t = beta * z;
                // log1p(exp(t)) without overflow
                (t.max(0.0) + (-t.abs()).exp().ln_1p()) / beta
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus { beta } => {
                let t = beta * z;
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IfnoConfig {
    /// Hidden feature dimension `d`.
    pub width: usize,
    /// Projection hidden width `d_Q`.
    pub proj_width: usize,
    pub k1: usize,
    pub k2: usize,
    pub layers: usize,
    /// Pseudo-time horizon `T`; `dt = T / layers`.
    pub horizon: f64,
    pub activation: Activation,
}

impl Default for IfnoConfig {
    fn default() -> Self {
        Self {
            width: 16,
            proj_width: 64,
            k1: 8,
            k2: 8,
            layers: 12,
            horizon: 1.0,
            activation: Activation::Relu,
        }
    }
}

impl IfnoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.proj_width == 0 {
            return Err(Error::Config("width and proj_width must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if let Activation::Softplus { beta } = self.activation {
            if !(beta > 0.0) {
                return Err(Error::Config("softplus beta must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Trainable parameters of one sub-network. Row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNetParams {
    pub width: usize,
    pub proj_width: usize,
    /// `P`, `d × 4`
    pub lift_w: Vec<f64>,
    /// `p`, `d`
    pub lift_b: Vec<f64>,
    /// `W`, `d × d`, shared by every layer
    pub w: Vec<f64>,
    /// `R`, shared by every layer
    pub r: SpectralWeights,
    /// `c`, `d`, shared by every layer
    pub c: Vec<f64>,
    /// `Q1`, `d_Q × d`
    pub q1_w: Vec<f64>,
    /// `q1`, `d_Q`
    pub q1_b: Vec<f64>,
    /// `Q2`, `1 × d_Q`
    pub q2_w: Vec<f64>,
    /// `q2`
    pub q2_b: f64,
}

/// Names of the parameter blocks in their canonical order.
pub const BLOCK_NAMES: [&str; 9] = ["P", "p", "W", "R", "c", "Q1", "q1", "Q2", "q2"];

impl SubNetParams {
    pub fn zeros(width: usize, proj_width: usize, modes: ModeSet) -> Self {
        Self {
            width,
            proj_width,
            lift_w: vec![0.0; width * 4],
            lift_b: vec![0.0; width],
            w: vec![0.0; width * width],
            r: SpectralWeights::zeros(width, width, modes),
            c: vec![0.0; width],
            q1_w: vec![0.0; proj_width * width],
            q1_b: vec![0.0; proj_width],
            q2_w: vec![0.0; proj_width],
            q2_b: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.width, self.proj_width, self.r.modes.clone())
    }

    /// All blocks as real slices, in [`BLOCK_NAMES`] order. `R` is viewed as
    /// interleaved real/imaginary parts.
    pub fn blocks(&self) -> [&[f64]; 9] {
        [
            &self.lift_w,
            &self.lift_b,
            &self.w,
            self.r.as_real(),
            &self.c,
            &self.q1_w,
            &self.q1_b,
            &self.q2_w,
            std::slice::from_ref(&self.q2_b),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 9] {
        [
            &mut self.lift_w,
            &mut self.lift_b,
            &mut self.w,
            self.r.as_real_mut(),
            &mut self.c,
            &mut self.q1_w,
            &mut self.q1_b,
            &mut self.q2_w,
            std::slice::from_mut(&mut self.q2_b),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Parameters of the full two-component operator.
#[derive(Debug, Clone, PartialEq)]
pub struct IfnoParams {
    pub sub_x: SubNetParams,
    pub sub_y: SubNetParams,
    pub grid: GridSpec,
    pub config: IfnoConfig,
    pub dt: f64,
    pub seed: u64,
}

impl IfnoParams {
    pub fn layers(&self) -> usize {
        self.config.layers
    }

    pub fn modes(&self) -> &ModeSet {
        &self.sub_x.r.modes
    }

    pub fn subnets(&self) -> [&SubNetParams; 2] {
        [&self.sub_x, &self.sub_y]
    }

    pub fn subnets_mut(&mut self) -> [&mut SubNetParams; 2] {
        [&mut self.sub_x, &mut self.sub_y]
    }

    /// Zero-valued structure congruent to `self` (used for gradients).
    pub fn zeros_like(&self) -> Self {
        Self {
            sub_x: self.sub_x.zeros_like(),
            sub_y: self.sub_y.zeros_like(),
            ..self.clone()
        }
    }

    pub fn num_params(&self) -> usize {
        self.sub_x.num_params() + self.sub_y.num_params()
    }

    /// Flattened `(block name, slice)` pairs for both sub-networks.
    pub fn named_blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(18);
        for (tag, sub) in [("x", &self.sub_x), ("y", &self.sub_y)] {
            for (name, b) in BLOCK_NAMES.iter().zip(sub.blocks()) {
                out.push((format!("{tag}.{name}"), b));
            }
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let [x, y] = self.subnets_mut();
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(18);
        out.extend(x.blocks_mut());
        out.extend(y.blocks_mut());
        out
    }

    pub fn is_finite(&self) -> bool {
        self.sub_x.is_finite() && self.sub_y.is_finite()
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if (grid.nx, grid.ny) != (self.grid.nx, self.grid.ny) {
            return Err(Error::Shape(format!(
                "network built for {}x{}, input is {}x{}",
                self.grid.nx, self.grid.ny, grid.nx, grid.ny
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-a..=a)).collect()
}

fn init_subnet(cfg: &IfnoConfig, modes: &ModeSet, rng: &mut ChaCha8Rng) -> SubNetParams {
    let (d, dq) = (cfg.width, cfg.proj_width);
    let a_lift = 1.0 / 4.0;
    let a_w = 1.0 / d as f64;
    let a_r = 1.0 / ((d * cfg.k1 * cfg.k2) as f64).sqrt();
    let a_q2 = 1.0 / dq as f64;
    let mut sub = SubNetParams::zeros(d, dq, modes.clone());
    sub.lift_w = uniform(rng, d * 4, a_lift);
    sub.lift_b = uniform(rng, d, a_lift);
    sub.w = uniform(rng, d * d, a_w);
    sub.r.values = (0..sub.r.values.len())
        .map(|_| Complex64::new(rng.gen_range(-a_r..=a_r), rng.gen_range(-a_r..=a_r)))
        .collect();
    sub.c = uniform(rng, d, a_w);
    sub.q1_w = uniform(rng, dq * d, a_w);
    sub.q1_b = uniform(rng, dq, a_w);
    sub.q2_w = uniform(rng, dq, a_q2);
    sub.q2_b = rng.gen_range(-a_q2..=a_q2);
    sub
}

/// Seeded uniform initialization: `[-1/fan_in, 1/fan_in]` for real blocks and
/// `1/sqrt(d k1 k2)` for the real and imaginary parts of `R`.
pub fn init_params(config: &IfnoConfig, grid: GridSpec, seed: u64) -> Result<IfnoParams> {
    config.validate()?;
    let modes = ModeSet::new(grid.nx, grid.ny, config.k1, config.k2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sub_x = init_subnet(config, &modes, &mut rng);
    let sub_y = init_subnet(config, &modes, &mut rng);
    Ok(IfnoParams {
        sub_x,
        sub_y,
        grid,
        config: *config,
        dt: config.horizon / config.layers as f64,
        seed,
    })
}

/// Copies a trained network into a deeper one with the same horizon.
pub fn shallow_to_deep(params: &IfnoParams, new_layers: usize) -> Result<IfnoParams> {
    if new_layers <= params.config.layers {
        return Err(Error::Config(format!(
            "new depth {new_layers} must exceed current depth {}",
            params.config.layers
        )));
    }
    let mut out = params.clone();
    out.config.layers = new_layers;
    out.dt = params.config.horizon / new_layers as f64;
    Ok(out)
}

/// Intermediate state of one sub-network forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `L + 1` hidden states, each `d × N`
    hidden: Vec<Vec<f64>>,
    /// `L` pre-activations, each `d × N`
    pre: Vec<Vec<f64>>,
    spectral: Vec<SpectralCache>,
    /// projection pre-activation, `d_Q × N`
    proj_pre: Vec<f64>,
}

/// Reusable forward/adjoint machinery for one grid and mode set.
#[derive(Debug)]
pub struct Engine {
    conv: SpectralConv,
    n: usize,
}

impl Engine {
    pub fn new(params: &IfnoParams) -> Self {
        Self {
            conv: SpectralConv::new(params.modes()),
            n: params.grid.num_nodes(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub(crate) fn lift(&self, sub: &SubNetParams, features: &[f64], h: &mut [f64]) {
        let n = self.n;
        for (o, row) in h.chunks_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v = sub.lift_b[o]);
        }
        gemm(sub.width, 4, n, 1.0, rm(&sub.lift_w, 4), rm(features, n), 1.0, h, n as isize, 1);
    }

    /// Pre-activation `W h + K(h) + c` into `z`.
    fn pre_activation(&self, sub: &SubNetParams, h: &[f64], z: &mut [f64]) -> SpectralCache {
        let n = self.n;
        let cache = self.conv.forward(&sub.r, h, z);
        let d = sub.width;
        gemm(d, d, n, 1.0, rm(&sub.w, d), rm(h, n), 1.0, z, n as isize, 1);
        for (zo, &c) in z.chunks_mut(n).zip(&sub.c) {
            zo.iter_mut().for_each(|v| *v += c);
        }
        cache
    }

    pub(crate) fn layer(&self, sub: &SubNetParams, act: Activation, dt: f64, h: &[f64], out: &mut [f64]) {
        let mut z = vec![0.0; h.len()];
        self.pre_activation(sub, h, &mut z);
        for ((o, &hv), &zv) in out.iter_mut().zip(h).zip(&z) {
            *o = hv + dt * act.apply(zv);
        }
    }

    pub(crate) fn project(&self, sub: &SubNetParams, act: Activation, h: &[f64], out: &mut [f64]) -> Vec<f64> {
        let n = self.n;
        let (d, dq) = (sub.width, sub.proj_width);
        let mut a = vec![0.0; dq * n];
        for (aq, &b) in a.chunks_mut(n).zip(&sub.q1_b) {
            aq.iter_mut().for_each(|v| *v = b);
        }
        gemm(dq, d, n, 1.0, rm(&sub.q1_w, d), rm(h, n), 1.0, &mut a, n as isize, 1);
        out.iter_mut().for_each(|v| *v = sub.q2_b);
        for (aq, &w2) in a.chunks(n).zip(&sub.q2_w) {
            for (ov, &av) in out.iter_mut().zip(aq) {
                *ov += w2 * act.apply(av);
            }
        }
        a
    }

    /// Sub-network forward pass on `4 × N` input features; returns `N` outputs.
    pub fn forward_subnet(
        &self,
        sub: &SubNetParams,
        layers: usize,
        dt: f64,
        act: Activation,
        features: &[f64],
        record: bool,
    ) -> (Vec<f64>, Option<Tape>) {
        let n = self.n;
        let dn = sub.width * n;
        let mut h = vec![0.0; dn];
        self.lift(sub, features, &mut h);
        let mut tape = record.then(|| Tape {
            hidden: Vec::with_capacity(layers + 1),
            pre: Vec::with_capacity(layers),
            spectral: Vec::with_capacity(layers),
            proj_pre: Vec::new(),
        });
        let mut z = vec![0.0; dn];
        for _ in 0..layers {
            let cache = self.pre_activation(sub, &h, &mut z);
            let mut next = h.clone();
            for (nv, &zv) in next.iter_mut().zip(&z) {
                *nv += dt * act.apply(zv);
            }
            if let Some(t) = tape.as_mut() {
                t.hidden.push(std::mem::replace(&mut h, next));
                t.pre.push(z.clone());
                t.spectral.push(cache);
            } else {
                h = next;
            }
        }
        let mut out = vec![0.0; n];
        let a = self.project(sub, act, &h, &mut out);
        if let Some(t) = tape.as_mut() {
            t.hidden.push(h);
            t.proj_pre = a;
        }
        (out, tape)
    }

    /// Reverse pass of [`Engine::forward_subnet`]: accumulates parameter
    /// gradients for output cotangent `grad_out` (length `N`).
    pub fn backward_subnet(
        &self,
        sub: &SubNetParams,
        dt: f64,
        act: Activation,
        features: &[f64],
        tape: &Tape,
        grad_out: &[f64],
        grad: &mut SubNetParams,
    ) {
        let n = self.n;
        let (d, dq) = (sub.width, sub.proj_width);
        let layers = tape.pre.len();
        let h_last = &tape.hidden[layers];

        // projection
        grad.q2_b += grad_out.iter().sum::<f64>();
        let mut gh = vec![0.0; d * n];
        let mut ga = vec![0.0; dq * n];
        for (q, gq) in ga.chunks_mut(n).enumerate() {
            let aq = &tape.proj_pre[q * n..(q + 1) * n];
            let w2 = sub.q2_w[q];
            let mut g_q2 = 0.0;
            for k in 0..n {
                g_q2 += grad_out[k] * act.apply(aq[k]);
                gq[k] = grad_out[k] * w2 * act.derivative(aq[k]);
            }
            grad.q2_w[q] += g_q2;
            grad.q1_b[q] += gq.iter().sum::<f64>();
        }
        gemm(dq, n, d, 1.0, rm(&ga, n), tr(h_last, n), 1.0, &mut grad.q1_w, d as isize, 1);
        gemm(d, dq, n, 1.0, tr(&sub.q1_w, d), rm(&ga, n), 0.0, &mut gh, n as isize, 1);

        // shared layers, last to first
        let mut gz = vec![0.0; d * n];
        for l in (0..layers).rev() {
            let z = &tape.pre[l];
            let h = &tape.hidden[l];
            for ((g, &zv), &ghv) in gz.iter_mut().zip(z).zip(&gh) {
                *g = dt * ghv * act.derivative(zv);
            }
            // gh stays as the identity path; add Wᵀ z̄ and Kᵀ z̄
            for (gc, go) in grad.c.iter_mut().zip(gz.chunks(n)) {
                *gc += go.iter().sum::<f64>();
            }
            gemm(d, n, d, 1.0, rm(&gz, n), tr(h, n), 1.0, &mut grad.w, d as isize, 1);
            gemm(d, d, n, 1.0, tr(&sub.w, d), rm(&gz, n), 1.0, &mut gh, n as isize, 1);
            self.conv
                .backward(&sub.r, &tape.spectral[l], &gz, &mut gh, &mut grad.r.values);
        }

        // lifting
        for (gb, go) in grad.lift_b.iter_mut().zip(gh.chunks(n)) {
            *gb += go.iter().sum::<f64>();
        }
        gemm(d, n, 4, 1.0, rm(&gh, n), tr(features, n), 1.0, &mut grad.lift_w, 4, 1);
    }

    /// Full operator output (`2 × N`, channel-major).
    pub fn forward(&self, params: &IfnoParams, features: &[f64]) -> Vec<f64> {
        let act = params.config.activation;
        let mut out = Vec::with_capacity(2 * self.n);
        for sub in params.subnets() {
            let (u, _) = self.forward_subnet(sub, params.config.layers, params.dt, act, features, false);
            out.extend_from_slice(&u);
        }
        out
    }
}

fn check_channels(f: &GridField, expected: usize, what: &str) -> Result<()> {
    if f.channels() != expected {
        return Err(Error::Shape(format!(
            "{what} expects {expected} channels, got {}",
            f.channels()
        )));
    }
    Ok(())
}

fn subnet_engine(sub: &SubNetParams, grid: &GridSpec) -> Result<Engine> {
    if (sub.r.modes.nx, sub.r.modes.ny) != (grid.nx, grid.ny) {
        return Err(Error::Shape(format!(
            "parameters built for {}x{}, field is {}x{}",
            sub.r.modes.nx, sub.r.modes.ny, grid.nx, grid.ny
        )));
    }
    Ok(Engine {
        conv: SpectralConv::new(&sub.r.modes),
        n: grid.num_nodes(),
    })
}

/// Pointwise lifting `h = P f + p` of the 4-channel input features.
pub fn lift(features: &GridField, sub: &SubNetParams) -> Result<GridField> {
    check_channels(features, 4, "lift")?;
    let grid = *features.grid();
    let engine = subnet_engine(sub, &grid)?;
    let mut h = vec![0.0; sub.width * grid.num_nodes()];
    engine.lift(sub, features.values(), &mut h);
    GridField::from_values(grid, sub.width, h)
}

/// One shared residual layer `h + dt σ(W h + K(h) + c)`.
pub fn layer_step(h: &GridField, sub: &SubNetParams, act: Activation, dt: f64) -> Result<GridField> {
    check_channels(h, sub.width, "layer_step")?;
    let grid = *h.grid();
    let engine = subnet_engine(sub, &grid)?;
    let mut out = vec![0.0; h.values().len()];
    engine.layer(sub, act, dt, h.values(), &mut out);
    GridField::from_values(grid, sub.width, out)
}

/// Pointwise projection `Q2 σ(Q1 h + q1) + q2` to one channel.
pub fn project(h: &GridField, sub: &SubNetParams, act: Activation) -> Result<GridField> {
    check_channels(h, sub.width, "project")?;
    let grid = *h.grid();
    let engine = subnet_engine(sub, &grid)?;
    let mut out = vec![0.0; grid.num_nodes()];
    engine.project(sub, act, h.values(), &mut out);
    GridField::from_values(grid, 1, out)
}

/// Predicted displacement field for a boundary loading.
pub fn forward(b: &BoundaryLoading, params: &IfnoParams) -> Result<GridField> {
    params.check_grid(&params.grid)?;
    let (nx, ny) = b.dims();
    params.check_grid(&GridSpec { nx, ny, extent: params.grid.extent })?;
    let features = build_input_features(b, &params.grid)?;
    let engine = Engine::new(params);
    let out = engine.forward(params, features.values());
    GridField::from_values(params.grid, 2, out)
}

/// Batch prediction over many loadings, reusing one engine.
pub fn forward_many(loadings: &[&BoundaryLoading], params: &IfnoParams) -> Result<Vec<GridField>> {
    use rayon::prelude::*;
    let engine = Engine::new(params);
    loadings
        .par_iter()
        .map(|b| {
            let features = build_input_features(b, &params.grid)?;
            GridField::from_values(params.grid, 2, engine.forward(params, features.values()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_config() -> IfnoConfig {
        IfnoConfig {
            width: 3,
            proj_width: 4,
            k1: 2,
            k2: 2,
            layers: 2,
            horizon: 1.0,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn default_config_matches_reported_architecture() {
        let c = IfnoConfig::default();
        assert_eq!((c.width, c.k1, c.k2, c.layers), (16, 8, 8, 12));
        assert_eq!(c.activation, Activation::Relu);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let g = GridSpec::unit(9, 9).unwrap();
        let a = init_params(&IfnoConfig::default(), g, 7).unwrap();
        let b = init_params(&IfnoConfig::default(), g, 7).unwrap();
        let c = init_params(&IfnoConfig::default(), g, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.dt - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(a.named_blocks().len(), 18);
    }

    #[test]
    fn init_rejects_bad_dims() {
        let g = GridSpec::unit(9, 9).unwrap();
        let mut c = small_config();
        c.layers = 0;
        assert!(init_params(&c, g, 0).is_err());
        let mut c = small_config();
        c.k1 = 20;
        assert!(init_params(&c, g, 0).is_err());
    }

    #[test]
    fn lift_examples() {
        let g = GridSpec::unit(4, 3).unwrap();
        let modes = ModeSet::new(4, 3, 1, 1).unwrap();
        let feats = build_input_features(&BoundaryLoading::zeros(&g), &g).unwrap();
        let sub = SubNetParams::zeros(2, 2, modes.clone());
        assert!(lift(&feats, &sub).unwrap().values().iter().all(|&v| v == 0.0));

        let mut sub = SubNetParams::zeros(2, 2, modes.clone());
        sub.lift_b = vec![1.0, 1.0];
        let zero_feats = GridField::zeros(g, 4);
        assert!(lift(&zero_feats, &sub).unwrap().values().iter().all(|&v| v == 1.0));

        let mut sub = SubNetParams::zeros(1, 1, modes);
        sub.lift_w = vec![1.0, 0.0, 0.0, 0.0];
        let h = lift(&feats, &sub).unwrap();
        assert_eq!(h.channel(0), feats.channel(0));
        assert!(lift(&GridField::zeros(g, 3), &sub).is_err());
    }

    #[test]
    fn layer_step_examples() {
        let g = GridSpec::unit(5, 5).unwrap();
        let cfg = small_config();
        let p = init_params(&cfg, g, 1).unwrap();
        let h = GridField::from_fn(g, 3, |x, y| vec![x, y, x * y - 0.2]);
        let same = layer_step(&h, &p.sub_x, Activation::Relu, 0.0).unwrap();
        assert_eq!(same, h);

        let zero = SubNetParams::zeros(3, 4, p.sub_x.r.modes.clone());
        assert_eq!(layer_step(&h, &zero, Activation::Relu, 0.3).unwrap(), h);

        // constant h = 1, W = 2, R = 0, c = -1, dt = 0.5 -> 1.5 everywhere
        let g2 = GridSpec::unit(2, 2).unwrap();
        let mut s = SubNetParams::zeros(1, 1, ModeSet::new(2, 2, 1, 1).unwrap());
        s.w = vec![2.0];
        s.c = vec![-1.0];
        let h1 = GridField::from_fn(g2, 1, |_, _| vec![1.0]);
        let out = layer_step(&h1, &s, Activation::Relu, 0.5).unwrap();
        assert!(out.values().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn layer_step_increment_bound() {
        let g = GridSpec::unit(6, 6).unwrap();
        let p = init_params(&small_config(), g, 3).unwrap();
        let h = GridField::from_fn(g, 3, |x, y| vec![x - y, 2.0 * y, (x + y).sin()]);
        // sup |σ(pre)| from a step with dt = 1 (increment equals σ(pre))
        let unit = layer_step(&h, &p.sub_x, Activation::Relu, 1.0).unwrap();
        let sup = unit.max_abs_diff(&h);
        for dt in [1e-1, 1e-3, 1e-6] {
            let s = layer_step(&h, &p.sub_x, Activation::Relu, dt).unwrap();
            let hmax = h.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            // rounding of h + dt·σ is bounded by a few ulps of |h|
            assert!(s.max_abs_diff(&h) <= dt * sup * (1.0 + 1e-9) + 4.0 * f64::EPSILON * hmax);
        }
    }

    #[test]
    fn project_examples() {
        let g = GridSpec::unit(3, 3).unwrap();
        let modes = ModeSet::new(3, 3, 1, 1).unwrap();
        let h = GridField::from_fn(g, 2, |x, y| vec![x + 1.0, y - 4.0]);
        let mut s = SubNetParams::zeros(2, 3, modes.clone());
        s.q1_w = vec![1.0; 6];
        assert!(project(&h, &s, Activation::Relu).unwrap().values().iter().all(|&v| v == 0.0));
        s.q2_b = 3.7;
        assert!(project(&h, &s, Activation::Relu).unwrap().values().iter().all(|&v| v == 3.7));

        let mut s = SubNetParams::zeros(1, 1, modes);
        s.q1_w = vec![1.0];
        s.q2_w = vec![1.0];
        let neg = GridField::from_fn(g, 1, |_, _| vec![-2.0]);
        assert!(project(&neg, &s, Activation::Relu).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_projection_gives_zero_field() {
        let g = GridSpec::new(7, 7, [5.5, 5.5]).unwrap();
        let mut p = init_params(&small_config(), g, 5).unwrap();
        for sub in p.subnets_mut() {
            sub.q2_w.iter_mut().for_each(|v| *v = 0.0);
            sub.q2_b = 0.0;
        }
        let b = BoundaryLoading::from_fn(&g, |x, y| [0.1 * x, -0.2 * y]);
        let u = forward(&b, &p).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_deterministic_and_composes() {
        let g = GridSpec::new(6, 5, [2.0, 1.5]).unwrap();
        let mut cfg = small_config();
        cfg.layers = 1;
        let p = init_params(&cfg, g, 11).unwrap();
        let b = BoundaryLoading::from_fn(&g, |x, y| [0.3 * x + 0.1, 0.2 * y * x]);
        let u1 = forward(&b, &p).unwrap();
        let u2 = forward(&b, &p).unwrap();
        assert_eq!(u1.values(), u2.values());

        let f = build_input_features(&b, &g).unwrap();
        for (ch, sub) in p.subnets().into_iter().enumerate() {
            let h0 = lift(&f, sub).unwrap();
            let h1 = layer_step(&h0, sub, Activation::Relu, p.dt).unwrap();
            let u = project(&h1, sub, Activation::Relu).unwrap();
            assert_eq!(u.channel(0), u1.channel(ch));
        }
    }

    #[test]
    fn subnet_order_is_irrelevant() {
        let g = GridSpec::unit(6, 6).unwrap();
        let p = init_params(&small_config(), g, 2).unwrap();
        let b = BoundaryLoading::from_fn(&g, |x, y| [x * y, x - y]);
        let u = forward(&b, &p).unwrap();
        let mut swapped = p.clone();
        std::mem::swap(&mut swapped.sub_x, &mut swapped.sub_y);
        let v = forward(&b, &swapped).unwrap();
        assert_eq!(u.channel(0), v.channel(1));
        assert_eq!(u.channel(1), v.channel(0));
    }

    #[test]
    fn shallow_to_deep_copies_parameters() {
        let g = GridSpec::unit(7, 7).unwrap();
        let mut cfg = small_config();
        cfg.layers = 6;
        let p = init_params(&cfg, g, 4).unwrap();
        let q = shallow_to_deep(&p, 12).unwrap();
        assert_eq!(q.sub_x, p.sub_x);
        assert_eq!(q.sub_y, p.sub_y);
        assert_eq!(q.config.layers, 12);
        assert!((q.dt - p.dt / 2.0).abs() < 1e-16);
        assert!(shallow_to_deep(&q, 12).is_err());
        assert!(shallow_to_deep(&q, 3).is_err());
    }

    #[test]
    fn softplus_is_smooth_relu() {
        let s = Activation::smooth();
        assert!((s.apply(1.0) - 1.0).abs() < 1e-40_f64.max(1e-12));
        assert!(s.apply(-1.0) < 1e-40);
        assert!((s.apply(0.0) - std::f64::consts::LN_2 / 100.0).abs() < 1e-15);
        let h = 1e-6;
        for z in [-0.03, -0.001, 0.0, 0.002, 0.5] {
            let fd = (s.apply(z + h) - s.apply(z - h)) / (2.0 * h);
            assert!((fd - s.derivative(z)).abs() < 1e-6);
        }
        assert!(s.apply(1000.0).is_finite());
    }

    fn random_loading(g: &GridSpec, rng: &mut ChaCha8Rng, scale: f64) -> BoundaryLoading {
        let values = (0..g.num_boundary())
            .map(|_| [scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0)])
            .collect();
        BoundaryLoading::new(g.nx, g.ny, values).unwrap()
    }

    #[test]
    fn positive_homogeneity_without_biases() {
        let g = GridSpec::unit(7, 7).unwrap();
        let mut p = init_params(&small_config(), g, 11).unwrap();
        for sub in p.subnets_mut() {
            sub.lift_b.iter_mut().for_each(|v| *v = 0.0);
            sub.c.iter_mut().for_each(|v| *v = 0.0);
            sub.q1_b.iter_mut().for_each(|v| *v = 0.0);
            sub.q2_b = 0.0;
            // coordinate channels are not scaled with the loading
            for row in sub.lift_w.chunks_mut(4) {
                row[0] = 0.0;
                row[1] = 0.0;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_loading(&g, &mut rng, 1.0);
        let u = forward(&b, &p).unwrap();
        for alpha in [0.1, 2.5, 40.0] {
            let ua = forward(&b.scaled(alpha), &p).unwrap();
            assert!(ua.max_abs_diff(&u.scaled(alpha)) < 1e-10 * alpha.max(1.0));
        }
    }

    /// Largest observed `||G[b1] - G[b2]|| / ||b1 - b2||` over random pairs.
    fn empirical_lipschitz(p: &IfnoParams, pairs: usize, seed: u64) -> f64 {
        let g = p.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let b1 = random_loading(&g, &mut rng, 0.5);
            let b2 = random_loading(&g, &mut rng, 0.5);
            let num = forward(&b1, p).unwrap().l2_dist_sq(&forward(&b2, p).unwrap()).unwrap().sqrt();
            let den: f64 = b1
                .values()
                .iter()
                .zip(b2.values())
                .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(num / den);
        }
        worst
    }

    #[test]
    fn lipschitz_ratio_regression() {
        let g = GridSpec::unit(9, 9).unwrap();
        let p = init_params(&small_config(), g, 21).unwrap();
        let k = empirical_lipschitz(&p, 20, 5);
        assert!(k.is_finite() && k > 0.0);
        assert!((k - RECORDED_LIPSCHITZ).abs() <= 1e-6 * RECORDED_LIPSCHITZ, "{k:.12e}");
    }

    const RECORDED_LIPSCHITZ: f64 = 6.918757571792e-4;

    #[test]
    fn depth_refinement_drift_shrinks() {
        let g = GridSpec::unit(9, 9).unwrap();
        let mut cfg = small_config();
        cfg.layers = 8;
        let p8 = init_params(&cfg, g, 6).unwrap();
        let b = BoundaryLoading::from_fn(&g, |x, y| [0.3 * x * y, 0.2 * (x - y)]);
        let at = |l: usize| {
            let p = if l == 8 { p8.clone() } else { shallow_to_deep(&p8, l).unwrap() };
            forward(&b, &p).unwrap()
        };
        let coarse = at(16).l2_dist_sq(&at(8)).unwrap().sqrt();
        let fine = at(64).l2_dist_sq(&at(32)).unwrap().sqrt();
        assert!(fine < coarse, "{fine} vs {coarse}");
    }
}
