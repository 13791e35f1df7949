//! Structured-grid fields, boundary loadings and discrete norms.
//!
//! Layout conventions (used by every other module):
//!
//! * Node `(i, j)` has `i` along x (`0..nx`) and `j` along y (`0..ny`); its
//!   physical coordinate is `(i * extent_x / (nx - 1), j * extent_y / (ny - 1))`.
//! * [`GridField::values`] is channel-major: one row-major `nx × ny` plane per
//!   channel, so the flat index of `(ch, i, j)` is `(ch * nx + i) * ny + j`.
//! * Boundary nodes are traversed counterclockwise starting at the origin
//!   corner: bottom edge `j = 0` left to right, right edge `i = nx - 1`
//!   upwards, top edge `j = ny - 1` right to left, left edge `i = 0` downwards
//!   (stopping before the origin).
//! * L2 norms use the trapezoidal rule on the node grid over the physical
//!   extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node counts and physical side lengths (mm) of a structured grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub extent: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, extent: [f64; 2]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Shape(format!(
                "grid needs at least 2 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(extent[0] > 0.0 && extent[1] > 0.0 && extent.iter().all(|e| e.is_finite())) {
            return Err(Error::Shape(format!("grid extent must be positive, got {extent:?}")));
        }
        Ok(Self { nx, ny, extent })
    }

    /// Unit square with the given node counts.
    pub fn unit(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, [1.0, 1.0])
    }

    pub fn num_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_boundary(&self) -> usize {
        2 * (self.nx + self.ny) - 4
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            self.extent[0] / (self.nx - 1) as f64,
            self.extent[1] / (self.ny - 1) as f64,
        ]
    }

    pub fn area(&self) -> f64 {
        self.extent[0] * self.extent[1]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [i as f64 * h[0], j as f64 * h[1]]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Boundary nodes `(i, j)` in counterclockwise order from the origin.
    pub fn boundary_nodes(&self) -> Vec<(usize, usize)> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = Vec::with_capacity(self.num_boundary());
        for i in 0..nx {
            out.push((i, 0));
        }
        for j in 1..ny {
            out.push((nx - 1, j));
        }
        for i in (0..nx - 1).rev() {
            out.push((i, ny - 1));
        }
        for j in (1..ny - 1).rev() {
            out.push((0, j));
        }
        out
    }

    /// Trapezoidal quadrature weight of every node, in node order.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let axis = |n: usize, k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let mut w = Vec::with_capacity(self.num_nodes());
        for i in 0..self.nx {
            for j in 0..self.ny {
                w.push(h[0] * h[1] * axis(self.nx, i) * axis(self.ny, j));
            }
        }
        w
    }
}

/// A vector-valued function sampled on a structured grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: GridSpec,
    channels: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        assert!(channels >= 1, "a field needs at least one channel");
        Self {
            grid,
            channels,
            values: vec![0.0; channels * grid.num_nodes()],
        }
    }

    pub fn from_values(grid: GridSpec, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Shape("a field needs at least one channel".into()));
        }
        if values.len() != channels * grid.num_nodes() {
            return Err(Error::Shape(format!(
                "expected {} values for {} channels on {}x{}, got {}",
                channels * grid.num_nodes(),
                channels,
                grid.nx,
                grid.ny,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite field value at flat index {k}")));
        }
        Ok(Self {
            grid,
            channels,
            values,
        })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec, channels: usize, f: impl Fn(f64, f64) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(grid, channels);
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let [x, y] = grid.coord(i, j);
                let v = f(x, y);
                debug_assert_eq!(v.len(), channels);
                for (ch, val) in v.into_iter().enumerate() {
                    out.set(ch, i, j, val);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// One channel as a row-major `nx × ny` plane.
    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.grid.num_nodes();
        &self.values[ch * n..(ch + 1) * n]
    }

    #[inline]
    pub fn get(&self, ch: usize, i: usize, j: usize) -> f64 {
        self.values[(ch * self.grid.nx + i) * self.grid.ny + j]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, i: usize, j: usize, v: f64) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        self.values[(ch * nx + i) * ny + j] = v;
    }

    fn check_same_shape(&self, other: &GridField) -> Result<()> {
        if self.grid.nx != other.grid.nx
            || self.grid.ny != other.grid.ny
            || self.channels != other.channels
        {
            return Err(Error::Shape(format!(
                "fields differ: {}x{}x{} vs {}x{}x{}",
                self.grid.nx,
                self.grid.ny,
                self.channels,
                other.grid.nx,
                other.grid.ny,
                other.channels
            )));
        }
        Ok(())
    }

    /// Squared L2(Ω) norm over all channels jointly.
    pub fn l2_norm_sq(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        (0..self.channels)
            .map(|ch| {
                self.channel(ch)
                    .iter()
                    .zip(&w)
                    .map(|(v, w)| w * v * v)
                    .sum::<f64>()
            })
            .sum()
    }

    /// Squared L2(Ω) norm of `self - other`.
    pub fn l2_dist_sq(&self, other: &GridField) -> Result<f64> {
        self.check_same_shape(other)?;
        let w = self.grid.trapezoid_weights();
        let n = self.grid.num_nodes();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(k, (a, b))| w[k % n] * (a - b) * (a - b))
            .sum())
    }

    pub fn scaled(&self, a: f64) -> GridField {
        GridField {
            grid: self.grid,
            channels: self.channels,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Two-component boundary displacement in counterclockwise node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLoading {
    nx: usize,
    ny: usize,
    values: Vec<[f64; 2]>,
}

impl BoundaryLoading {
    pub fn new(nx: usize, ny: usize, values: Vec<[f64; 2]>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Shape(format!("boundary for {nx}x{ny} grid")));
        }
        let expected = 2 * (nx + ny) - 4;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "boundary of a {nx}x{ny} grid has {expected} nodes, got {}",
                values.len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite boundary value".into()));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![[0.0; 2]; grid.num_boundary()],
        }
    }

    /// Evaluates `u(x, y)` at the boundary nodes of `grid`.
    pub fn from_fn(grid: &GridSpec, u: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let values = grid
            .boundary_nodes()
            .into_iter()
            .map(|(i, j)| {
                let [x, y] = grid.coord(i, j);
                u(x, y)
            })
            .collect();
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|v| [a * v[0], a * v[1]]).collect(),
        }
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if (self.nx, self.ny) != (grid.nx, grid.ny) {
            return Err(Error::Shape(format!(
                "boundary sized for {}x{}, grid is {}x{}",
                self.nx, self.ny, grid.nx, grid.ny
            )));
        }
        Ok(())
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Smoothed,
    Synthetic,
}

/// Homogenized stretch and first Piola–Kirchhoff stress of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressStretchRecord {
    pub lambda1: f64,
    pub lambda2: f64,
    /// kPa
    pub p11: f64,
    /// kPa
    pub p22: f64,
}

/// A (boundary loading, displacement field) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub boundary: BoundaryLoading,
    pub field: GridField,
    pub protocol_id: u8,
    pub frame_index: usize,
    /// Loading/unloading cycle the frame belongs to, starting at 0.
    pub cycle: usize,
    pub provenance: Provenance,
    pub record: Option<StressStretchRecord>,
}

impl Sample {
    /// Builds a sample whose boundary is read off the field.
    pub fn from_field(
        field: GridField,
        protocol_id: u8,
        frame_index: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let boundary = extract_boundary(&field)?;
        Ok(Self {
            boundary,
            field,
            protocol_id,
            frame_index,
            cycle: 0,
            provenance,
            record: None,
        })
    }
}

/// Restricts a two-channel field to its boundary nodes.
pub fn extract_boundary(field: &GridField) -> Result<BoundaryLoading> {
    if field.channels() != 2 {
        return Err(Error::Shape(format!(
            "boundary extraction needs 2 channels, got {}",
            field.channels()
        )));
    }
    let grid = field.grid();
    let values = grid
        .boundary_nodes()
        .into_iter()
        .map(|(i, j)| [field.get(0, i, j), field.get(1, i, j)])
        .collect();
    Ok(BoundaryLoading {
        nx: grid.nx,
        ny: grid.ny,
        values,
    })
}

/// Extends a boundary loading to the whole grid, zero at interior nodes.
pub fn zero_pad_embed(b: &BoundaryLoading, grid: &GridSpec) -> Result<GridField> {
    b.check_grid(grid)?;
    let mut out = GridField::zeros(*grid, 2);
    for (&(i, j), v) in grid.boundary_nodes().iter().zip(&b.values) {
        out.set(0, i, j, v[0]);
        out.set(1, i, j, v[1]);
    }
    Ok(out)
}

/// Network input `[x, y, ũ_x, ũ_y]` with the zero-padded loading.
pub fn build_input_features(b: &BoundaryLoading, grid: &GridSpec) -> Result<GridField> {
    let padded = zero_pad_embed(b, grid)?;
    let n = grid.num_nodes();
    let mut values = vec![0.0; 4 * n];
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let [x, y] = grid.coord(i, j);
            let k = grid.node(i, j);
            values[k] = x;
            values[n + k] = y;
        }
    }
    values[2 * n..].copy_from_slice(padded.values());
    GridField::from_values(*grid, 4, values)
}

/// Outcome of a relative error evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelativeError {
    Defined(f64),
    /// The reference field is below the norm floor; the ratio is meaningless.
    Undefined { truth_norm: f64 },
}

impl RelativeError {
    pub fn value(self) -> Option<f64> {
        match self {
            RelativeError::Defined(v) => Some(v),
            RelativeError::Undefined { .. } => None,
        }
    }
}

/// Reference norms below `REL_ERROR_FLOOR * sqrt(area)` are treated as zero.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// `‖pred − truth‖ / ‖truth‖` in L2(Ω), both channels jointly.
pub fn relative_l2_error(pred: &GridField, truth: &GridField) -> Result<RelativeError> {
    let num = pred.l2_dist_sq(truth)?.sqrt();
    let den = truth.l2_norm_sq().sqrt();
    if den < REL_ERROR_FLOOR * truth.grid().area().sqrt() {
        return Ok(RelativeError::Undefined { truth_norm: den });
    }
    Ok(RelativeError::Defined(num / den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(n: usize) -> GridSpec {
        GridSpec::unit(n, n).unwrap()
    }

    #[test]
    fn boundary_counts() {
        let g = unit(21);
        assert_eq!(g.boundary_nodes().len(), 80);
        let b = extract_boundary(&GridField::zeros(unit(5), 2)).unwrap();
        assert_eq!(b.len(), 16);
        assert!(b.values().iter().all(|v| *v == [0.0, 0.0]));
        let g = GridSpec::unit(2, 2).unwrap();
        assert_eq!(g.boundary_nodes(), vec![(0, 0), (1, 0), (1, 1), (0, 1)]);
    }

    #[test]
    fn boundary_nodes_are_distinct_and_on_boundary() {
        let g = GridSpec::unit(6, 4).unwrap();
        let nodes = g.boundary_nodes();
        let mut sorted = nodes.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), nodes.len());
        assert!(nodes.iter().all(|&(i, j)| g.is_boundary(i, j)));
    }

    #[test]
    fn identity_displacement_boundary_is_coordinates() {
        let g = unit(5);
        let f = GridField::from_fn(g, 2, |x, y| vec![x, y]);
        let b = extract_boundary(&f).unwrap();
        for (&(i, j), v) in g.boundary_nodes().iter().zip(b.values()) {
            assert_eq!(*v, g.coord(i, j));
        }
    }

    #[test]
    fn extract_rejects_wrong_channels() {
        assert!(extract_boundary(&GridField::zeros(unit(3), 3)).is_err());
    }

    #[test]
    fn embed_three_by_three() {
        let g = unit(3);
        let b = BoundaryLoading::new(3, 3, vec![[1.0, 1.0]; 8]).unwrap();
        let f = zero_pad_embed(&b, &g).unwrap();
        assert_eq!(f.get(0, 1, 1), 0.0);
        assert_eq!(f.get(1, 1, 1), 0.0);
        assert_eq!(f.get(0, 0, 2), 1.0);
        let z = zero_pad_embed(&BoundaryLoading::zeros(&g), &g).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embed_size_mismatch() {
        let b = BoundaryLoading::zeros(&unit(4));
        assert!(zero_pad_embed(&b, &unit(5)).is_err());
        assert!(BoundaryLoading::new(3, 3, vec![[0.0; 2]; 7]).is_err());
    }

    #[test]
    fn input_features_layout() {
        let g = GridSpec::new(4, 3, [2.0, 1.0]).unwrap();
        let b = BoundaryLoading::from_fn(&g, |x, y| [x + 1.0, y - 3.0]);
        let f = build_input_features(&b, &g).unwrap();
        assert_eq!(f.channels(), 4);
        assert_eq!(
            [f.get(0, 0, 0), f.get(1, 0, 0), f.get(2, 0, 0), f.get(3, 0, 0)],
            [0.0, 0.0, 1.0, -3.0]
        );
        assert_eq!(f.get(0, 3, 2), 2.0);
        assert_eq!(f.get(1, 3, 2), 1.0);
        let z = build_input_features(&BoundaryLoading::zeros(&g), &g).unwrap();
        assert!(z.channel(2).iter().chain(z.channel(3)).all(|&v| v == 0.0));
        assert_eq!(z.channel(0), f.channel(0));
    }

    #[test]
    fn relative_error_examples() {
        let g = unit(5);
        let truth = GridField::from_fn(g, 2, |x, y| vec![x * x + 0.3, y - x]);
        assert_eq!(
            relative_l2_error(&truth, &truth).unwrap(),
            RelativeError::Defined(0.0)
        );
        let e = relative_l2_error(&truth.scaled(1.1), &truth).unwrap().value().unwrap();
        assert!((e - 0.1).abs() < 1e-12);

        let g2 = unit(2);
        let t = GridField::from_values(g2, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = GridField::zeros(g2, 1);
        let e = relative_l2_error(&p, &t).unwrap().value().unwrap();
        assert!((e - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relative_error_floor() {
        let g = unit(4);
        let z = GridField::zeros(g, 2);
        assert!(matches!(
            relative_l2_error(&z, &z).unwrap(),
            RelativeError::Undefined { .. }
        ));
    }

    #[test]
    fn quadrature_of_one_on_unit_square() {
        let g = unit(7);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-14);
        let ones = GridField::from_fn(g, 2, |_, _| vec![1.0, 1.0]);
        assert!((ones.l2_norm_sq() - 2.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn embed_roundtrip_and_interior_zero(vals in proptest::collection::vec(-5.0f64..5.0, 2 * 20)) {
            let g = GridSpec::new(6, 6, [5.5, 5.5]).unwrap();
            let b = BoundaryLoading::new(6, 6, vals.chunks(2).map(|c| [c[0], c[1]]).collect()).unwrap();
            let f = zero_pad_embed(&b, &g).unwrap();
            prop_assert_eq!(extract_boundary(&f).unwrap(), b);
            for i in 1..5 { for j in 1..5 {
                prop_assert!(f.get(0, i, j).to_bits() == 0 && f.get(1, i, j).to_bits() == 0);
            }}
        }

        #[test]
        fn relative_error_homogeneity(a in -3.0f64..3.0, s in 0.1f64..10.0) {
            let g = GridSpec::new(5, 6, [2.0, 3.0]).unwrap();
            let truth = GridField::from_fn(g, 2, |x, y| vec![s * (x - 0.5 * y), s * (1.0 + x * y)]);
            let e = relative_l2_error(&truth.scaled(a), &truth).unwrap().value().unwrap();
            prop_assert!((e - (a - 1.0).abs()).abs() < 1e-12);
        }

        #[test]
        fn features_linear_in_loading(v1 in proptest::collection::vec(-1.0f64..1.0, 2 * 12),
                                      v2 in proptest::collection::vec(-1.0f64..1.0, 2 * 12),
                                      a in -2.0f64..2.0) {
            let g = GridSpec::unit(4, 4).unwrap();
            let mk = |v: &[f64]| BoundaryLoading::new(4, 4, v.chunks(2).map(|c| [c[0], c[1]]).collect()).unwrap();
            let (b1, b2) = (mk(&v1), mk(&v2));
            let combo: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + y).collect();
            let f1 = build_input_features(&b1, &g).unwrap();
            let f2 = build_input_features(&b2, &g).unwrap();
            let fc = build_input_features(&mk(&combo), &g).unwrap();
            for ch in 2..4 {
                for k in 0..16 {
                    let lhs = fc.channel(ch)[k];
                    let rhs = a * f1.channel(ch)[k] + f2.channel(ch)[k];
                    prop_assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }
}
