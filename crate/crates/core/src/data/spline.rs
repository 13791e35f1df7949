//! Not-a-knot cubic splines and separable resampling onto the structured
//! grid.

use nalgebra::{DMatrix, DVector};

use super::tracked::ScatteredSample;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, Sample};

/// Not-a-knot cubic spline through `(knots, values)`, stored by its second
/// derivatives at the knots.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    moments: Vec<f64>,
}

impl CubicSpline {
    pub fn not_a_knot(knots: &[f64], values: &[f64]) -> Result<Self> {
        let n = knots.len();
        if n < 4 {
            return Err(Error::Data(format!("cubic spline needs at least 4 knots, got {n}")));
        }
        if values.len() != n {
            return Err(Error::Shape(format!("{n} knots but {} values", values.len())));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("spline knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        // third derivative continuous across the second and second-to-last knots
        a[(0, 0)] = h[1];
        a[(0, 1)] = -(h[0] + h[1]);
        a[(0, 2)] = h[0];
        for i in 1..n - 1 {
            a[(i, i - 1)] = h[i - 1];
            a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
            a[(i, i + 1)] = h[i];
            rhs[i] = 6.0 * (slope[i] - slope[i - 1]);
        }
        a[(n - 1, n - 3)] = h[n - 2];
        a[(n - 1, n - 2)] = -(h[n - 3] + h[n - 2]);
        a[(n - 1, n - 1)] = h[n - 3];
        let m = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular spline system".into()))?;
        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            moments: m.iter().copied().collect(),
        })
    }

    /// Evaluates the spline; outside the knot range the end pieces extend.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        let i = match self.knots.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - x, x - x0);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        m0 * a * a * a / (6.0 * h)
            + m1 * b * b * b / (6.0 * h)
            + (self.values[i] / h - m0 * h / 6.0) * a
            + (self.values[i + 1] / h - m1 * h / 6.0) * b
    }
}

/// Row-major `at.len() × knots.len()` matrix mapping knot values to spline
/// values at `at`. Points within `1e-12` of a knot copy that knot's value.
pub fn spline_matrix(knots: &[f64], at: &[f64]) -> Result<Vec<f64>> {
    let n = knots.len();
    let span = knots[n - 1] - knots[0];
    let mut out = vec![0.0; at.len() * n];
    let mut unit = vec![0.0; n];
    for k in 0..n {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[k] = 1.0;
        let s = CubicSpline::not_a_knot(knots, &unit)?;
        for (r, &x) in at.iter().enumerate() {
            out[r * n + k] = s.eval(x);
        }
    }
    for (r, &x) in at.iter().enumerate() {
        if let Some(k) = knots.iter().position(|&t| (t - x).abs() <= 1e-12 * span) {
            out[r * n..(r + 1) * n].iter_mut().for_each(|v| *v = 0.0);
            out[r * n + k] = 1.0;
        }
    }
    Ok(out)
}

fn tracking_axes(sample: &ScatteredSample) -> Result<(Vec<f64>, Vec<f64>)> {
    let (tx, ty) = sample.dims;
    if tx < 4 || ty < 4 {
        return Err(Error::Data(format!("tracking grid {tx}x{ty} is too small for cubic splines (need 4 per axis)")));
    }
    if sample.reference.len() != tx * ty || sample.displacement.len() != tx * ty {
        return Err(Error::Shape("sample size does not match its tracking grid".into()));
    }
    let xs = (0..tx)
        .map(|i| (0..ty).map(|j| sample.reference[i * ty + j][0]).sum::<f64>() / ty as f64)
        .collect();
    let ys = (0..ty)
        .map(|j| (0..tx).map(|i| sample.reference[i * ty + j][1]).sum::<f64>() / tx as f64)
        .collect();
    Ok((xs, ys))
}

/// Size of the region covered by the tracking grid's mean column and row
/// positions.
pub fn tracked_extent(sample: &ScatteredSample) -> Result<[f64; 2]> {
    let (xs, ys) = tracking_axes(sample)?;
    Ok([xs[xs.len() - 1] - xs[0], ys[ys.len() - 1] - ys[0]])
}

/// Separable spline interpolation of a tracked sample onto an `nx × ny` grid
/// spanning the tracking grid's mean column and row positions.
pub fn spline_resample(sample: &ScatteredSample, nx: usize, ny: usize) -> Result<Sample> {
    let grid = GridSpec::new(nx, ny, tracked_extent(sample)?)?;
    spline_resample_to(sample, &grid)
}

/// Like [`spline_resample`] but onto a given grid anchored at the first
/// tracked column and row. The grid must not reach past the tracked region.
pub fn spline_resample_to(sample: &ScatteredSample, grid: &GridSpec) -> Result<Sample> {
    let (xs, ys) = tracking_axes(sample)?;
    let (tx, ty) = sample.dims;
    let (nx, ny) = (grid.nx, grid.ny);
    let span = [xs[tx - 1] - xs[0], ys[ty - 1] - ys[0]];
    if grid.extent[0] > span[0] * (1.0 + 1e-12) || grid.extent[1] > span[1] * (1.0 + 1e-12) {
        return Err(Error::Data(format!(
            "target extent {:?} exceeds the tracked region {span:?}",
            grid.extent
        )));
    }
    let grid = *grid;
    let targets_x: Vec<f64> = (0..nx).map(|i| xs[0] + grid.coord(i, 0)[0]).collect();
    let targets_y: Vec<f64> = (0..ny).map(|j| ys[0] + grid.coord(0, j)[1]).collect();
    let sx = spline_matrix(&xs, &targets_x)?;
    let sy = spline_matrix(&ys, &targets_y)?;
    let mut values = vec![0.0; 2 * nx * ny];
    let mut tmp = vec![0.0; nx * ty];
    for c in 0..2 {
        // along x: (nx × tx)(tx × ty)
        for i in 0..nx {
            for j in 0..ty {
                tmp[i * ty + j] = (0..tx).map(|k| sx[i * tx + k] * sample.displacement[k * ty + j][c]).sum();
            }
        }
        // along y: (nx × ty)(ty × ny)
        for i in 0..nx {
            for j in 0..ny {
                values[(c * nx + i) * ny + j] = (0..ty).map(|k| tmp[i * ty + k] * sy[j * ty + k]).sum();
            }
        }
    }
    let field = GridField::from_values(grid, 2, values)?;
    Sample::from_field(field, sample.protocol_id, sample.frame_index, sample.provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tracked::ring_nodes;
    use crate::grid::Provenance;

    fn tracked(dims: (usize, usize), knots_x: &[f64], knots_y: &[f64], u: impl Fn(f64, f64) -> [f64; 2]) -> ScatteredSample {
        let mut reference = Vec::new();
        let mut displacement = Vec::new();
        for &x in knots_x {
            for &y in knots_y {
                reference.push([x, y]);
                displacement.push(u(x, y));
            }
        }
        ScatteredSample {
            dims,
            reference,
            displacement,
            boundary: ring_nodes(dims),
            protocol_id: 1,
            frame_index: 0,
            provenance: Provenance::Original,
        }
    }

    #[test]
    fn reproduces_cubics_in_one_dimension() {
        let knots = [0.0, 0.4, 1.1, 1.5, 2.7, 3.0];
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.3 * x * x * x;
        let s = CubicSpline::not_a_knot(&knots, &knots.map(f)).unwrap();
        for x in [0.0, 0.2, 0.9, 2.0, 2.95, 3.0] {
            assert!((s.eval(x) - f(x)).abs() < 1e-12);
        }
        assert!(CubicSpline::not_a_knot(&knots[..3], &[0.0; 3]).is_err());
    }

    #[test]
    fn on_grid_input_is_reproduced_at_nodes() {
        let g = GridSpec::new(21, 21, [5.5, 5.5]).unwrap();
        let k: Vec<f64> = (0..21).map(|i| g.coord(i, 0)[0]).collect();
        let s = tracked((21, 21), &k, &k, |x, y| [(x * y).sin(), x.exp() - y]);
        let out = spline_resample(&s, 21, 21).unwrap();
        for i in 0..21 {
            for j in 0..21 {
                assert_eq!(out.field.get(0, i, j), s.displacement[i * 21 + j][0]);
                assert_eq!(out.field.get(1, i, j), s.displacement[i * 21 + j][1]);
            }
        }
    }

    #[test]
    fn linear_and_bicubic_reproduction() {
        let kx: Vec<f64> = (0..8).map(|i| 0.3 + 0.7 * i as f64 + 0.05 * (i as f64).sin()).collect();
        let ky: Vec<f64> = (0..8).map(|j| -0.2 + 0.6 * j as f64).collect();
        let lin = |x: f64, y: f64| [0.1 * x - 0.2 * y + 0.3, 0.05 * y];
        let bicubic = |x: f64, y: f64| [x * x * x * y - 0.5 * x * y * y * y + x * y, 0.2 * y * y * y - x * x * y * y];
        for (u, tol) in [(&lin as &dyn Fn(f64, f64) -> [f64; 2], 1e-10), (&bicubic, 1e-8)] {
            let s = tracked((8, 8), &kx, &ky, u);
            let out = spline_resample(&s, 13, 11).unwrap();
            for i in 0..13 {
                for j in 0..11 {
                    let [x, y] = out.field.grid().coord(i, j);
                    let want = u(x + kx[0], y + ky[0]);
                    assert!((out.field.get(0, i, j) - want[0]).abs() < tol);
                    assert!((out.field.get(1, i, j) - want[1]).abs() < tol);
                }
            }
        }
    }

    #[test]
    fn small_tracking_grid_is_rejected() {
        let k = [0.0, 1.0, 2.0];
        let s = tracked((3, 3), &k, &k, |_, _| [0.0, 0.0]);
        assert!(spline_resample(&s, 21, 21).is_err());
    }

    #[test]
    fn resampling_onto_a_common_grid() {
        let k: Vec<f64> = (0..6).map(|i| 1.0 + 0.5 * i as f64).collect();
        let lin = |x: f64, y: f64| [0.2 * x + 0.1, -0.3 * y];
        let s = tracked((6, 6), &k, &k, lin);
        assert_eq!(tracked_extent(&s).unwrap(), [2.5, 2.5]);
        let g = GridSpec::new(9, 7, [2.0, 2.4]).unwrap();
        let out = spline_resample_to(&s, &g).unwrap();
        assert_eq!(*out.field.grid(), g);
        let [x, y] = g.coord(8, 6);
        assert!((out.field.get(0, 8, 6) - lin(x + 1.0, y + 1.0)[0]).abs() < 1e-12);
        assert!(spline_resample_to(&s, &GridSpec::new(9, 7, [2.6, 2.4]).unwrap()).is_err());
    }
}
