//! Moving least squares smoothing with a linear basis and a cubic B-spline
//! weight.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::tracked::ScatteredSample;
use crate::error::{Error, Result};
use crate::grid::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlsConfig {
    /// Support radius in multiples of the nodal spacing.
    pub support_factor: f64,
    /// Nodal spacing; estimated as the median nearest-neighbour distance when absent.
    pub spacing: Option<f64>,
}

impl Default for MlsConfig {
    fn default() -> Self {
        Self {
            support_factor: 2.5,
            spacing: None,
        }
    }
}

impl MlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.support_factor > 0.0 && self.support_factor.is_finite()) {
            return Err(Error::Config(format!("MLS support factor must be positive, got {}", self.support_factor)));
        }
        if let Some(h) = self.spacing {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("MLS spacing must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Cubic B-spline weight of the normalized distance `q = r / radius`.
pub fn cubic_spline_weight(q: f64) -> f64 {
    let q = q.abs();
    if q <= 0.5 {
        2.0 / 3.0 - 4.0 * q * q + 4.0 * q * q * q
    } else if q < 1.0 {
        4.0 / 3.0 - 4.0 * q + 4.0 * q * q - 4.0 / 3.0 * q * q * q
    } else {
        0.0
    }
}

/// Median nearest-neighbour distance.
pub fn nodal_spacing(points: &[[f64; 2]]) -> f64 {
    let mut d: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Shape function values `Ψ_k(at)` of all points within the support.
///
/// Returns `None` when the weighted moment matrix is singular.
pub fn shape_functions(points: &[[f64; 2]], at: [f64; 2], radius: f64) -> Option<Vec<(usize, f64)>> {
    let mut m = Matrix3::zeros();
    let mut support = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let (dx, dy) = ((p[0] - at[0]) / radius, (p[1] - at[1]) / radius);
        let w = cubic_spline_weight((dx * dx + dy * dy).sqrt());
        if w > 0.0 {
            let b = Vector3::new(1.0, dx, dy);
            m += w * b * b.transpose();
            support.push((k, w, b));
        }
    }
    if support.len() < 3 {
        return None;
    }
    let chol = m.cholesky()?;
    let l = chol.l();
    let diag_ratio = (0..3).map(|i| l[(i, i)].abs()).fold(f64::INFINITY, f64::min)
        / (0..3).map(|i| l[(i, i)].abs()).fold(0.0, f64::max);
    if !(diag_ratio > 1e-7) {
        return None;
    }
    // Ψ_k = w_k p(0)ᵀ M⁻¹ p_k, with p(0) = e1 in shifted coordinates
    let a = chol.solve(&Vector3::new(1.0, 0.0, 0.0));
    Some(support.into_iter().map(|(k, w, b)| (k, w * a.dot(&b))).collect())
}

/// MLS reconstruction of `values` at every point.
pub fn mls_smooth_values(points: &[[f64; 2]], values: &[[f64; 2]], cfg: &MlsConfig) -> Result<Vec<[f64; 2]>> {
    cfg.validate()?;
    if points.len() != values.len() {
        return Err(Error::Shape(format!("{} points but {} values", points.len(), values.len())));
    }
    if points.len() < 3 {
        return Err(Error::Data("MLS needs at least 3 points".into()));
    }
    let radius = cfg.support_factor * cfg.spacing.unwrap_or_else(|| nodal_spacing(points));
    let mut out = Vec::with_capacity(points.len());
    let mut singular = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        match shape_functions(points, p, radius) {
            Some(psi) => {
                let mut v = [0.0; 2];
                for (k, s) in psi {
                    v[0] += s * values[k][0];
                    v[1] += s * values[k][1];
                }
                out.push(v);
            }
            None => {
                singular.push(i);
                out.push([f64::NAN; 2]);
            }
        }
    }
    if !singular.is_empty() {
        return Err(Error::Numerical(format!(
            "singular MLS moment matrix at nodes {singular:?} (support radius {radius:.4})"
        )));
    }
    Ok(out)
}

pub fn mls_smooth(sample: &ScatteredSample, cfg: &MlsConfig) -> Result<ScatteredSample> {
    let displacement = mls_smooth_values(&sample.reference, &sample.displacement, cfg)?;
    Ok(ScatteredSample {
        displacement,
        provenance: Provenance::Smoothed,
        ..sample.clone()
    })
}
