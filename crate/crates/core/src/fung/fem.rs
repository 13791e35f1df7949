//! Total-Lagrangian membrane finite elements for the Fung energy.
//!
//! Bilinear quadrilaterals on the node grid, 2×2 Gauss quadrature, Dirichlet
//! data on every boundary node. The stored energy per unit reference volume
//! is `ψ(E11, E22) + 2 μ_s E12²`; the second term is a small shear stiffness
//! that keeps the tangent nonsingular since `ψ` has none.

use serde::{Deserialize, Serialize};

use super::FungParams;
use crate::error::{Error, Result};
use crate::grid::{BoundaryLoading, GridField, GridSpec};
use crate::linalg::BandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FemConfig {
    /// Membrane thickness `L_z` (mm).
    pub thickness: f64,
    /// `μ_s / c`.
    pub shear_ratio: f64,
    /// Initial number of uniform load increments.
    pub load_steps: usize,
    /// How many times a failed increment may be halved.
    pub max_halvings: usize,
    pub max_newton: usize,
    /// Residual tolerance relative to the reference force `c L_z max(extent)`.
    pub tolerance: f64,
}

impl Default for FemConfig {
    fn default() -> Self {
        Self {
            thickness: 1.0,
            shear_ratio: 1e-3,
            load_steps: 10,
            max_halvings: 8,
            max_newton: 25,
            tolerance: 1e-9,
        }
    }
}

impl FemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.load_steps == 0 || self.max_newton == 0 {
            return Err(Error::Config("FEM needs load_steps >= 1 and max_newton >= 1".into()));
        }
        if !(self.thickness > 0.0 && self.shear_ratio > 0.0 && self.tolerance > 0.0) {
            return Err(Error::Config("FEM thickness, shear_ratio and tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    pub field: GridField,
    /// Load factor reached by each accepted increment.
    pub load_factors: Vec<f64>,
    /// Newton iterations used by each accepted increment.
    pub newton_iterations: Vec<usize>,
    /// Residual norms (free DOFs) of every Newton iterate, per accepted increment.
    pub residual_history: Vec<Vec<f64>>,
    pub force_scale: f64,
}

const GAUSS: f64 = 0.577_350_269_189_625_8;
/// Local node order: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
const CORNERS: [(usize, usize, f64, f64); 4] = [(0, 0, -1.0, -1.0), (1, 0, 1.0, -1.0), (1, 1, 1.0, 1.0), (0, 1, -1.0, 1.0)];

struct Mesh {
    grid: GridSpec,
    /// reference-space shape gradients `[gp][node] = (∂N/∂X, ∂N/∂Y)`
    grads: [[[f64; 2]; 4]; 4],
    /// quadrature weight times Jacobian times thickness
    wdet: f64,
    free: Vec<Option<usize>>,
    num_free: usize,
    bw: usize,
}

impl Mesh {
    fn new(grid: GridSpec, thickness: f64) -> Self {
        let [hx, hy] = grid.spacing();
        let mut grads = [[[0.0; 2]; 4]; 4];
        let gps = [(-GAUSS, -GAUSS), (GAUSS, -GAUSS), (GAUSS, GAUSS), (-GAUSS, GAUSS)];
        for (g, &(xi, eta)) in gps.iter().enumerate() {
            for (a, &(_, _, xa, ya)) in CORNERS.iter().enumerate() {
                grads[g][a] = [0.25 * xa * (1.0 + ya * eta) * 2.0 / hx, 0.25 * ya * (1.0 + xa * xi) * 2.0 / hy];
            }
        }
        let mut free = vec![None; grid.num_nodes()];
        let mut k = 0;
        for i in 1..grid.nx - 1 {
            for j in 1..grid.ny - 1 {
                free[grid.node(i, j)] = Some(k);
                k += 1;
            }
        }
        Self {
            grid,
            grads,
            wdet: hx * hy / 4.0 * thickness,
            free,
            num_free: k,
            bw: 2 * grid.ny - 1,
        }
    }

    /// Free-DOF residual and, if requested, tangent at displacement `u`
    /// (`[node][component]`).
    fn assemble(&self, p: &FungParams, mu_s: f64, u: &[[f64; 2]], tangent: bool) -> Result<(Vec<f64>, Option<BandMatrix>)> {
        let g = &self.grid;
        let mut r = vec![0.0; 2 * self.num_free];
        let mut k = tangent.then(|| BandMatrix::zeros(2 * self.num_free, self.bw));
        for ei in 0..g.nx - 1 {
            for ej in 0..g.ny - 1 {
                let nodes: [usize; 4] = std::array::from_fn(|a| g.node(ei + CORNERS[a].0, ej + CORNERS[a].1));
                let mut fe = [[0.0; 2]; 4];
                let mut ke = [[0.0; 8]; 8];
                for gp in &self.grads {
                    let mut f = [[1.0, 0.0], [0.0, 1.0]];
                    for a in 0..4 {
                        for i in 0..2 {
                            for jj in 0..2 {
                                f[i][jj] += u[nodes[a]][i] * gp[a][jj];
                            }
                        }
                    }
                    let e11 = 0.5 * (f[0][0] * f[0][0] + f[1][0] * f[1][0] - 1.0);
                    let e22 = 0.5 * (f[0][1] * f[0][1] + f[1][1] * f[1][1] - 1.0);
                    let gam = f[0][0] * f[0][1] + f[1][0] * f[1][1];
                    let [s11, s22] = p.energy_gradient(e11, e22)?;
                    let s12 = mu_s * gam;
                    let b: [[[f64; 2]; 3]; 4] = std::array::from_fn(|a| {
                        let [nx, ny] = gp[a];
                        [
                            [f[0][0] * nx, f[1][0] * nx],
                            [f[0][1] * ny, f[1][1] * ny],
                            [f[0][0] * ny + f[0][1] * nx, f[1][0] * ny + f[1][1] * nx],
                        ]
                    });
                    let sv = [s11, s22, s12];
                    for a in 0..4 {
                        for c in 0..2 {
                            fe[a][c] += self.wdet * (0..3).map(|q| b[a][q][c] * sv[q]).sum::<f64>();
                        }
                    }
                    if tangent {
                        let h = p.energy_hessian(e11, e22)?;
                        let d = [[h[0], h[1], 0.0], [h[2], h[3], 0.0], [0.0, 0.0, mu_s]];
                        for a in 0..4 {
                            let db: [[f64; 2]; 3] = std::array::from_fn(|q| {
                                std::array::from_fn(|c| (0..3).map(|s| d[q][s] * b[a][s][c]).sum())
                            });
                            for bb in 0..4 {
                                let [ax, ay] = gp[a];
                                let [bx, by] = gp[bb];
                                let geo = ax * (s11 * bx + s12 * by) + ay * (s12 * bx + s22 * by);
                                for c1 in 0..2 {
                                    for c2 in 0..2 {
                                        let mat: f64 = (0..3).map(|q| b[bb][q][c1] * db[q][c2]).sum();
                                        let v = mat + if c1 == c2 { geo } else { 0.0 };
                                        ke[2 * bb + c1][2 * a + c2] += self.wdet * v;
                                    }
                                }
                            }
                        }
                    }
                }
                for a in 0..4 {
                    if let Some(fa) = self.free[nodes[a]] {
                        r[2 * fa] += fe[a][0];
                        r[2 * fa + 1] += fe[a][1];
                        if let Some(km) = k.as_mut() {
                            for bb in 0..4 {
                                if let Some(fb) = self.free[nodes[bb]] {
                                    for c1 in 0..2 {
                                        for c2 in 0..2 {
                                            km.add(2 * fa + c1, 2 * fb + c2, ke[2 * a + c1][2 * bb + c2]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((r, k))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

enum StepOutcome {
    Converged,
    Failed(String),
}

/// Static equilibrium of the Fung membrane with `b` prescribed on the
/// boundary, by load-stepped Newton–Raphson.
pub fn fem_solve_fung(b: &BoundaryLoading, p: &FungParams, grid: &GridSpec, cfg: &FemConfig) -> Result<FemSolution> {
    p.validate()?;
    if b.dims() != (grid.nx, grid.ny) {
        return Err(Error::Shape(format!("boundary sized for {:?}, grid is {}x{}", b.dims(), grid.nx, grid.ny)));
    }
    cfg.validate()?;
    let mesh = Mesh::new(*grid, cfg.thickness);
    let mu_s = cfg.shear_ratio * p.c;
    let force_scale = p.c * cfg.thickness * grid.extent[0].max(grid.extent[1]);
    let tol = cfg.tolerance * force_scale;
    let bnodes = grid.boundary_nodes();

    let mut u = vec![[0.0; 2]; grid.num_nodes()];
    let mut t = 0.0;
    let mut dt = 1.0 / cfg.load_steps as f64;
    let mut halvings = 0;
    let mut sol = FemSolution {
        field: GridField::zeros(*grid, 2),
        load_factors: Vec::new(),
        newton_iterations: Vec::new(),
        residual_history: Vec::new(),
        force_scale,
    };
    while t < 1.0 {
        // snap to 1 so accumulated increments cannot leave a sliver step
        let t_new = if t + dt > 1.0 - 1e-12 { 1.0 } else { t + dt };
        let mut trial = u.clone();
        for (&(i, j), v) in bnodes.iter().zip(b.values()) {
            trial[grid.node(i, j)] = [t_new * v[0], t_new * v[1]];
        }
        let mut history = Vec::new();
        let outcome = newton(&mesh, p, mu_s, &mut trial, tol, cfg.max_newton, &mut history);
        match outcome {
            StepOutcome::Converged => {
                u = trial;
                t = t_new;
                sol.load_factors.push(t);
                sol.newton_iterations.push(history.len() - 1);
                sol.residual_history.push(history);
            }
            StepOutcome::Failed(reason) => {
                if halvings >= cfg.max_halvings {
                    return Err(Error::NewtonDivergence {
                        last_converged: t,
                        failed_at: t_new,
                        reason,
                    });
                }
                halvings += 1;
                dt *= 0.5;
            }
        }
    }
    let mut values = vec![0.0; 2 * grid.num_nodes()];
    for (k, v) in u.iter().enumerate() {
        values[k] = v[0];
        values[grid.num_nodes() + k] = v[1];
    }
    sol.field = GridField::from_values(*grid, 2, values)?;
    Ok(sol)
}

fn newton(
    mesh: &Mesh,
    p: &FungParams,
    mu_s: f64,
    u: &mut [[f64; 2]],
    tol: f64,
    max_iter: usize,
    history: &mut Vec<f64>,
) -> StepOutcome {
    let free_nodes: Vec<(usize, usize)> = mesh
        .free
        .iter()
        .enumerate()
        .filter_map(|(n, f)| f.map(|k| (n, k)))
        .collect();
    for it in 0..=max_iter {
        let (r, k) = match mesh.assemble(p, mu_s, u, it < max_iter) {
            Ok(v) => v,
            Err(e) => return StepOutcome::Failed(e.to_string()),
        };
        let rn = norm(&r);
        if !rn.is_finite() {
            return StepOutcome::Failed("non-finite residual".into());
        }
        history.push(rn);
        if rn <= tol {
            return StepOutcome::Converged;
        }
        let Some(k) = k else { break };
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let Some(du) = k.solve(&neg) else {
            return StepOutcome::Failed("singular tangent".into());
        };
        for &(n, f) in &free_nodes {
            u[n][0] += du[2 * f];
            u[n][1] += du[2 * f + 1];
        }
    }
    StepOutcome::Failed(format!(
        "no convergence in {max_iter} iterations (residual {:.3e})",
        history.last().copied().unwrap_or(f64::NAN)
    ))
}
