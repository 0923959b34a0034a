//! The linearized operator A = -d^2/dr^2 + k(k+1) cos(2Q) / r^2 with Dirichlet conditions.

mod greens;

pub use greens::*;

use crate::error::{EquiwaveError, Result};
use crate::grid::{ModelParams, RadialGrid};
use crate::linalg::{tql_implicit, SymTridiag};
use crate::soliton::{Background, SolitonProfile};

/// Second-order finite-difference discretization on the interior nodes.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub params: ModelParams,
    pub grid: RadialGrid,
    /// q(r_i) at every node, boundary nodes included.
    pub potential: Vec<f64>,
    /// Interior matrix, dimension M-1.
    pub matrix: SymTridiag,
}

/// Assemble the operator for `params` from a soliton profile.
pub fn assemble(params: &ModelParams, profile: &SolitonProfile) -> Result<DiscreteOperator> {
    params.validate()?;
    profile.check_params(params)?;
    let bg = profile.on_grid(params.grid())?;
    assemble_background(params, &bg)
}

/// Assemble from background values already sampled on the grid.
pub fn assemble_background(params: &ModelParams, bg: &Background) -> Result<DiscreteOperator> {
    let grid = params.grid();
    bg.grid.check_same(&grid)?;
    let potential = bg.linear_potential();
    Ok(from_potential(*params, grid, potential))
}

pub(crate) fn from_potential(params: ModelParams, grid: RadialGrid, potential: Vec<f64>) -> DiscreteOperator {
    let m = grid.intervals();
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let diag = (1..m).map(|i| 2.0 * inv_h2 + potential[i]).collect();
    let off = vec![-inv_h2; m.saturating_sub(2)];
    DiscreteOperator {
        params,
        grid,
        potential,
        matrix: SymTridiag { diag, off },
    }
}

impl DiscreteOperator {
    /// Dimension of the interior system.
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Smallest eigenvalue by Sturm bisection.
    pub fn lowest_eigenvalue(&self) -> f64 {
        self.matrix.eigenvalue_bisect(0)
    }

    /// Apply A to a full-grid field (boundary values ignored, output zero there).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = self.grid.intervals();
        let out = self.matrix.matvec(&u[1..m]);
        let mut full = vec![0.0; m + 1];
        full[1..m].copy_from_slice(&out);
        full
    }

    /// <u, A u> with the h-weighted inner product.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        let au = self.apply(u);
        self.grid.spacing() * u.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Eigenpairs (lambda_m^2, e_m), ascending, with e_m orthonormal under h sum.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub grid: RadialGrid,
    /// lambda_m^2.
    pub eigenvalues: Vec<f64>,
    /// Column-major, each column has M+1 entries with zero boundary values.
    pub vectors: Vec<f64>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, m: usize) -> &[f64] {
        let n = self.grid.len();
        &self.vectors[m * n..(m + 1) * n]
    }

    /// h-weighted coefficient <f, e_m>.
    pub fn coefficient(&self, f: &[f64], m: usize) -> f64 {
        let h = self.grid.spacing();
        h * f.iter().zip(self.vector(m)).map(|(a, b)| a * b).sum::<f64>()
    }
}

fn normalize_columns(grid: RadialGrid, interior: &[f64], cols: usize) -> Vec<f64> {
    let n = grid.intervals() - 1;
    let len = grid.len();
    let scale = 1.0 / grid.spacing().sqrt();
    let mut out = vec![0.0; cols * len];
    for j in 0..cols {
        let v = &interior[j * n..(j + 1) * n];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Deterministic sign: first interior entry non-negative.
        let first = v.iter().find(|x| x.abs() > 1e-8 * norm).copied().unwrap_or(1.0);
        let s = scale / norm * if first < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[j * len + i + 1] = s * v[i];
        }
    }
    out
}

/// Full eigendecomposition by implicit QL.
pub fn eigendecompose(op: &DiscreteOperator) -> Result<SpectralBasis> {
    let n = op.dim();
    let (vals, vecs) = tql_implicit(&op.matrix, true)?;
    let vecs = vecs.expect("vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| vals[*a].total_cmp(&vals[*b]));
    let mut sorted = Vec::with_capacity(n * n);
    for &j in &order {
        sorted.extend_from_slice(&vecs[j * n..(j + 1) * n]);
    }
    Ok(SpectralBasis {
        grid: op.grid,
        eigenvalues: order.iter().map(|&j| vals[j]).collect(),
        vectors: normalize_columns(op.grid, &sorted, n),
    })
}

/// The `count` lowest eigenpairs: QL eigenvalues plus inverse iteration.
pub fn eigendecompose_lowest(op: &DiscreteOperator, count: usize) -> Result<SpectralBasis> {
    let n = op.dim();
    let count = count.min(n);
    let (mut vals, _) = tql_implicit(&op.matrix, false)?;
    vals.sort_by(|a, b| a.total_cmp(b));
    vals.truncate(count);
    let mut interior: Vec<f64> = Vec::with_capacity(count * n);
    for (j, &lam) in vals.iter().enumerate() {
        let scale = 1.0 + lam.abs();
        let shift = lam - 1e-10 * scale;
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7 + j * 13) % 11) as f64 * 0.01).collect();
        for _ in 0..4 {
            v = op.matrix.solve_shifted(shift, &v);
            for p in 0..j {
                let prev = &interior[p * n..(p + 1) * n];
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(prev) {
                    *x -= dot * y;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(EquiwaveError::EigenNoConvergence { index: j });
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        interior.extend_from_slice(&v);
    }
    Ok(SpectralBasis {
        grid: op.grid,
        eigenvalues: vals,
        vectors: normalize_columns(op.grid, &interior, count),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soliton::{compute_soliton, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
    use std::f64::consts::PI;

    fn op_for(n: u32, k: u32, radius: f64, m: usize) -> DiscreteOperator {
        let p = ModelParams::new(n, k, radius, m).unwrap();
        let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
        assemble(&p, &prof).unwrap()
    }

    #[test]
    fn dirichlet_laplacian_spectrum() {
        let op = op_for(0, 0, 11.0, 400);
        let b = eigendecompose(&op).unwrap();
        for m in 1..=5 {
            let exact = (PI * m as f64 / 10.0).powi(2);
            assert!((b.eigenvalues[m - 1] - exact).abs() < 1e-3 * exact);
            let e = b.vector(m - 1);
            let g = op.grid;
            let norm = (2.0 / 10.0_f64).sqrt();
            for i in (0..g.len()).step_by(37) {
                let s = norm * (PI * m as f64 * (g.node(i) - 1.0) / 10.0).sin();
                assert!((e[i] - s).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn potentials() {
        let op = op_for(0, 1, 10.0, 90);
        for i in 0..op.grid.len() {
            let r = op.grid.node(i);
            assert!((op.potential[i] - 2.0 / (r * r)).abs() < 1e-14);
        }
        let op = op_for(1, 1, 10.0, 90);
        assert!(op.potential.iter().any(|q| *q < 0.0));
        assert!(op.potential[0] > 0.0);
    }

    #[test]
    fn basis_is_orthonormal_and_reconstructs() {
        let op = op_for(1, 1, 20.0, 200);
        let b = eigendecompose(&op).unwrap();
        let h = op.grid.spacing();
        assert!(b.eigenvalues[0] > 0.0);
        let n = b.len();
        for i in (0..n).step_by(13) {
            for j in (0..n).step_by(17) {
                let dot = b.coefficient(b.vector(i), j);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
        // h sum_m lambda_m^2 e_m e_m^T equals the matrix.
        let len = op.grid.len();
        let mut worst = 0.0_f64;
        let scale = op.matrix.diag.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for r in 1..len - 1 {
            for c in [r - 1, r, r + 1] {
                if c == 0 || c == len - 1 {
                    continue;
                }
                let mut s = 0.0;
                for m in 0..n {
                    let e = b.vector(m);
                    s += b.eigenvalues[m] * e[r] * e[c];
                }
                s *= h;
                let want = if r == c { op.matrix.diag[r - 1] } else { op.matrix.off[r.min(c) - 1] };
                worst = worst.max((s - want).abs());
            }
        }
        assert!(worst / scale < 1e-8, "reconstruction error {worst}");
    }

    #[test]
    fn inverse_iteration_matches_full_solve() {
        let op = op_for(1, 1, 20.0, 200);
        let full = eigendecompose(&op).unwrap();
        let few = eigendecompose_lowest(&op, 8).unwrap();
        for m in 0..8 {
            assert!((full.eigenvalues[m] - few.eigenvalues[m]).abs() < 1e-10 * full.eigenvalues[m].abs().max(1.0));
            for (a, b) in full.vector(m).iter().zip(few.vector(m)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
