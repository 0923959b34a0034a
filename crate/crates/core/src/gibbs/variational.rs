//! Pathwise minimization behind the Boué–Dupuis lower bound on -log E exp(-qV).

use rayon::prelude::*;
use serde::Serialize;

use super::{density, density_derivative, moment_threshold};
use crate::error::{EquiwaveError, Result};
use crate::measures::Ensemble;
use crate::operator::DiscreteOperator;
use crate::soliton::Background;
use crate::stats;

#[derive(Clone, Debug, Serialize)]
pub struct VariationalResult {
    pub q: f64,
    #[serde(skip)]
    pub drifts: Vec<Vec<f64>>,
    pub minima: Vec<f64>,
    pub average: f64,
    pub stderr: f64,
    /// Objective values along the optimizer path, per sample.
    pub traces: Vec<Vec<f64>>,
}

/// Dual-norm gradient tolerance.
pub const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

/// J(zeta) = q V_L(psi + zeta) + (h/2) zeta^T A zeta and its gradient.
pub fn objective_and_gradient(
    psi: &[f64],
    zeta: &[f64],
    q: f64,
    li: usize,
    bg: &Background,
    op: &DiscreteOperator,
) -> (f64, Vec<f64>) {
    let h = bg.grid.spacing();
    let m = bg.grid.intervals();
    let az = op.apply(zeta);
    let mut value = 0.5 * h * zeta.iter().zip(&az).map(|(a, b)| a * b).sum::<f64>();
    let mut grad: Vec<f64> = az.iter().map(|v| h * v).collect();
    if q != 0.0 && li > 0 {
        let c = 0.5 * bg.coupling * q;
        for i in 0..=li {
            let w = if i == 0 || i == li { 0.5 * h } else { h };
            let ir = bg.inv_r[i];
            let x = (psi[i] + zeta[i]) * ir;
            value += c * w * density(bg.sin2q[i], bg.cos2q[i], x);
            if i > 0 && i < m {
                grad[i] += c * w * ir * density_derivative(bg.sin2q[i], bg.cos2q[i], x);
            }
        }
    }
    grad[0] = 0.0;
    grad[m] = 0.0;
    (value, grad)
}

/// Diagonal of the Hessian of the potential part of J on interior nodes.
fn potential_hessian_diag(psi: &[f64], zeta: &[f64], q: f64, li: usize, bg: &Background) -> Vec<f64> {
    let h = bg.grid.spacing();
    let m = bg.grid.intervals();
    let c = 0.5 * bg.coupling * q;
    (1..m)
        .map(|i| {
            if i > li || q == 0.0 {
                return 0.0;
            }
            let w = if i == li { 0.5 * h } else { h };
            let ir = bg.inv_r[i];
            let x = (psi[i] + zeta[i]) * ir;
            let d2 = -2.0 * bg.sin2q[i] * (2.0 * x).sin() + 2.0 * bg.cos2q[i] * ((2.0 * x).cos() - 1.0);
            c * w * ir * ir * d2
        })
        .collect()
}

/// Minimize J for one sample; returns (minimizer, minimum, trace).
///
/// Damped Newton on the tridiagonal Hessian, falling back to the (hA)^{-1}
/// preconditioned gradient when the Hessian is indefinite.
pub fn minimize_drift(
    psi: &[f64],
    q: f64,
    li: usize,
    bg: &Background,
    op: &DiscreteOperator,
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let ldl = op.matrix.ldl().ok_or_else(|| EquiwaveError::NotPositiveDefinite { smallest: op.lowest_eigenvalue() })?;
    let m = bg.grid.intervals();
    let h = bg.grid.spacing();
    let mut zeta = vec![0.0; m + 1];
    let (mut value, mut grad) = objective_and_gradient(psi, &zeta, q, li, bg, op);
    let mut trace = vec![value];
    let dual_norm = |g: &[f64]| {
        let sol = ldl.solve(&g[1..m]);
        (g[1..m].iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>() / h).max(0.0).sqrt()
    };
    for iter in 0..MAX_ITER {
        let dual = dual_norm(&grad);
        if dual <= GRADIENT_TOL {
            return Ok((zeta, value, trace));
        }
        let extra = potential_hessian_diag(psi, &zeta, q, li, bg);
        let mut hess = op.matrix.clone();
        for (d, e) in hess.diag.iter_mut().zip(&extra) {
            *d = h * *d + e;
        }
        for o in hess.off.iter_mut() {
            *o *= h;
        }
        let step = match hess.ldl() {
            Some(f) => f.solve(&grad[1..m]),
            None => ldl.solve(&grad[1..m]).iter().map(|v| v / h).collect(),
        };
        let mut dir = vec![0.0; m + 1];
        for (d, s) in dir[1..m].iter_mut().zip(&step) {
            *d = -s;
        }
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = zeta.iter().zip(&dir).map(|(z, d)| z + t * d).collect();
            let (v, g) = objective_and_gradient(psi, &trial, q, li, bg, op);
            // Below the resolution of J the sufficient-decrease test is noise.
            if v <= value + 1e-4 * t * slope || -slope < 64.0 * f64::EPSILON * value.abs().max(1.0) {
                zeta = trial;
                value = v;
                grad = g;
                trace.push(value);
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                return Err(EquiwaveError::Stagnation { iterations: iter, gradient_norm: dual });
            }
        }
    }
    Err(EquiwaveError::Stagnation { iterations: MAX_ITER, gradient_norm: dual_norm(&grad) })
}

/// Average of per-sample minima of J, a lower bound for -log E exp(-q V_L).
pub fn variational_lower_bound(
    ens: &Ensemble,
    q: f64,
    l: f64,
    bg: &Background,
    op: &DiscreteOperator,
) -> Result<VariationalResult> {
    if !(q >= 0.0) {
        return Err(EquiwaveError::InvalidArgument(format!("q must be non-negative (got {q})")));
    }
    if q >= moment_threshold(bg.coupling) {
        return Err(EquiwaveError::InvalidArgument(format!(
            "q = {q} is not below the threshold {}",
            moment_threshold(bg.coupling)
        )));
    }
    ens.grid.check_same(&bg.grid)?;
    op.grid.check_same(&bg.grid)?;
    let li = bg.grid.index_of(l)?;
    let results: Vec<(Vec<f64>, f64, Vec<f64>)> = ens
        .samples
        .par_iter()
        .map(|s| minimize_drift(s, q, li, bg, op))
        .collect::<Result<_>>()?;
    let minima: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(VariationalResult {
        q,
        average: stats::mean(&minima),
        stderr: stats::std_err(&minima),
        minima,
        traces: results.iter().map(|r| r.2.clone()).collect(),
        drifts: results.into_iter().map(|r| r.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ModelParams;
    use crate::measures::{sample_gaussian, CholeskySampler};
    use crate::operator::assemble;
    use crate::soliton::{compute_soliton, DEFAULT_FAR_RADIUS, DEFAULT_TOL};

    #[test]
    fn zero_q_gives_zero_drift() {
        let p = ModelParams::new(1, 1, 12.0, 88).unwrap();
        let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
        let op = assemble(&p, &prof).unwrap();
        let bg = prof.on_grid(p.grid()).unwrap();
        let ens = sample_gaussian(&CholeskySampler::new(&op).unwrap(), p, 3, 4);
        let r = variational_lower_bound(&ens, 0.0, 12.0, &bg, &op).unwrap();
        assert_eq!(r.average, 0.0);
        assert!(r.drifts.iter().all(|d| d.iter().all(|v| *v == 0.0)));
        let r = variational_lower_bound(&ens, 0.8, 12.0, &bg, &op).unwrap();
        for t in &r.traces {
            assert!(t.windows(2).all(|w| w[1] <= w[0]));
        }
        assert!(variational_lower_bound(&ens, 1.2, 12.0, &bg, &op).is_err());
    }

    fn setup() -> (ModelParams, DiscreteOperator, Background, CholeskySampler) {
        let p = ModelParams::new(1, 1, 12.0, 88).unwrap();
        let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
        let op = assemble(&p, &prof).unwrap();
        let bg = prof.on_grid(p.grid()).unwrap();
        let s = CholeskySampler::new(&op).unwrap();
        (p, op, bg, s)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, op, bg, s) = setup();
        let ens = sample_gaussian(&s, p, 9, 1);
        let psi = &ens.samples[0];
        let li = bg.grid.index_of(8.0).unwrap();
        let zeta: Vec<f64> = bg.grid.nodes().iter().map(|r| 0.3 * ((r - 1.0) * 0.9).sin() * (12.0 - r) / 11.0).collect();
        let (_, g) = objective_and_gradient(psi, &zeta, 0.9, li, &bg, &op);
        let eps = 1e-6;
        for i in [3usize, 20, 40, li, 70] {
            let mut a = zeta.clone();
            let mut b = zeta.clone();
            a[i] += eps;
            b[i] -= eps;
            let fd = (objective_and_gradient(psi, &a, 0.9, li, &bg, &op).0 - objective_and_gradient(psi, &b, 0.9, li, &bg, &op).0)
                / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-6, "node {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn bound_sits_below_the_monte_carlo_value() {
        let (p, op, bg, s) = setup();
        let ens = sample_gaussian(&s, p, 5, 2000);
        for q in [0.5, 1.0] {
            let mc = super::super::exp_moment(&ens, q, 12.0, &bg).unwrap();
            let r = variational_lower_bound(&ens, q, 12.0, &bg, &op).unwrap();
            let upper = -mc.estimate.ln() + 2.0 * mc.stderr / mc.estimate;
            assert!(r.average <= upper, "q={q}: {} > {upper}", r.average);
        }
    }
}
