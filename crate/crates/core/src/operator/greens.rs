//! Green's functions of A: closed form for n = 0, numeric columns, resolvent check,
//! the R0 search and convergence in R.

use rayon::prelude::*;
use serde::Serialize;

use super::{from_potential, DiscreteOperator};
use crate::error::{EquiwaveError, Result};
use crate::grid::{ModelParams, RadialGrid};
use crate::linalg::{matmul, transpose};
use crate::rng;
use crate::soliton::SolitonProfile;
use rand::Rng;

/// Dense G(r_i, r_j) on all nodes, row-major, zero boundary rows and columns.
#[derive(Clone, Debug)]
pub struct GreensMatrix {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl GreensMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// max |G - G^T| / max |G|.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / self.sup()
    }

    /// max |G(r, rho)| / min(r, rho).
    pub fn growth_bound(&self) -> f64 {
        let n = self.grid.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let m = self.grid.node(i.min(j));
                worst = worst.max(self.get(i, j).abs() / m);
            }
        }
        worst
    }

    /// max over i, j of |G(r_{i+1}, r_j) - G(r_i, r_j)| / h.
    pub fn derivative_bound(&self) -> f64 {
        let n = self.grid.len();
        let h = self.grid.spacing();
        let mut worst = 0.0_f64;
        for i in 0..n - 1 {
            for j in 0..n {
                worst = worst.max((self.get(i + 1, j) - self.get(i, j)).abs() / h);
            }
        }
        worst
    }

    /// Largest c with G(r, r) >= c (1 - r/R)(r - 1) at interior nodes.
    pub fn diagonal_lower_constant(&self) -> f64 {
        let n = self.grid.len();
        let radius = self.grid.radius();
        (1..n - 1)
            .map(|i| {
                let r = self.grid.node(i);
                self.get(i, i) / ((1.0 - r / radius) * (r - 1.0))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// gamma_k = sqrt(1/4 + k(k+1)) - 1/2.
pub fn gamma(k: u32) -> f64 {
    let k = k as f64;
    (0.25 + k * (k + 1.0)).sqrt() - 0.5
}

/// Closed-form Green's function for n = 0.
pub fn greens_explicit(k: u32, radius: f64, r: f64, rho: f64) -> f64 {
    let (r, rho) = if r <= rho { (r, rho) } else { (rho, r) };
    let g = gamma(k);
    let e = 1.0 + 2.0 * g;
    let rr = radius.powf(e);
    (rr - rho.powf(e)) / (e * (rr - 1.0)) * rho.powf(-g) * (r.powf(1.0 + g) - r.powf(-g))
}

/// Closed form sampled on every node pair of `grid`.
pub fn greens_explicit_matrix(k: u32, grid: RadialGrid) -> GreensMatrix {
    let n = grid.len();
    let radius = grid.radius();
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            if i > 0 && j > 0 && i < n - 1 && j < n - 1 {
                *v = greens_explicit(k, radius, grid.node(i), grid.node(j));
            }
        }
    });
    GreensMatrix { grid, values }
}

fn require_positive_definite(op: &DiscreteOperator) -> Result<crate::linalg::Ldl> {
    op.matrix.ldl().ok_or_else(|| EquiwaveError::NotPositiveDefinite {
        smallest: op.lowest_eigenvalue(),
    })
}

/// Columns of G for the given interior node indices: A g_j = e_j / h.
pub fn greens_columns(op: &DiscreteOperator, cols: &[usize]) -> Result<Vec<Vec<f64>>> {
    let ldl = require_positive_definite(op)?;
    let m = op.grid.intervals();
    let h = op.grid.spacing();
    cols.par_iter()
        .map(|&j| {
            if j == 0 || j >= m {
                return Ok(vec![0.0; m + 1]);
            }
            let mut rhs = vec![0.0; m - 1];
            rhs[j - 1] = 1.0 / h;
            let sol = ldl.solve(&rhs);
            let mut col = vec![0.0; m + 1];
            col[1..m].copy_from_slice(&sol);
            Ok(col)
        })
        .collect()
}

/// Dense discrete Green's matrix.
pub fn greens_numeric(op: &DiscreteOperator) -> Result<GreensMatrix> {
    let n = op.grid.len();
    let cols: Vec<usize> = (0..n).collect();
    let columns = greens_columns(op, &cols)?;
    let mut values = vec![0.0; n * n];
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            values[i * n + j] = col[i];
        }
    }
    Ok(GreensMatrix { grid: op.grid, values })
}

/// Residual of the second-order resolvent expansion of G_n around G_0.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResolventReport {
    /// max |G_n - (G_0 - k(k+1) G_0 c G_0 + k^2(k+1)^2 G_0 c G_n c G_0)|.
    pub mismatch: f64,
    /// `mismatch` divided by max |G_n|.
    pub relative: f64,
    /// Relative residual with a plus sign on the first-order term.
    pub relative_plus_sign: f64,
}

/// Evaluate the expansion by trapezoid quadrature on the common grid.
pub fn resolvent_check(
    op0: &DiscreteOperator,
    opn: &DiscreteOperator,
    g0: &GreensMatrix,
    gn: &GreensMatrix,
) -> Result<ResolventReport> {
    let grid = opn.grid;
    op0.grid.check_same(&grid)?;
    g0.grid.check_same(&grid)?;
    gn.grid.check_same(&grid)?;
    if op0.params.k != opn.params.k || op0.params.n != 0 {
        return Err(EquiwaveError::InvalidArgument(
            "resolvent check needs op0 with n = 0 and the same k".into(),
        ));
    }
    let coupling = opn.params.coupling();
    let m = grid.intervals();
    let n = m - 1;
    let h = grid.spacing();
    if coupling == 0.0 {
        return Ok(ResolventReport { mismatch: 0.0, relative: 0.0, relative_plus_sign: 0.0 });
    }
    // c(u) = (cos 2Q - 1) / u^2 at interior nodes.
    let c: Vec<f64> = (1..m)
        .map(|i| {
            let r = grid.node(i);
            (opn.potential[i] - coupling / (r * r)) / coupling
        })
        .collect();
    let interior = |g: &GreensMatrix| -> Vec<f64> {
        let len = grid.len();
        let mut out = Vec::with_capacity(n * n);
        for i in 1..m {
            out.extend_from_slice(&g.values[i * len + 1..i * len + m]);
        }
        out
    };
    let g0i = interior(g0);
    let gni = interior(gn);
    // B = h G0 diag(c); T1 = B G0; T2 = B Gn B^T.
    let mut b = g0i.clone();
    for row in b.chunks_mut(n) {
        for (v, cj) in row.iter_mut().zip(&c) {
            *v *= h * cj;
        }
    }
    let t1 = matmul(&b, &g0i, n);
    let bg = matmul(&b, &gni, n);
    let t2 = matmul(&bg, &transpose(&b, n), n);
    let mut worst = 0.0_f64;
    let mut worst_plus = 0.0_f64;
    let mut sup = 0.0_f64;
    for idx in 0..n * n {
        let base = g0i[idx] + coupling * coupling * t2[idx];
        worst = worst.max((gni[idx] - (base - coupling * t1[idx])).abs());
        worst_plus = worst_plus.max((gni[idx] - (base + coupling * t1[idx])).abs());
        sup = sup.max(gni[idx].abs());
    }
    Ok(ResolventReport {
        mismatch: worst,
        relative: worst / sup,
        relative_plus_sign: worst_plus / sup,
    })
}

/// Outcome of the coercivity scan behind [`find_r0`].
#[derive(Clone, Debug, Serialize)]
pub struct R0Report {
    pub r0: f64,
    pub floor: f64,
    /// (R, lambda_min(A) / lambda_min(-d^2)) for every tested radius.
    pub tested: Vec<(f64, f64)>,
}

/// Default coercivity floor.
pub const COERCIVITY_FLOOR: f64 = 1e-3;
/// Smallest radius included in the R0 scan.
pub const R0_SCAN_START: f64 = 10.0;

/// Smallest tested radius from which the operator stays coercive up to `r_max`.
///
/// Radii are scanned in unit steps from [`R0_SCAN_START`] on grids that share the
/// spacing of `params`.
pub fn find_r0(params: &ModelParams, profile: &SolitonProfile, r_max: f64) -> Result<R0Report> {
    find_r0_with(params, profile, R0_SCAN_START, r_max, COERCIVITY_FLOOR)
}

pub fn find_r0_with(
    params: &ModelParams,
    profile: &SolitonProfile,
    r_start: f64,
    r_max: f64,
    floor: f64,
) -> Result<R0Report> {
    profile.check_params(&ModelParams { radius: r_max, ..*params })?;
    let h = params.spacing();
    let bg = profile.on_grid(RadialGrid::with_spacing(h, ((r_max - 1.0) / h).round() as usize))?;
    let potential = bg.linear_potential();
    let mut tested = Vec::new();
    let mut radius = r_start;
    while radius <= r_max + 1e-9 {
        let m = ((radius - 1.0) / h).round() as usize;
        if m >= 2 && m < potential.len() {
            let grid = RadialGrid::with_spacing(h, m);
            let op = from_potential(ModelParams { radius: grid.radius(), intervals: m, ..*params }, grid, potential[..=m].to_vec());
            let lap = 4.0 / (h * h) * (std::f64::consts::PI / (2.0 * m as f64)).sin().powi(2);
            tested.push((grid.radius(), op.lowest_eigenvalue() / lap));
        }
        radius += 1.0;
    }
    let mut r0 = None;
    for &(r, ratio) in tested.iter().rev() {
        if ratio >= floor {
            r0 = Some(r);
        } else {
            break;
        }
    }
    match r0 {
        Some(r0) => Ok(R0Report { r0, floor, tested }),
        None => Err(EquiwaveError::NoAdmissibleRadius { rmax: r_max }),
    }
}

/// Largest ratio int zeta^2/r^2 / int zeta'^2 over random zeta with zeta(1) = 0.
pub fn hardy_check(grid: RadialGrid, count: usize, seed: u64) -> f64 {
    let h = grid.spacing();
    let n = grid.len();
    let w = grid.trapezoid_weights(grid.intervals());
    let mut worst = 0.0_f64;
    for s in 0..count {
        let mut rng = rng::stream(seed, s as u64);
        let terms = 1 + s % 4;
        let params: Vec<(f64, f64)> = (0..terms)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.05..1.5)))
            .collect();
        let zeta: Vec<f64> = (0..n)
            .map(|i| {
                let r = grid.node(i);
                params.iter().map(|(a, p)| a * (r.powf(*p) - 1.0)).sum()
            })
            .collect();
        let num: f64 = (0..n).map(|i| w[i] * zeta[i] * zeta[i] / grid.node(i).powi(2)).sum();
        let den: f64 = zeta.windows(2).map(|z| (z[1] - z[0]).powi(2) / h).sum();
        if den > 0.0 {
            worst = worst.max(num / den);
        }
    }
    worst
}

/// int_1^L int_1^L |G_R - G_Rp| by trapezoid quadrature on grids of spacing h.
pub fn greens_distance(
    params: &ModelParams,
    profile: &SolitonProfile,
    l: f64,
    radius: f64,
    radius_p: f64,
) -> Result<f64> {
    if l < 1.0 || radius < l || radius_p < l {
        return Err(EquiwaveError::InvalidArgument(format!(
            "need R, R' >= L >= 1 (got L = {l}, R = {radius}, R' = {radius_p})"
        )));
    }
    let a = greens_block(params, profile, l, radius)?;
    let b = greens_block(params, profile, l, radius_p)?;
    let h = params.spacing();
    let li = ((l - 1.0) / h).round() as usize;
    let w = RadialGrid::with_spacing(h, li.max(1)).trapezoid_weights(li.max(1));
    let mut sum = 0.0;
    for i in 0..=li {
        for j in 0..=li {
            sum += w[i] * w[j] * (a[j][i] - b[j][i]).abs();
        }
    }
    Ok(sum)
}

/// Columns 0..=l of G on [1, radius] with the spacing of `params`.
fn greens_block(params: &ModelParams, profile: &SolitonProfile, l: f64, radius: f64) -> Result<Vec<Vec<f64>>> {
    let p = params.with_radius_fixed_spacing(radius)?;
    let op = super::assemble(&p, profile)?;
    let li = ((l - 1.0) / p.spacing()).round() as usize;
    let cols: Vec<usize> = (0..=li).collect();
    greens_columns(&op, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::assemble;
    use crate::soliton::{compute_soliton, DEFAULT_FAR_RADIUS, DEFAULT_TOL};

    fn setup(n: u32, k: u32, radius: f64, m: usize) -> (ModelParams, SolitonProfile, DiscreteOperator) {
        let p = ModelParams::new(n, k, radius, m).unwrap();
        let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
        let op = assemble(&p, &prof).unwrap();
        (p, prof, op)
    }

    #[test]
    fn closed_form_values() {
        assert!((greens_explicit(0, 3.0, 2.0, 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(gamma(1), 1.0);
        assert_eq!(gamma(2), 2.0);
        assert!((greens_explicit(2, 7.0, 2.0, 5.0) - greens_explicit(2, 7.0, 5.0, 2.0)).abs() < 1e-15);
        assert_eq!(greens_explicit(1, 7.0, 1.0, 3.0), 0.0);
        assert!(greens_explicit(1, 7.0, 3.0, 7.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_solves_the_equation() {
        // -G'' + k(k+1)/r^2 G = 0 away from the diagonal, jump -1 in G' across it.
        for k in [1, 2] {
            let radius = 9.0;
            let rho = 4.0;
            let c = (k * (k + 1)) as f64;
            let e = 1e-4;
            for r in [2.0, 3.1, 5.5, 8.0] {
                let g = |x: f64| greens_explicit(k, radius, x, rho);
                let d2 = (g(r + e) - 2.0 * g(r) + g(r - e)) / (e * e);
                assert!((-d2 + c / (r * r) * g(r)).abs() < 1e-5);
            }
            let g = |x: f64| greens_explicit(k, radius, x, rho);
            let jump = (g(rho + e) - g(rho)) / e - (g(rho) - g(rho - e)) / e;
            assert!((jump + 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn brownian_bridge_is_exact() {
        let (_, _, op) = setup(0, 0, 3.0, 64);
        let g = greens_numeric(&op).unwrap();
        let exact = greens_explicit_matrix(0, op.grid);
        for (a, b) in g.values.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_greens_properties() {
        let (_, _, op) = setup(1, 1, 20.0, 300);
        let g = greens_numeric(&op).unwrap();
        assert!(g.symmetry_defect() <= 1e-10);
        let n = g.grid.len();
        for j in 0..n {
            assert_eq!(g.get(0, j), 0.0);
            assert_eq!(g.get(n - 1, j), 0.0);
        }
        assert!(g.diagonal_lower_constant() > 0.0);
        // A_n <= A_0, so the diagonal dominates the n = 0 one.
        let (_, _, op0) = setup(0, 1, 20.0, 300);
        let g0 = greens_numeric(&op0).unwrap();
        for i in 0..n {
            assert!(g.get(i, i) >= g0.get(i, i) - 1e-12);
        }
    }

    #[test]
    fn refuses_indefinite_operator() {
        let (p, _, op) = setup(0, 0, 5.0, 40);
        let mut pot = op.potential.clone();
        for v in pot.iter_mut() {
            *v = -10.0;
        }
        let bad = from_potential(p, op.grid, pot);
        match greens_numeric(&bad) {
            Err(EquiwaveError::NotPositiveDefinite { smallest }) => assert!(smallest < 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resolvent_trivial_for_degree_zero() {
        let (_, _, op0) = setup(0, 1, 10.0, 60);
        let g0 = greens_numeric(&op0).unwrap();
        let r = resolvent_check(&op0, &op0, &g0, &g0).unwrap();
        assert!(r.mismatch < 1e-14);
    }

    #[test]
    fn discrete_resolvent_identity_is_exact_to_roundoff() {
        let (_, _, op0) = setup(0, 1, 10.0, 90);
        let (_, _, opn) = setup(1, 1, 10.0, 90);
        let g0 = greens_numeric(&op0).unwrap();
        let gn = greens_numeric(&opn).unwrap();
        let r = resolvent_check(&op0, &opn, &g0, &gn).unwrap();
        assert!(r.relative < 1e-10, "{r:?}");
        assert!(r.relative_plus_sign > 1e-2);
    }

    #[test]
    fn hardy_inequality() {
        let g = RadialGrid::new(40.0, 1024);
        let worst = hardy_check(g, 100, 5);
        assert!(worst <= 4.0 * (1.0 + 5.0 * g.spacing()), "{worst}");
        // r^{1/2} - 1 nearly saturates the constant on long intervals.
        let big = RadialGrid::new(1e6, 200_000);
        let zeta: Vec<f64> = big.nodes().iter().map(|r| r.sqrt() - 1.0).collect();
        let w = big.trapezoid_weights(big.intervals());
        let num: f64 = (0..big.len()).map(|i| w[i] * zeta[i] * zeta[i] / big.node(i).powi(2)).sum();
        let den: f64 = zeta.windows(2).map(|z| (z[1] - z[0]).powi(2) / big.spacing()).sum();
        assert!(num / den > 1.0);
    }

    #[test]
    fn r0_for_degree_zero_is_scan_start() {
        let p = ModelParams::new(0, 1, 40.0, 390).unwrap();
        let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
        let rep = find_r0(&p, &prof, 40.0).unwrap();
        assert_eq!(rep.r0, R0_SCAN_START);
    }

    #[test]
    fn distance_of_equal_radii_is_zero() {
        let p = ModelParams::new(1, 1, 20.0, 152).unwrap();
        let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
        assert_eq!(greens_distance(&p, &prof, 5.0, 20.0, 20.0).unwrap(), 0.0);
    }
}
