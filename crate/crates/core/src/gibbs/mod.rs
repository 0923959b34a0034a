//! Anharmonic potential V, Gibbs reweighting, exponential moments and increments.

mod pcn;
mod variational;

pub use pcn::*;
pub use variational::*;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EquiwaveError, Result};
use crate::grid::RadialGrid;
use crate::measures::Ensemble;
use crate::rng;
use crate::soliton::Background;
use crate::stats;
use rand::Rng;

/// (1/2) sin 2x - x, accurate for small x.
#[inline]
pub(crate) fn cubic_part(x: f64) -> f64 {
    if x.abs() < 0.05 {
        let x2 = x * x;
        x * x2 * (-2.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-4.0 / 315.0 + x2 * (2.0 / 2835.0))))
    } else {
        0.5 * (2.0 * x).sin() - x
    }
}

/// sin^2 x - x^2, accurate for small x.
#[inline]
pub(crate) fn quartic_part(x: f64) -> f64 {
    if x.abs() < 0.05 {
        let x2 = x * x;
        x2 * x2 * (-1.0 / 3.0 + x2 * (2.0 / 45.0 + x2 * (-1.0 / 315.0 + x2 * (2.0 / 14175.0))))
    } else {
        let s = x.sin();
        s * s - x * x
    }
}

/// sin^2(Q+x) - sin^2 Q - sin(2Q) x - cos(2Q) x^2.
#[inline]
pub fn density(sin2q: f64, cos2q: f64, x: f64) -> f64 {
    sin2q * cubic_part(x) + cos2q * quartic_part(x)
}

/// d/dx of [`density`].
#[inline]
pub fn density_derivative(sin2q: f64, cos2q: f64, x: f64) -> f64 {
    let s = x.sin();
    -2.0 * sin2q * s * s + 2.0 * cos2q * cubic_part(x)
}

/// Truncated density with y = P_N psi / r in the sine terms and x = psi / r in the quadratic one.
#[inline]
pub fn density_truncated(sin2q: f64, cos2q: f64, y: f64, x: f64) -> f64 {
    density(sin2q, cos2q, y) + cos2q * (y * y - x * x)
}

fn check_len(bg: &Background, psi: &[f64]) -> Result<()> {
    if psi.len() != bg.grid.len() {
        return Err(EquiwaveError::GridMismatch(format!(
            "field has {} values, background grid has {}",
            psi.len(),
            bg.grid.len()
        )));
    }
    Ok(())
}

/// V_L(psi) = (k(k+1)/2) int_1^L density by trapezoid rule.
pub fn potential_v(psi: &[f64], l: f64, bg: &Background) -> Result<f64> {
    check_len(bg, psi)?;
    let li = bg.grid.index_of(l)?;
    Ok(potential_upto(psi, li, bg))
}

/// [`potential_v`] on the nodes 0..=li.
pub fn potential_upto(psi: &[f64], li: usize, bg: &Background) -> f64 {
    if li == 0 {
        return 0.0;
    }
    let h = bg.grid.spacing();
    let mut sum = 0.0;
    for i in 0..=li {
        let w = if i == 0 || i == li { 0.5 * h } else { h };
        sum += w * density(bg.sin2q[i], bg.cos2q[i], psi[i] * bg.inv_r[i]);
    }
    0.5 * bg.coupling * sum
}

/// V^{(N)}_L(psi), using the projection `proj` of psi.
pub fn potential_v_truncated(psi: &[f64], proj: &SineProjector, l: f64, bg: &Background) -> Result<f64> {
    check_len(bg, psi)?;
    proj.grid.check_same(&bg.grid)?;
    let li = bg.grid.index_of(l)?;
    let p = proj.project(psi);
    Ok(potential_truncated_upto(psi, &p, li, bg))
}

/// Truncated potential given psi and its projection.
pub fn potential_truncated_upto(psi: &[f64], projected: &[f64], li: usize, bg: &Background) -> f64 {
    if li == 0 {
        return 0.0;
    }
    let h = bg.grid.spacing();
    let mut sum = 0.0;
    for i in 0..=li {
        let w = if i == 0 || i == li { 0.5 * h } else { h };
        let ir = bg.inv_r[i];
        sum += w * density_truncated(bg.sin2q[i], bg.cos2q[i], projected[i] * ir, psi[i] * ir);
    }
    0.5 * bg.coupling * sum
}

/// Orthogonal projection onto the first N Dirichlet sine modes
/// sqrt(2/(R-1)) sin(pi m (r-1)/(R-1)), orthonormal under the h-weighted sum.
#[derive(Clone, Debug)]
pub struct SineProjector {
    pub grid: RadialGrid,
    pub modes: usize,
    table: Vec<f64>,
}

impl SineProjector {
    pub fn new(grid: RadialGrid, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(EquiwaveError::InvalidArgument("projection needs N >= 1".into()));
        }
        let m = grid.intervals();
        let modes = modes.min(m - 1);
        let len = grid.len();
        let norm = (2.0 / (grid.radius() - 1.0)).sqrt();
        let mut table = vec![0.0; modes * len];
        for j in 0..modes {
            for i in 1..m {
                // Integer phase reduction keeps the table exactly antisymmetric.
                let phase = ((j + 1) * i) % (2 * m);
                table[j * len + i] = norm * (std::f64::consts::PI * phase as f64 / m as f64).sin();
            }
        }
        Ok(SineProjector { grid, modes, table })
    }

    /// True when the projection is the identity on grid functions.
    pub fn is_full(&self) -> bool {
        self.modes >= self.grid.intervals() - 1
    }

    pub fn mode(&self, j: usize) -> &[f64] {
        let len = self.grid.len();
        &self.table[j * len..(j + 1) * len]
    }

    pub fn coefficients(&self, psi: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        (0..self.modes)
            .map(|j| h * psi.iter().zip(self.mode(j)).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn project(&self, psi: &[f64]) -> Vec<f64> {
        if self.is_full() {
            let mut out = psi.to_vec();
            out[0] = 0.0;
            *out.last_mut().unwrap() = 0.0;
            return out;
        }
        let c = self.coefficients(psi);
        let mut out = vec![0.0; psi.len()];
        for (j, cj) in c.iter().enumerate() {
            for (o, s) in out.iter_mut().zip(self.mode(j)) {
                *o += cj * s;
            }
        }
        out
    }
}

/// Gibbs reweighting of a Gaussian ensemble.
#[derive(Clone, Debug)]
pub struct WeightedEnsemble {
    pub base: Ensemble,
    pub log_weights: Vec<f64>,
    pub z_hat: f64,
    pub z_stderr: f64,
    pub ess: f64,
    pub warning: Option<String>,
}

/// ESS below which Gibbs statistics are not reported.
pub const ESS_FLOOR: f64 = 100.0;

impl WeightedEnsemble {
    /// Weights from given log-weights.
    pub fn from_log_weights(base: Ensemble, log_weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = log_weights.iter().position(|w| !w.is_finite()) {
            return Err(EquiwaveError::InvalidArgument(format!("non-finite log-weight at sample {i}")));
        }
        let w: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
        let z_hat = stats::mean(&w);
        let z_stderr = stats::jackknife_se_mean(&w);
        let ess = effective_sample_size(&log_weights);
        let warning = (ess < ESS_FLOOR).then(|| {
            format!("effective sample size {ess:.1} below {ESS_FLOOR}; use the pCN sampler")
        });
        Ok(WeightedEnsemble { base, log_weights, z_hat, z_stderr, ess, warning })
    }

    /// Unit weights (MCMC output).
    pub fn unweighted(base: Ensemble) -> Self {
        let n = base.len();
        WeightedEnsemble {
            base,
            log_weights: vec![0.0; n],
            z_hat: 1.0,
            z_stderr: 0.0,
            ess: n as f64,
            warning: None,
        }
    }

    pub fn require_ess(&self, floor: f64) -> Result<()> {
        if self.ess < floor {
            return Err(EquiwaveError::EssTooLow { ess: self.ess, floor });
        }
        Ok(())
    }

    /// Self-normalized weighted mean and its delta-method standard error.
    pub fn weighted_mean(&self, values: &[f64]) -> (f64, f64) {
        let m = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - m).exp()).collect();
        let sw: f64 = w.iter().sum();
        let mean = w.iter().zip(values).map(|(a, b)| a * b).sum::<f64>() / sw;
        let var = w.iter().zip(values).map(|(a, b)| a * a * (b - mean) * (b - mean)).sum::<f64>() / (sw * sw);
        (mean, var.sqrt())
    }

    /// Systematic resampling to `count` indices.
    pub fn resample(&self, count: usize, seed: u64) -> Vec<usize> {
        systematic_resample(&self.log_weights, count, seed)
    }
}

/// Systematic resampling indices from log-weights.
pub fn systematic_resample(log_weights: &[f64], count: usize, seed: u64) -> Vec<usize> {
    let m = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let u0: f64 = rng::stream(seed, 0).gen::<f64>() / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut cum = w[0] / total;
    let mut i = 0;
    for j in 0..count {
        let u = u0 + j as f64 / count as f64;
        while u > cum && i + 1 < w.len() {
            i += 1;
            cum += w[i] / total;
        }
        out.push(i);
    }
    out
}

/// (sum w)^2 / sum w^2 from log-weights.
pub fn effective_sample_size(log_weights: &[f64]) -> f64 {
    let m = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (s1, s2) = log_weights.iter().fold((0.0, 0.0), |(a, b), l| {
        let w = (l - m).exp();
        (a + w, b + w * w)
    });
    s1 * s1 / s2
}

/// Reweight a Gaussian ensemble by exp(-V_L).
pub fn gibbs_reweight(ens: Ensemble, l: f64, bg: &Background) -> Result<WeightedEnsemble> {
    ens.grid.check_same(&bg.grid)?;
    let li = bg.grid.index_of(l)?;
    let log_w: Vec<f64> = ens.samples.par_iter().map(|s| -potential_upto(s, li, bg)).collect();
    WeightedEnsemble::from_log_weights(ens, log_w)
}

/// Reweight by exp(-V^{(N)}_L).
pub fn gibbs_reweight_truncated(ens: Ensemble, proj: &SineProjector, l: f64, bg: &Background) -> Result<WeightedEnsemble> {
    ens.grid.check_same(&bg.grid)?;
    let li = bg.grid.index_of(l)?;
    let log_w: Vec<f64> = ens
        .samples
        .par_iter()
        .map(|s| -potential_truncated_upto(s, &proj.project(s), li, bg))
        .collect();
    WeightedEnsemble::from_log_weights(ens, log_w)
}

/// The integrability threshold 1 + 1/(4 k(k+1)) for exponential moments.
pub fn moment_threshold(coupling: f64) -> f64 {
    if coupling == 0.0 {
        f64::INFINITY
    } else {
        1.0 + 1.0 / (4.0 * coupling)
    }
}

/// Monte Carlo estimate of E exp(-q V_L).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExpMoment {
    pub q: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub threshold: f64,
    pub above_threshold: bool,
}

pub fn exp_moment(ens: &Ensemble, q: f64, l: f64, bg: &Background) -> Result<ExpMoment> {
    if !(q >= 0.0) {
        return Err(EquiwaveError::InvalidArgument(format!("q must be non-negative (got {q})")));
    }
    ens.grid.check_same(&bg.grid)?;
    let li = bg.grid.index_of(l)?;
    let vals: Vec<f64> = if q == 0.0 {
        vec![1.0; ens.len()]
    } else {
        ens.samples.par_iter().map(|s| (-q * potential_upto(s, li, bg)).exp()).collect()
    };
    let threshold = moment_threshold(bg.coupling);
    Ok(ExpMoment {
        q,
        estimate: stats::mean(&vals),
        stderr: stats::std_err(&vals),
        threshold,
        above_threshold: q >= threshold,
    })
}

/// Result of [`increment_diagnostic`].
#[derive(Clone, Debug, Serialize)]
pub struct IncrementReport {
    pub p: f64,
    /// (L, ||V_L - V_{L/2}||_p).
    pub l_increments: Vec<(f64, f64)>,
    pub l_slope: f64,
    /// (N, || |V - V^{(N)}| exp|V - V^{(N)}| ||_p).
    pub n_increments: Vec<(f64, f64)>,
    pub n_slope: f64,
}

fn p_norm(x: &[f64], p: f64) -> f64 {
    stats::mean(&x.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>()).powf(1.0 / p)
}

/// p-norms of the L- and N-increments of V over an ensemble, with log-log slopes.
pub fn increment_diagnostic(ens: &Ensemble, bg: &Background, ls: &[f64], ns: &[usize], p: f64) -> Result<IncrementReport> {
    ens.grid.check_same(&bg.grid)?;
    let mut l_increments = Vec::new();
    for &l in ls {
        if l < 2.0 {
            return Err(EquiwaveError::InvalidArgument(format!("L must be at least 2 (got {l})")));
        }
        let (a, b) = (bg.grid.index_of(l)?, bg.grid.index_of(l / 2.0)?);
        let d: Vec<f64> = ens
            .samples
            .par_iter()
            .map(|s| potential_upto(s, a, bg) - potential_upto(s, b, bg))
            .collect();
        l_increments.push((l, p_norm(&d, p)));
    }
    let full = bg.grid.intervals();
    let mut n_increments = Vec::new();
    for &n in ns {
        let proj = SineProjector::new(bg.grid, n)?;
        let d: Vec<f64> = ens
            .samples
            .par_iter()
            .map(|s| {
                let diff = (potential_upto(s, full, bg) - potential_truncated_upto(s, &proj.project(s), full, bg)).abs();
                diff * diff.exp()
            })
            .collect();
        n_increments.push((n as f64, p_norm(&d, p)));
    }
    let slope = |v: &[(f64, f64)]| {
        if v.len() < 2 {
            f64::NAN
        } else {
            let (x, y): (Vec<f64>, Vec<f64>) = v.iter().cloned().unzip();
            stats::loglog_slope(&x, &y)
        }
    };
    Ok(IncrementReport {
        p,
        l_slope: slope(&l_increments),
        n_slope: slope(&n_increments),
        l_increments,
        n_increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ModelParams;
    use crate::soliton::{compute_soliton, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
    use proptest::prelude::*;

    fn background(n: u32, k: u32, radius: f64, m: usize) -> Background {
        let p = ModelParams::new(n, k, radius, m).unwrap();
        compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap().on_grid(p.grid()).unwrap()
    }

    proptest! {
        #[test]
        fn density_matches_definition(q in -4.0..4.0f64, x in -3.0..3.0f64) {
            let direct = (q + x).sin().powi(2) - q.sin().powi(2) - (2.0 * q).sin() * x - (2.0 * q).cos() * x * x;
            let stable = density((2.0 * q).sin(), (2.0 * q).cos(), x);
            prop_assert!((direct - stable).abs() < 1e-12 * (1.0 + x * x));
        }

        #[test]
        fn series_branches_are_continuous(x in 0.03..0.07f64) {
            let a = 0.5 * (2.0 * x).sin() - x;
            prop_assert!((cubic_part(x) - a).abs() < 1e-15);
            let b = x.sin().powi(2) - x * x;
            prop_assert!((quartic_part(x) - b).abs() < 1e-15);
        }

        #[test]
        fn derivative_matches_difference(q in -4.0..4.0f64, x in -2.0..2.0f64) {
            let (s, c) = ((2.0 * q).sin(), (2.0 * q).cos());
            let e = 1e-6;
            let fd = (density(s, c, x + e) - density(s, c, x - e)) / (2.0 * e);
            prop_assert!((fd - density_derivative(s, c, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn degree_zero_density_is_nonpositive() {
        let bg = background(0, 2, 20.0, 200);
        let psi: Vec<f64> = bg.grid.nodes().iter().map(|r| 3.0 * ((r - 1.0) * 0.7).sin() * (20.0 - r)).collect();
        for i in 0..psi.len() {
            let x = psi[i] * bg.inv_r[i];
            assert!(density(bg.sin2q[i], bg.cos2q[i], x) <= 0.0);
            assert!((density(bg.sin2q[i], bg.cos2q[i], x) - (x.sin().powi(2) - x * x)).abs() < 1e-12);
        }
        assert_eq!(potential_v(&vec![0.0; psi.len()], 20.0, &bg).unwrap(), 0.0);
    }

    #[test]
    fn locality_in_l() {
        let bg = background(1, 1, 20.0, 190);
        let a: Vec<f64> = bg.grid.nodes().iter().map(|r| ((r - 1.0) * 1.3).sin() * (20.0 - r) * 0.1).collect();
        let mut b = a.clone();
        let li = bg.grid.index_of(10.0).unwrap();
        for v in b.iter_mut().skip(li + 1) {
            *v += 5.0;
        }
        assert_eq!(potential_v(&a, 10.0, &bg).unwrap(), potential_v(&b, 10.0, &bg).unwrap());
    }

    #[test]
    fn projection_properties() {
        let g = RadialGrid::new(11.0, 200);
        let p = SineProjector::new(g, 12).unwrap();
        for m in [1usize, 5, 12, 13, 40] {
            let f: Vec<f64> = g.nodes().iter().map(|r| (std::f64::consts::PI * m as f64 * (r - 1.0) / 10.0).sin()).collect();
            let pf = p.project(&f);
            for (a, b) in pf.iter().zip(&f) {
                let want = if m <= 12 { *b } else { 0.0 };
                assert!((a - want).abs() < 1e-12, "m = {m}");
            }
        }
        let f: Vec<f64> = g.nodes().iter().map(|r| (r - 1.0) * (11.0 - r) * (r * 3.0).cos()).collect();
        let once = p.project(&f);
        let twice = p.project(&once);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
        let full = SineProjector::new(g, 10_000).unwrap();
        assert!(full.is_full());
    }

    #[test]
    fn truncated_potential_edge_cases() {
        let bg = background(1, 1, 11.0, 100);
        let g = bg.grid;
        let psi: Vec<f64> = g.nodes().iter().map(|r| 0.8 * ((r - 1.0) * 0.9).sin() * (11.0 - r) / 3.0).collect();
        let full = SineProjector::new(g, 99).unwrap();
        assert_eq!(potential_v_truncated(&psi, &full, 11.0, &bg).unwrap(), potential_v(&psi, 11.0, &bg).unwrap());
        // A mode above the cutoff: only the quadratic subtraction survives.
        let p = SineProjector::new(g, 4).unwrap();
        let e5 = SineProjector::new(g, 5).unwrap().mode(4).to_vec();
        let v = potential_v_truncated(&e5, &p, 11.0, &bg).unwrap();
        let w = g.trapezoid_weights(g.intervals());
        let want: f64 = -0.5 * bg.coupling
            * (0..g.len()).map(|i| w[i] * bg.cos2q[i] * (e5[i] * bg.inv_r[i]).powi(2)).sum::<f64>();
        assert!((v - want).abs() < 1e-12 * want.abs());
        // In-span fields see no difference.
        let in_span = p.project(&psi);
        assert!((potential_v_truncated(&in_span, &p, 11.0, &bg).unwrap() - potential_v(&in_span, 11.0, &bg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trivial_weights() {
        let bg = background(1, 1, 11.0, 50);
        let params = ModelParams::new(1, 1, 11.0, 50).unwrap();
        let ens = Ensemble { params, seed: 0, grid: bg.grid, samples: vec![vec![0.0; 51]; 10] };
        let w = gibbs_reweight(ens.clone(), 11.0, &bg).unwrap();
        assert_eq!(w.z_hat, 1.0);
        assert_eq!(w.ess, 10.0);
        assert!(w.warning.is_some());
        let m = exp_moment(&ens, 0.0, 11.0, &bg).unwrap();
        assert_eq!(m.estimate, 1.0);
        assert_eq!(moment_threshold(2.0), 1.125);
        let rep = increment_diagnostic(&ens, &bg, &[4.0, 6.0], &[49], 2.0).unwrap();
        assert_eq!(rep.n_increments[0].1, 0.0);
    }

    #[test]
    fn systematic_resampling_follows_weights() {
        let params = ModelParams::new(0, 0, 3.0, 4).unwrap();
        let ens = Ensemble { params, seed: 0, grid: params.grid(), samples: vec![vec![0.0; 5]; 4] };
        let lw = vec![0.0, (3.0f64).ln(), f64::ln(1e-300), 0.0];
        let w = WeightedEnsemble::from_log_weights(ens, lw).unwrap();
        let idx = w.resample(1000, 3);
        let count = |k| idx.iter().filter(|i| **i == k).count();
        assert_eq!(count(2), 0);
        assert!((count(1) as i64 - 600).abs() <= 1);
        assert!((count(0) as i64 - 200).abs() <= 1);
    }
}
