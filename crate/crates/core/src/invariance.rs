//! Distributional invariance tests and the windowed-norm resolution probe.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{evolve, FlowConfig};
use crate::error::{EquiwaveError, Result};
use crate::gibbs::{effective_sample_size, potential_truncated_upto, potential_upto, systematic_resample, SineProjector, ESS_FLOOR};
use crate::grid::{Field, ModelParams, PhaseState, RadialGrid};
use crate::kernels::holder_parts;
use crate::measures::{bridge_sampler, CholeskySampler, FieldSampler, WhiteNoiseSampler};
use crate::operator::{assemble, eigendecompose_lowest, SpectralBasis};
use crate::rng;
use crate::soliton::{compute_soliton, Background, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
use crate::stats;

/// Family-wise significance level of the KS tests.
pub const FAMILY_LEVEL: f64 = 0.01;
/// Gaussian pool size per requested Gibbs sample.
pub const POOL_FACTOR: usize = 4;
pub const SPECTRAL_OBSERVABLES: usize = 8;

const SEED_POSITION: u64 = 11;
const SEED_VELOCITY: u64 = 12;
const SEED_RESAMPLE: u64 = 13;
const SEED_REFERENCE: u64 = 14;

/// (1 - s^2)^4 on |s| < 1 with s = (r - c)/w, and its first two derivatives.
pub fn bump(r: f64, c: f64, w: f64) -> [f64; 3] {
    let s = (r - c) / w;
    if s.abs() >= 1.0 {
        return [0.0; 3];
    }
    let a = 1.0 - s * s;
    [a.powi(4), -8.0 * s * a.powi(3) / w, (-8.0 * a.powi(3) + 48.0 * s * s * a * a) / (w * w)]
}

/// Scalar functionals evaluated on phase states.
#[derive(Clone, Debug)]
pub struct ObservableSet {
    pub grid: RadialGrid,
    pub names: Vec<String>,
    radii: Vec<usize>,
    /// -phi' for the velocity pairings <psi_t, phi> = -int W phi'.
    pairings: Vec<Vec<f64>>,
    modes: SpectralBasis,
    bg: Background,
    proj: Option<SineProjector>,
}

impl ObservableSet {
    /// Four radii, three velocity pairings, the potential and the lowest eight
    /// coefficients in the eigenbasis of A.
    ///
    /// Test functions are derivatives of bumps, so they have zero mean and the
    /// pairings do not see the endpoint value of W.
    pub fn standard(op_basis: SpectralBasis, bg: &Background, proj: Option<SineProjector>) -> Result<Self> {
        let grid = bg.grid;
        let radius = grid.radius();
        let mut names = Vec::new();
        let mut radii = Vec::new();
        for r in [2.0, radius / 8.0, radius / 4.0, radius / 2.0] {
            let i = grid.index_of_floor(r.max(1.0 + grid.spacing()));
            radii.push(i);
            names.push(format!("psi(r={:.3})", grid.node(i)));
        }
        let mut pairings = Vec::new();
        let width = (radius - 1.0) / 16.0;
        for c in [1.0 + (radius - 1.0) / 8.0, 1.0 + (radius - 1.0) / 4.0, 1.0 + (radius - 1.0) / 2.0] {
            pairings.push(grid.nodes().iter().map(|r| -bump(*r, c, width)[2]).collect());
            names.push(format!("<psi_t, phi'(c={c:.2})>"));
        }
        names.push(if proj.is_some() { "V^(N)".into() } else { "V".into() });
        for m in 0..op_basis.len().min(SPECTRAL_OBSERVABLES) {
            names.push(format!("<psi, e_{}>", m + 1));
        }
        Ok(ObservableSet { grid, names, radii, pairings, modes: op_basis, bg: bg.clone(), proj })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn evaluate(&self, state: &PhaseState) -> Vec<f64> {
        let psi = &state.psi.values;
        let w = &state.w.values;
        let h = self.grid.spacing();
        let m = self.grid.intervals();
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.radii.iter().map(|&i| psi[i]));
        for phi in &self.pairings {
            let s: f64 = (0..=m).map(|i| if i == 0 || i == m { 0.5 } else { 1.0 } * w[i] * phi[i]).sum();
            out.push(-h * s);
        }
        out.push(match &self.proj {
            Some(p) => potential_truncated_upto(psi, &p.project(psi), m, &self.bg),
            None => potential_upto(psi, m, &self.bg),
        });
        for j in 0..self.modes.len().min(SPECTRAL_OBSERVABLES) {
            out.push(self.modes.coefficient(psi, j));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservableStat {
    pub name: String,
    /// KS distance between the evolved ensemble and an independent reference draw.
    pub ks_distance: f64,
    pub p_value: f64,
    /// KS distance between the same particles at t = 0 and t = T.
    pub paired_distance: f64,
    /// Mean difference (t = T minus t = 0) in units of the combined standard error.
    pub z_mean: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub params: ModelParams,
    pub truncation: Option<usize>,
    pub time: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub pool_size: usize,
    pub velocity_law: VelocityLaw,
    pub ess: f64,
    pub family_level: f64,
    pub per_test_level: f64,
    pub observables: Vec<ObservableStat>,
    pub passed: bool,
}

/// Law of the initial velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VelocityLaw {
    /// I.i.d. nodal white noise; W is a random walk.
    #[default]
    Walk,
    /// Derivative of a Brownian bridge, so that W(R) = 0.
    Bridge,
}

impl std::str::FromStr for VelocityLaw {
    type Err = EquiwaveError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk" => Ok(VelocityLaw::Walk),
            "bridge" => Ok(VelocityLaw::Bridge),
            _ => Err(EquiwaveError::InvalidArgument(format!("unknown velocity law {s:?}"))),
        }
    }
}

/// Draws (psi, W) from the Gibbs measure by resampling a Gaussian pool.
pub struct GibbsStateSampler {
    pub params: ModelParams,
    pub bg: Background,
    pub position: CholeskySampler,
    pub velocity: Box<dyn FieldSampler>,
    pub velocity_law: VelocityLaw,
    pub proj: Option<SineProjector>,
}

impl GibbsStateSampler {
    pub fn new(
        params: ModelParams,
        bg: Background,
        position: CholeskySampler,
        proj: Option<SineProjector>,
        velocity_law: VelocityLaw,
    ) -> Result<Self> {
        let velocity: Box<dyn FieldSampler> = match velocity_law {
            VelocityLaw::Walk => Box::new(WhiteNoiseSampler { grid: params.grid() }),
            VelocityLaw::Bridge => Box::new(bridge_sampler(params.radius, params.intervals)?),
        };
        Ok(GibbsStateSampler { params, bg, position, velocity, velocity_law, proj })
    }

    fn potential(&self, psi: &[f64]) -> f64 {
        let m = self.bg.grid.intervals();
        match &self.proj {
            Some(p) => potential_truncated_upto(psi, &p.project(psi), m, &self.bg),
            None => potential_upto(psi, m, &self.bg),
        }
    }

    fn state(&self, seed: u64, pool_index: u64, velocity_index: u64) -> PhaseState {
        let grid = self.bg.grid;
        let psi = self.position.draw(rng::derive_seed(seed, SEED_POSITION), pool_index);
        let w = self.velocity.draw(rng::derive_seed(seed, SEED_VELOCITY), velocity_index);
        PhaseState { psi: Field { grid, values: psi }, w: Field { grid, values: w }, time: 0.0 }
    }

    /// `count` states plus the pool ESS. Pool members are regenerated from their
    /// index, so only the weights are held in memory.
    pub fn draw(&self, count: usize, seed: u64) -> Result<(Vec<PhaseState>, f64)> {
        let pool = POOL_FACTOR * count;
        let pos_seed = rng::derive_seed(seed, SEED_POSITION);
        let log_w: Vec<f64> = (0..pool as u64)
            .into_par_iter()
            .map(|j| -self.potential(&self.position.draw(pos_seed, j)))
            .collect();
        if let Some(j) = log_w.iter().position(|w| !w.is_finite()) {
            return Err(EquiwaveError::InvalidArgument(format!("non-finite potential at pool member {j}")));
        }
        let ess = effective_sample_size(&log_w);
        if ess < ESS_FLOOR.max(count as f64) {
            return Err(EquiwaveError::EssTooLow { ess, floor: ESS_FLOOR.max(count as f64) });
        }
        let picks = systematic_resample(&log_w, count, rng::derive_seed(seed, SEED_RESAMPLE));
        let states = picks
            .par_iter()
            .enumerate()
            .map(|(j, &p)| self.state(seed, p as u64, j as u64))
            .collect();
        Ok((states, ess))
    }
}

fn compare(
    names: &[String],
    reference: &[Vec<f64>],
    initial: &[Vec<f64>],
    evolved: &[Vec<f64>],
) -> (Vec<ObservableStat>, f64) {
    let level = FAMILY_LEVEL / names.len() as f64;
    let column = |set: &[Vec<f64>], j: usize| set.iter().map(|v| v[j]).collect::<Vec<f64>>();
    let stats = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (a, b, c) = (column(reference, j), column(initial, j), column(evolved, j));
            let (d, p) = stats::ks_two_sample(&a, &c);
            let (paired, _) = stats::ks_two_sample(&b, &c);
            ObservableStat {
                name: name.clone(),
                ks_distance: d,
                p_value: p,
                paired_distance: paired,
                z_mean: stats::mean_z_score(&c, &b),
                pass: p >= level,
            }
        })
        .collect();
    (stats, level)
}

struct Setup {
    params: ModelParams,
    bg: Background,
    sampler: GibbsStateSampler,
    observables: ObservableSet,
}

fn setup(params: &ModelParams, truncation: Option<usize>, velocity_law: VelocityLaw) -> Result<Setup> {
    params.validate()?;
    let profile = compute_soliton(params, DEFAULT_FAR_RADIUS.max(params.radius), DEFAULT_TOL)?;
    let op = assemble(params, &profile)?;
    let bg = profile.on_grid(params.grid())?;
    let basis = eigendecompose_lowest(&op, SPECTRAL_OBSERVABLES)?;
    let proj = truncation.map(|n| SineProjector::new(bg.grid, n)).transpose()?;
    let sampler = GibbsStateSampler::new(*params, bg.clone(), CholeskySampler::new(&op)?, proj.clone(), velocity_law)?;
    let observables = ObservableSet::standard(basis, &bg, proj)?;
    Ok(Setup { params: *params, bg, sampler, observables })
}

fn run(setup: &Setup, truncation: Option<usize>, time: f64, count: usize, seed: u64) -> Result<InvarianceReport> {
    if count < 2 {
        return Err(EquiwaveError::TooFewSamples { got: count, need: 2 });
    }
    let (states, ess) = setup.sampler.draw(count, seed)?;
    let (reference, _) = setup.sampler.draw(count, rng::derive_seed(seed, SEED_REFERENCE))?;
    let mut cfg = FlowConfig::cfl1(setup.bg.grid, time);
    cfg.truncation = truncation;
    let obs = &setup.observables;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = states
        .par_iter()
        .map(|s| {
            let tr = evolve(s, &cfg, &setup.bg)?;
            Ok((obs.evaluate(s), obs.evaluate(tr.last())))
        })
        .collect::<Result<_>>()?;
    let ref_obs: Vec<Vec<f64>> = reference.par_iter().map(|s| obs.evaluate(s)).collect();
    let (initial, evolved): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let (observables, level) = compare(&obs.names, &ref_obs, &initial, &evolved);
    let passed = observables.iter().all(|o| o.pass);
    Ok(InvarianceReport {
        params: setup.params,
        truncation,
        time: cfg.steps() as f64 * cfg.dt,
        sample_count: count,
        seed,
        pool_size: POOL_FACTOR * count,
        velocity_law: setup.sampler.velocity_law,
        ess,
        family_level: FAMILY_LEVEL,
        per_test_level: level,
        observables,
        passed,
    })
}

/// Invariance of the truncated Gibbs measure under the Galerkin flow.
pub fn invariance_test_truncated(params: &ModelParams, n: usize, time: f64, count: usize, seed: u64) -> Result<InvarianceReport> {
    invariance_test_truncated_with(params, n, time, count, seed, VelocityLaw::Walk)
}

pub fn invariance_test_truncated_with(
    params: &ModelParams,
    n: usize,
    time: f64,
    count: usize,
    seed: u64,
    velocity_law: VelocityLaw,
) -> Result<InvarianceReport> {
    if n == 0 || 8 * n > params.intervals {
        return Err(EquiwaveError::InvalidArgument(format!(
            "truncation N = {n} must satisfy 1 <= N <= M/8 = {}",
            params.intervals / 8
        )));
    }
    let s = setup(params, Some(n), velocity_law)?;
    run(&s, Some(n), time, count, seed)
}

/// Invariance of the Gibbs measure under the full flow.
pub fn invariance_test_full(params: &ModelParams, time: f64, count: usize, seed: u64) -> Result<InvarianceReport> {
    invariance_test_full_with(params, time, count, seed, VelocityLaw::Walk)
}

pub fn invariance_test_full_with(
    params: &ModelParams,
    time: f64,
    count: usize,
    seed: u64,
    velocity_law: VelocityLaw,
) -> Result<InvarianceReport> {
    let s = setup(params, None, velocity_law)?;
    run(&s, None, time, count, seed)
}

/// Weighted exponents of the windowed norm on [1, 2].
pub const PROBE_ALPHA: f64 = 0.45;
pub const PROBE_KAPPA: f64 = -0.55;
pub const PROBE_WINDOW: f64 = 2.0;

/// ||psi||_{C^{0,a,k}([1,2])} + ||W - W(1)||_{C^{0,a,k}([1,2])}.
pub fn windowed_norm(state: &PhaseState) -> Result<f64> {
    let grid = state.grid();
    let li = grid.index_of(PROBE_WINDOW)?;
    let sub = grid.prefix(li);
    let p = holder_parts(&state.psi.values[..=li], sub, PROBE_ALPHA, PROBE_KAPPA);
    let w0 = state.w.values[0];
    let w: Vec<f64> = state.w.values[..=li].iter().map(|v| v - w0).collect();
    let q = holder_parts(&w, sub, PROBE_ALPHA, PROBE_KAPPA);
    Ok(p[0] + p[1] + q[0] + q[1])
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub params: ModelParams,
    pub seed: u64,
    pub sample_count: usize,
    pub times: Vec<f64>,
    /// Median windowed norm of the Gibbs ensemble at t = 0 followed by each horizon.
    pub gibbs_median: Vec<f64>,
    /// Largest |log2(median(t)/median(0))| over the horizons.
    pub band_log2: f64,
    pub within_band: bool,
    pub smooth_center: f64,
    pub light_crossing: f64,
    /// Windowed norm of the deterministic run at t = 0 followed by each horizon.
    pub smooth_norm: Vec<f64>,
    pub smooth_decreasing: bool,
}

/// Bump data for the deterministic comparison run.
pub const PROBE_BUMP_CENTER: f64 = 6.0;
pub const PROBE_BUMP_WIDTH: f64 = 1.0;
pub const PROBE_BUMP_AMPLITUDE: f64 = 0.5;

/// Windowed norms of Gibbs samples and of smooth compact data at the horizon times.
pub fn resolution_probe(params: &ModelParams, horizons: &[f64], count: usize, seed: u64) -> Result<ProbeReport> {
    let t_max = horizons.iter().cloned().fold(0.0, f64::max);
    if horizons.iter().any(|t| !(*t > 0.0)) || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EquiwaveError::InvalidArgument("horizon times must be positive and increasing".into()));
    }
    if PROBE_WINDOW + t_max + 1.0 > params.radius {
        return Err(EquiwaveError::WindowViolation(format!(
            "horizon {t_max} needs R >= {} (got R = {})",
            PROBE_WINDOW + t_max + 1.0,
            params.radius
        )));
    }
    let s = setup(params, None, VelocityLaw::Walk)?;
    let cfg = FlowConfig::cfl1(s.bg.grid, t_max).with_snapshots(horizons.to_vec());
    let (states, _) = s.sampler.draw(count, seed)?;
    let norms: Vec<Vec<f64>> = states
        .par_iter()
        .map(|st| {
            let tr = evolve(st, &cfg, &s.bg)?;
            let mut v = vec![windowed_norm(st)?];
            for snap in &tr.snapshots {
                v.push(windowed_norm(snap)?);
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let gibbs_median: Vec<f64> = (0..=horizons.len()).map(|j| stats::median(&norms.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
    let band_log2 = gibbs_median[1..].iter().map(|m| (m / gibbs_median[0]).log2().abs()).fold(0.0, f64::max);

    let grid = s.bg.grid;
    let psi = Field::from_fn(grid, |r| PROBE_BUMP_AMPLITUDE * bump(r, PROBE_BUMP_CENTER, PROBE_BUMP_WIDTH)[0]);
    let smooth = PhaseState::new(psi, Field::zeros(grid))?;
    let tr = evolve(&smooth, &cfg, &s.bg)?;
    let mut smooth_norm = vec![windowed_norm(&smooth)?];
    for snap in &tr.snapshots {
        smooth_norm.push(windowed_norm(snap)?);
    }
    let light_crossing = PROBE_BUMP_CENTER + PROBE_BUMP_WIDTH + PROBE_WINDOW - 2.0;
    let after: Vec<f64> = horizons
        .iter()
        .zip(&smooth_norm[1..])
        .filter(|(t, _)| **t >= light_crossing)
        .map(|(_, n)| *n)
        .collect();
    let smooth_decreasing = after.windows(2).all(|w| w[1] < w[0]);
    Ok(ProbeReport {
        params: *params,
        seed,
        sample_count: count,
        times: std::iter::once(0.0).chain(tr.snapshots.iter().map(|s| s.time)).collect(),
        gibbs_median,
        band_log2,
        within_band: band_log2 <= 1.0,
        smooth_center: PROBE_BUMP_CENTER,
        light_crossing,
        smooth_norm,
        smooth_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivatives_match_differences() {
        let e = 1e-5;
        for r in [2.3, 2.9, 3.6] {
            let [_, d1, d2] = bump(r, 3.0, 1.0);
            let fd1 = (bump(r + e, 3.0, 1.0)[0] - bump(r - e, 3.0, 1.0)[0]) / (2.0 * e);
            let fd2 = (bump(r + e, 3.0, 1.0)[1] - bump(r - e, 3.0, 1.0)[1]) / (2.0 * e);
            assert!((d1 - fd1).abs() < 1e-8 && (d2 - fd2).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_time_gives_zero_paired_distance() {
        let p = ModelParams::new(1, 1, 12.0, 96).unwrap();
        let r = invariance_test_full(&p, 0.0, 200, 3).unwrap();
        assert!(r.observables.iter().all(|o| o.paired_distance == 0.0 && o.z_mean == 0.0));
        assert!(r.observables.iter().all(|o| (0.0..=1.0).contains(&o.p_value)));
        assert_eq!(r.observables.len(), 16);
    }

    #[test]
    fn small_truncated_run_passes() {
        let p = ModelParams::new(1, 1, 12.0, 96).unwrap();
        let r = invariance_test_truncated(&p, 4, 3.0, 1000, 5).unwrap();
        assert!(r.passed, "{:#?}", r.observables);
        assert!(invariance_test_truncated(&p, 13, 3.0, 10, 5).is_err());
    }

    #[test]
    fn bridge_velocity_is_not_invariant() {
        let p = ModelParams::new(1, 1, 12.0, 96).unwrap();
        let r = invariance_test_truncated_with(&p, 4, 3.0, 1000, 5, VelocityLaw::Bridge).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn zero_state_has_zero_norm() {
        let grid = RadialGrid::new(10.0, 90);
        assert_eq!(windowed_norm(&PhaseState::zeros(grid)).unwrap(), 0.0);
    }

    #[test]
    fn probe_window_is_enforced() {
        let p = ModelParams::new(1, 1, 20.0, 190).unwrap();
        assert!(matches!(resolution_probe(&p, &[10.0, 20.0], 10, 1), Err(EquiwaveError::WindowViolation(_))));
    }
}
