//! Three-level integrators for the radial wave flow in the psi variable:
//! psi_tt - psi_rr + F(psi) = 0 on [1, R] with Dirichlet endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{EquiwaveError, Result};
use crate::gibbs::{potential_truncated_upto, potential_upto, SineProjector};
use crate::grid::{cumulative_trapezoid, Field, PhaseState, RadialGrid};
use crate::kernels::{dalembert_state, restrict0, RampMode};
use crate::soliton::Background;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Unit-CFL scheme, exact for the free part.
    #[default]
    Cfl1,
    Leapfrog,
}

impl std::str::FromStr for Scheme {
    type Err = EquiwaveError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfl1" => Ok(Scheme::Cfl1),
            "leapfrog" => Ok(Scheme::Leapfrog),
            _ => Err(EquiwaveError::InvalidArgument(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Weight of the diagonal stiffness term added to the unit-CFL scheme.
/// At 1/4 the checkerboard mode stays on the unit circle for any q >= 0.
pub const STABILIZATION: f64 = 0.25;

/// Largest leapfrog Courant number accepted.
pub const LEAPFROG_MAX_COURANT: f64 = 0.9;

#[derive(Clone, Debug, Serialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub final_time: f64,
    pub scheme: Scheme,
    pub truncation: Option<usize>,
    /// Times at which to store the state; rounded to the nearest step.
    pub snapshot_times: Vec<f64>,
    pub record_energy: bool,
    pub theta: f64,
}

impl FlowConfig {
    pub fn cfl1(grid: RadialGrid, final_time: f64) -> Self {
        FlowConfig {
            dt: grid.spacing(),
            final_time,
            scheme: Scheme::Cfl1,
            truncation: None,
            snapshot_times: Vec::new(),
            record_energy: false,
            theta: STABILIZATION,
        }
    }

    pub fn leapfrog(dt: f64, final_time: f64) -> Self {
        FlowConfig {
            dt,
            final_time,
            scheme: Scheme::Leapfrog,
            truncation: None,
            snapshot_times: Vec::new(),
            record_energy: false,
            theta: 0.0,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_energy(mut self) -> Self {
        self.record_energy = true;
        self
    }

    pub fn with_truncation(mut self, n: usize) -> Self {
        self.truncation = Some(n);
        self
    }

    pub fn steps(&self) -> usize {
        (self.final_time / self.dt).round().max(0.0) as usize
    }

    fn validate(&self, grid: RadialGrid) -> Result<()> {
        let h = grid.spacing();
        let ok = match self.scheme {
            Scheme::Cfl1 => (self.dt - h).abs() <= 1e-12 * h,
            Scheme::Leapfrog => self.dt > 0.0 && self.dt <= LEAPFROG_MAX_COURANT * h * (1.0 + 1e-12),
        };
        if !ok {
            return Err(EquiwaveError::CflViolation { dt: self.dt, h });
        }
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            return Err(EquiwaveError::InvalidArgument(format!("final time {} must be finite and >= 0", self.final_time)));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(EquiwaveError::InvalidArgument("snapshot times must be sorted".into()));
        }
        if let Some(&t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.final_time + 0.5 * self.dt)) {
            return Err(EquiwaveError::InvalidArgument(format!("snapshot time {t} outside [0, {}]", self.final_time)));
        }
        Ok(())
    }
}

/// Stored states along a flow.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub steps: usize,
    pub snapshots: Vec<PhaseState>,
    /// (t, energy) at every step from t = dt on, when requested.
    pub energy: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn last(&self) -> &PhaseState {
        self.snapshots.last().expect("trajectory always holds the final state")
    }

    /// Largest relative deviation of the energy trace from its first entry.
    pub fn energy_drift(&self) -> f64 {
        let Some(&(_, e0)) = self.energy.first() else { return 0.0 };
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.energy.iter().map(|(_, e)| (e - e0).abs() / scale).fold(0.0, f64::max)
    }
}

/// Right-hand side F(u) of psi_tt - psi_rr + F(psi) = 0.
pub trait Forcing: Sync {
    fn grid(&self) -> RadialGrid;
    fn force(&self, u: &[f64], out: &mut [f64]);
    /// Diagonal of dF/du when F is local; returns false otherwise.
    fn stiffness(&self, _u: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn force_and_stiffness(&self, u: &[f64], force: &mut [f64], stiff: &mut [f64]) -> bool {
        self.force(u, force);
        self.stiffness(u, stiff)
    }
    /// Part of the conserved energy beyond the free term (1/2) int (psi_r^2 + psi_t^2).
    fn potential_energy(&self, u: &[f64]) -> f64;
}

/// F = 0.
pub struct FreeForcing(pub RadialGrid);

impl Forcing for FreeForcing {
    fn grid(&self) -> RadialGrid {
        self.0
    }
    fn force(&self, _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn stiffness(&self, _u: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn potential_energy(&self, _u: &[f64]) -> f64 {
        0.0
    }
}

/// F = r^{-1} N(r^{-1} u), N(x) = (k(k+1)/2)(sin 2(Q+x) - sin 2Q).
pub struct NonlinearForcing<'a> {
    pub bg: &'a Background,
}

#[inline]
fn nonlinear_node(bg: &Background, i: usize, u: f64) -> (f64, f64) {
    let ir = bg.inv_r[i];
    let (s2, c2) = (2.0 * u * ir).sin_cos();
    let half = 0.5 * bg.coupling;
    // sin 2(Q+x) - sin 2Q = cos2Q sin2x - sin2Q (1 - cos2x)
    let f = half * ir * (bg.cos2q[i] * s2 - bg.sin2q[i] * (1.0 - c2));
    let q = bg.coupling * ir * ir * (bg.cos2q[i] * c2 - bg.sin2q[i] * s2);
    (f, q)
}

impl Forcing for NonlinearForcing<'_> {
    fn grid(&self) -> RadialGrid {
        self.bg.grid
    }
    fn force(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = nonlinear_node(self.bg, i, u[i]).0;
        }
    }
    fn stiffness(&self, u: &[f64], out: &mut [f64]) -> bool {
        for (i, o) in out.iter_mut().enumerate() {
            *o = nonlinear_node(self.bg, i, u[i]).1;
        }
        true
    }
    fn force_and_stiffness(&self, u: &[f64], force: &mut [f64], stiff: &mut [f64]) -> bool {
        for (i, (f, q)) in force.iter_mut().zip(stiff.iter_mut()).enumerate() {
            (*f, *q) = nonlinear_node(self.bg, i, u[i]);
        }
        true
    }
    fn potential_energy(&self, u: &[f64]) -> f64 {
        quadratic_potential(self.bg, u) + potential_upto(u, self.bg.grid.intervals(), self.bg)
    }
}

/// F = k(k+1) cos(2Q) r^{-2} u.
pub struct LinearForcing<'a> {
    pub bg: &'a Background,
    q: Vec<f64>,
}

impl<'a> LinearForcing<'a> {
    pub fn new(bg: &'a Background) -> Self {
        LinearForcing { bg, q: bg.linear_potential() }
    }
}

impl Forcing for LinearForcing<'_> {
    fn grid(&self) -> RadialGrid {
        self.bg.grid
    }
    fn force(&self, u: &[f64], out: &mut [f64]) {
        for ((o, q), v) in out.iter_mut().zip(&self.q).zip(u) {
            *o = q * v;
        }
    }
    fn stiffness(&self, _u: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(&self.q);
        true
    }
    fn potential_energy(&self, u: &[f64]) -> f64 {
        quadratic_potential(self.bg, u)
    }
}

/// F = P_N(r^{-1} N(r^{-1} P_N u)).
pub struct TruncatedForcing<'a> {
    pub bg: &'a Background,
    pub proj: &'a SineProjector,
}

impl Forcing for TruncatedForcing<'_> {
    fn grid(&self) -> RadialGrid {
        self.bg.grid
    }
    fn force(&self, u: &[f64], out: &mut [f64]) {
        if self.proj.is_full() {
            return NonlinearForcing { bg: self.bg }.force(u, out);
        }
        let pu = self.proj.project(u);
        let inner: Vec<f64> = pu.iter().enumerate().map(|(i, v)| nonlinear_node(self.bg, i, *v).0).collect();
        out.copy_from_slice(&self.proj.project(&inner));
    }
    fn stiffness(&self, u: &[f64], out: &mut [f64]) -> bool {
        // The projected forcing never reaches the grid-scale modes, so no stabilizer is needed.
        self.proj.is_full() && NonlinearForcing { bg: self.bg }.stiffness(u, out)
    }
    fn potential_energy(&self, u: &[f64]) -> f64 {
        let pu = self.proj.project(u);
        quadratic_potential(self.bg, u) + potential_truncated_upto(u, &pu, self.bg.grid.intervals(), self.bg)
    }
}

fn quadratic_potential(bg: &Background, u: &[f64]) -> f64 {
    let h = bg.grid.spacing();
    let m = bg.grid.intervals();
    let q = bg.linear_potential();
    let s: f64 = (0..=m)
        .map(|i| {
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            w * q[i] * u[i] * u[i]
        })
        .sum();
    0.5 * h * s
}

/// r^{-1} N(r^{-1} psi) nodewise.
pub fn nonlinearity(psi: &Field, bg: &Background) -> Result<Field> {
    psi.grid.check_same(&bg.grid)?;
    let mut out = vec![0.0; psi.len()];
    NonlinearForcing { bg }.force(&psi.values, &mut out);
    Ok(Field { grid: psi.grid, values: out })
}

/// Discrete energy from positions and nodal velocities.
pub fn energy_with_velocity<F: Forcing + ?Sized>(u: &[f64], v: &[f64], forcing: &F) -> f64 {
    let grid = forcing.grid();
    let h = grid.spacing();
    let m = grid.intervals();
    let kinetic: f64 = (0..=m).map(|i| if i == 0 || i == m { 0.5 } else { 1.0 } * v[i] * v[i]).sum::<f64>() * h;
    let gradient: f64 = u.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / h;
    0.5 * (kinetic + gradient) + forcing.potential_energy(u)
}

/// Energy of a smooth state, with the velocity taken from W by central differences.
pub fn energy(state: &PhaseState, bg: &Background) -> Result<f64> {
    state.grid().check_same(&bg.grid)?;
    Ok(energy_with_velocity(&state.psi.values, &state.velocity(), &NonlinearForcing { bg }))
}

fn snapshot_steps(cfg: &FlowConfig, steps: usize) -> Vec<usize> {
    let mut out: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|t| ((t / cfg.dt).round() as usize).min(steps))
        .collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

fn state_at(grid: RadialGrid, prev: &[f64], cur: &[f64], next: &[f64], dt: f64, time: f64) -> PhaseState {
    let v: Vec<f64> = next.iter().zip(prev).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
    PhaseState {
        psi: Field { grid, values: cur.to_vec() },
        w: Field { grid, values: cumulative_trapezoid(&v, grid.spacing()) },
        time,
    }
}

/// Generic three-level evolution driven by `forcing`.
pub fn evolve_with<F: Forcing + ?Sized>(state: &PhaseState, cfg: &FlowConfig, forcing: &F) -> Result<Trajectory> {
    let grid = state.grid();
    grid.check_same(&forcing.grid())?;
    cfg.validate(grid)?;
    let m = grid.intervals();
    let h = grid.spacing();
    let dt = cfg.dt;
    let steps = cfg.steps();
    let marks = snapshot_steps(cfg, steps);
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut energy = Vec::new();
    let t0 = state.time;

    let mut force = vec![0.0; m + 1];
    let mut stiff = vec![0.0; m + 1];
    let prev = state.psi.values.clone();
    forcing.force(&prev, &mut force);
    let cur: Vec<f64> = match cfg.scheme {
        Scheme::Cfl1 => {
            let free = dalembert_state(state, dt)?.psi.values;
            free.iter().zip(&force).map(|(u, f)| u - 0.5 * dt * dt * f).collect()
        }
        Scheme::Leapfrog => {
            let v = state.velocity();
            let mut u = vec![0.0; m + 1];
            for i in 1..m {
                let lap = (prev[i + 1] - 2.0 * prev[i] + prev[i - 1]) / (h * h);
                u[i] = prev[i] + dt * v[i] + 0.5 * dt * dt * (lap - force[i]);
            }
            u
        }
    };
    let mut levels = [prev, cur, vec![0.0; m + 1]];
    let mut mark = 0;
    while mark < marks.len() && marks[mark] == 0 {
        snapshots.push(state.clone());
        mark += 1;
    }
    let courant2 = (dt / h) * (dt / h);
    for step in 1..=steps {
        let [prev, cur, next] = &mut levels;
        let stabilized = if cfg.scheme == Scheme::Cfl1 && cfg.theta != 0.0 {
            forcing.force_and_stiffness(cur, &mut force, &mut stiff)
        } else {
            forcing.force(cur, &mut force);
            false
        };
        match cfg.scheme {
            Scheme::Cfl1 => {
                let dt2 = dt * dt;
                for i in 1..m {
                    let mut rhs = cur[i + 1] + cur[i - 1] - dt2 * force[i];
                    if stabilized {
                        let a = cfg.theta * dt2 * stiff[i];
                        rhs += 2.0 * a * cur[i];
                        next[i] = rhs / (1.0 + a) - prev[i];
                    } else {
                        next[i] = rhs - prev[i];
                    }
                }
            }
            Scheme::Leapfrog => {
                for i in 1..m {
                    next[i] = 2.0 * cur[i] - prev[i] + courant2 * (cur[i + 1] - 2.0 * cur[i] + cur[i - 1])
                        - dt * dt * force[i];
                }
            }
        }
        next[0] = 0.0;
        next[m] = 0.0;
        let t = t0 + step as f64 * dt;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(EquiwaveError::NonFinite { time: t + dt });
        }
        if cfg.record_energy {
            let v: Vec<f64> = next.iter().zip(prev.iter()).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
            energy.push((t, energy_with_velocity(cur, &v, forcing)));
        }
        while mark < marks.len() && marks[mark] == step {
            snapshots.push(state_at(grid, prev, cur, next, dt, t));
            mark += 1;
        }
        levels.rotate_left(1);
    }
    Ok(Trajectory { dt, steps, snapshots, energy })
}

/// Full nonlinear flow.
pub fn evolve(state: &PhaseState, cfg: &FlowConfig, bg: &Background) -> Result<Trajectory> {
    if let Some(n) = cfg.truncation {
        let proj = SineProjector::new(bg.grid, n)?;
        return evolve_truncated(state, cfg, bg, &proj);
    }
    evolve_with(state, cfg, &NonlinearForcing { bg })
}

/// Galerkin-truncated flow with forcing P_N(r^{-1} N(r^{-1} P_N u)).
pub fn evolve_truncated(state: &PhaseState, cfg: &FlowConfig, bg: &Background, proj: &SineProjector) -> Result<Trajectory> {
    proj.grid.check_same(&bg.grid)?;
    evolve_with(state, cfg, &TruncatedForcing { bg, proj })
}

/// Linearized flow around the soliton.
pub fn evolve_linear(state: &PhaseState, cfg: &FlowConfig, bg: &Background) -> Result<Trajectory> {
    evolve_with(state, cfg, &LinearForcing::new(bg))
}

/// Sup difference on [1, K] at time t between the flow on [1, R] and the flow of
/// the data cut down to [1, L] (ramped to zero on [L-1, L]).
pub fn finite_speed_check(state: &PhaseState, t: f64, k: f64, l: f64, bg: &Background) -> Result<f64> {
    let grid = state.grid();
    grid.check_same(&bg.grid)?;
    if !(k + t.abs() + 1.0 <= l + 1e-12 && l <= grid.radius() + 1e-12 && k >= 1.0) {
        return Err(EquiwaveError::WindowViolation(format!(
            "need K + |t| + 1 <= L <= R (K = {k}, t = {t}, L = {l}, R = {})",
            grid.radius()
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let li = grid.index_of(l)?;
    let ki = grid.index_of_floor(k);
    let sub = grid.prefix(li);
    let psi = restrict0(&state.psi, l, RampMode::ZeroAtEnd)?;
    let w = Field { grid: sub, values: state.w.values[..=li].to_vec() };
    let small = PhaseState { psi, w, time: state.time };
    let bg_small = bg.prefix(li);
    let cfg = FlowConfig::cfl1(grid, t.abs());
    let cfg_small = FlowConfig::cfl1(sub, t.abs());
    let (full, part) = if t > 0.0 {
        (evolve(state, &cfg, bg)?, evolve(&small, &cfg_small, &bg_small)?)
    } else {
        (evolve(&reversed(state), &cfg, bg)?, evolve(&reversed(&small), &cfg_small, &bg_small)?)
    };
    let a = &full.last().psi.values;
    let b = &part.last().psi.values;
    Ok((0..=ki).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max))
}

/// Same position, negated velocity.
pub fn reversed(state: &PhaseState) -> PhaseState {
    PhaseState { psi: state.psi.clone(), w: state.w.scaled(-1.0), time: state.time }
}

/// Sup error in psi after evolving to t, negating the velocity and evolving back.
pub fn time_reversal_defect(state: &PhaseState, t: f64, bg: &Background) -> Result<f64> {
    let cfg = FlowConfig::cfl1(state.grid(), t);
    let there = evolve(state, &cfg, bg)?;
    let back = evolve(&reversed(there.last()), &cfg, bg)?;
    let a = &back.last().psi.values;
    Ok(a.iter().zip(&state.psi.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ModelParams;
    use crate::soliton::{compute_soliton, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
    use std::f64::consts::PI;

    fn background(n: u32, k: u32, radius: f64, m: usize) -> Background {
        let p = ModelParams::new(n, k, radius, m).unwrap();
        compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap().on_grid(p.grid()).unwrap()
    }

    fn bump(grid: RadialGrid, center: f64, width: f64, amp: f64) -> PhaseState {
        let psi = Field::from_fn(grid, |r| {
            let s = (r - center) / width;
            if s.abs() < 1.0 {
                amp * (1.0 - s * s).powi(4)
            } else {
                0.0
            }
        });
        PhaseState::new(psi, Field::zeros(grid)).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let bg = background(1, 1, 9.0, 256);
        let s = PhaseState::zeros(bg.grid);
        let tr = evolve(&s, &FlowConfig::cfl1(bg.grid, 3.0), &bg).unwrap();
        assert!(tr.last().psi.values.iter().all(|v| *v == 0.0));
        assert!(tr.last().w.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standing_wave_is_exact() {
        let grid = RadialGrid::new(9.0, 256);
        let bg = Background::trivial(grid, 0.0);
        let mode = 5.0;
        let psi = Field::from_fn(grid, |r| (PI * mode * (r - 1.0) / 8.0).sin());
        let s = PhaseState::new(psi.clone(), Field::zeros(grid)).unwrap();
        let tr = evolve(&s, &FlowConfig::cfl1(grid, 8.0), &bg).unwrap();
        let err = tr.last().psi.values.iter().zip(&psi.values).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn nonlinearity_linearizes() {
        let bg = background(1, 2, 9.0, 128);
        let psi = Field::from_fn(bg.grid, |r| (r - 1.0) * (9.0 - r));
        let q = bg.linear_potential();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 5e-3, 2.5e-3] {
            let f = nonlinearity(&psi.scaled(eps), &bg).unwrap();
            let d = f.values.iter().zip(&psi.values).zip(&q).map(|((f, p), q)| (f / eps - q * p).abs()).fold(0.0, f64::max);
            assert!(d < 0.6 * prev, "{d} vs {prev}");
            prev = d;
        }
        let big = nonlinearity(&psi.scaled(50.0), &bg).unwrap();
        let bound = bg.coupling;
        assert!(big.values.iter().zip(bg.grid.nodes()).all(|(f, r)| (f * r).abs() <= bound + 1e-12));
    }

    #[test]
    fn cfl_guard() {
        let bg = background(1, 1, 9.0, 64);
        let s = PhaseState::zeros(bg.grid);
        let h = bg.grid.spacing();
        let mut cfg = FlowConfig::cfl1(bg.grid, 1.0);
        cfg.dt = 0.5 * h;
        assert!(matches!(evolve(&s, &cfg, &bg), Err(EquiwaveError::CflViolation { .. })));
        let cfg = FlowConfig::leapfrog(0.95 * h, 1.0);
        assert!(matches!(evolve(&s, &cfg, &bg), Err(EquiwaveError::CflViolation { .. })));
    }

    #[test]
    fn truncated_full_matches_full_flow() {
        let bg = background(1, 1, 9.0, 128);
        let s = bump(bg.grid, 4.0, 1.5, 0.8);
        let proj = SineProjector::new(bg.grid, 127).unwrap();
        let cfg = FlowConfig::cfl1(bg.grid, 3.0);
        let a = evolve(&s, &cfg, &bg).unwrap();
        let b = evolve_truncated(&s, &cfg, &bg, &proj).unwrap();
        assert_eq!(a.last().psi.values, b.last().psi.values);
    }

    #[test]
    fn linear_span_is_preserved_without_potential() {
        let grid = RadialGrid::new(9.0, 128);
        let bg = Background::trivial(grid, 0.0);
        let proj = SineProjector::new(grid, 6).unwrap();
        let psi = Field::from_fn(grid, |r| (PI * (r - 1.0) / 8.0).sin() - 0.4 * (3.0 * PI * (r - 1.0) / 8.0).sin());
        let s = PhaseState::new(psi, Field::zeros(grid)).unwrap();
        let tr = evolve_truncated(&s, &FlowConfig::cfl1(grid, 2.5), &bg, &proj).unwrap();
        let u = &tr.last().psi.values;
        let pu = proj.project(u);
        let d = u.iter().zip(&pu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn finite_speed_is_exact_on_the_window() {
        let bg = background(1, 1, 9.0, 256);
        let s = bump(bg.grid, 3.0, 1.0, 0.7);
        let tail = bump(bg.grid, 6.5, 1.0, 1.5);
        let mut psi = s.psi.clone();
        for (a, b) in psi.values.iter_mut().zip(&tail.psi.values) {
            *a += b;
        }
        let w = Field::from_fn(bg.grid, |r| 0.3 * (r - 1.0).sin());
        let state = PhaseState::new(psi, w).unwrap();
        assert_eq!(finite_speed_check(&state, 0.0, 2.0, 5.0, &bg).unwrap(), 0.0);
        let d = finite_speed_check(&state, 1.0, 2.0, 5.0, &bg).unwrap();
        assert!(d <= 1e-10, "{d}");
        let d = finite_speed_check(&state, -1.5, 2.0, 5.0, &bg).unwrap();
        assert!(d <= 1e-10, "{d}");
        assert!(finite_speed_check(&state, 2.5, 2.0, 5.0, &bg).is_err());
    }

    #[test]
    fn reversal_returns_to_the_start() {
        let bg = background(1, 1, 9.0, 256);
        let s = bump(bg.grid, 4.0, 1.5, 0.8);
        let d = time_reversal_defect(&s, 2.0, &bg).unwrap();
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn snapshots_are_ordered_and_dirichlet() {
        let bg = background(1, 1, 9.0, 128);
        let s = bump(bg.grid, 4.0, 1.5, 0.8);
        let cfg = FlowConfig::cfl1(bg.grid, 2.0).with_snapshots(vec![0.0, 0.5, 1.0]);
        let tr = evolve(&s, &cfg, &bg).unwrap();
        assert_eq!(tr.snapshots.len(), 4);
        assert_eq!(tr.snapshots[0], s);
        assert!(tr.snapshots.windows(2).all(|w| w[0].time < w[1].time));
        for snap in &tr.snapshots {
            assert_eq!(snap.psi.values[0], 0.0);
            assert_eq!(*snap.psi.values.last().unwrap(), 0.0);
        }
    }
}
