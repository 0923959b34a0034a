//! Topological soliton profiles Q_{n,k} by shooting on Q'(1).

use std::f64::consts::PI;

use crate::error::{EquiwaveError, Result};
use crate::grid::{ModelParams, RadialGrid};
use crate::stats;

pub const DEFAULT_FAR_RADIUS: f64 = 200.0;
/// Residual tolerance; limited by the difference formula used to measure it.
pub const DEFAULT_TOL: f64 = 1e-6;
/// RK4 steps per unit length.
pub const STEPS_PER_UNIT: usize = 256;

/// Q and Q' on [1, R_far] together with the asymptotic coefficient alpha.
#[derive(Clone, Debug)]
pub struct SolitonProfile {
    pub params: ModelParams,
    pub grid: RadialGrid,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub alpha: f64,
    /// The converged shooting slope Q'(1).
    pub slope_at_one: f64,
    /// Sup norm of the stationary-equation residual at interior nodes.
    pub residual: f64,
}

enum Shot {
    Over,
    Under,
}

fn rhs(coupling: f64, r: f64, q: f64, p: f64) -> (f64, f64) {
    (p, -2.0 * p / r + coupling / (2.0 * r * r) * (2.0 * q).sin())
}

fn rk4_step(coupling: f64, r: f64, q: f64, p: f64, h: f64) -> (f64, f64) {
    let (k1q, k1p) = rhs(coupling, r, q, p);
    let (k2q, k2p) = rhs(coupling, r + 0.5 * h, q + 0.5 * h * k1q, p + 0.5 * h * k1p);
    let (k3q, k3p) = rhs(coupling, r + 0.5 * h, q + 0.5 * h * k2q, p + 0.5 * h * k2p);
    let (k4q, k4p) = rhs(coupling, r + h, q + h * k3q, p + h * k3p);
    (
        q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )
}

struct Shooter {
    coupling: f64,
    target: f64,
    kp1: f64,
    grid: RadialGrid,
}

impl Shooter {
    fn classify(&self, slope: f64) -> Shot {
        let h = self.grid.spacing();
        let (mut q, mut p) = (0.0, slope);
        for i in 0..self.grid.intervals() {
            let r = self.grid.node(i);
            (q, p) = rk4_step(self.coupling, r, q, p, h);
            if q >= self.target {
                return Shot::Over;
            }
            if p <= 0.0 {
                return Shot::Under;
            }
        }
        // Robin closure from Q ~ n pi - alpha r^{-(k+1)}.
        let rf = self.grid.radius();
        if q + rf * p / self.kp1 - self.target > 0.0 {
            Shot::Over
        } else {
            Shot::Under
        }
    }

    fn trajectory(&self, slope: f64) -> (Vec<f64>, Vec<f64>) {
        let h = self.grid.spacing();
        let n = self.grid.len();
        let mut qs = Vec::with_capacity(n);
        let mut ps = Vec::with_capacity(n);
        let (mut q, mut p) = (0.0, slope);
        qs.push(q);
        ps.push(p);
        for i in 0..self.grid.intervals() {
            (q, p) = rk4_step(self.coupling, self.grid.node(i), q, p, h);
            qs.push(q);
            ps.push(p);
        }
        (qs, ps)
    }
}

/// Solve the stationary equation with Q(1) = 0 and Q -> n pi on [1, far_radius].
pub fn compute_soliton(params: &ModelParams, far_radius: f64, tol: f64) -> Result<SolitonProfile> {
    params.validate()?;
    if far_radius < params.radius.max(50.0) {
        return Err(EquiwaveError::InvalidArgument(format!(
            "far radius {far_radius} must be at least max(R, 50)"
        )));
    }
    let steps = ((far_radius - 1.0) * STEPS_PER_UNIT as f64).ceil() as usize;
    let grid = RadialGrid::new(far_radius, steps);
    if params.n == 0 {
        return Ok(SolitonProfile {
            params: *params,
            grid,
            q: vec![0.0; grid.len()],
            dq: vec![0.0; grid.len()],
            alpha: 0.0,
            slope_at_one: 0.0,
            residual: 0.0,
        });
    }
    let kf = params.k as f64;
    let shooter = Shooter {
        coupling: params.coupling(),
        target: params.n as f64 * PI,
        kp1: kf + 1.0,
        grid,
    };

    // Bracket: scan Q'(1) over (0, 10].
    let scan = 400;
    let mut lo = 0.0;
    let mut hi = f64::NAN;
    for j in 1..=scan {
        let s = 10.0 * j as f64 / scan as f64;
        match shooter.classify(s) {
            Shot::Under => lo = s,
            Shot::Over => {
                hi = s;
                break;
            }
        }
    }
    if hi.is_nan() {
        return Err(EquiwaveError::ShootingFailed { iterations: scan, lo, hi: 10.0 });
    }
    let budget = 200;
    let mut iterations = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi {
        if iterations == budget {
            return Err(EquiwaveError::ShootingFailed { iterations, lo, hi });
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shooter.classify(mid) {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
        }
        iterations += 1;
    }
    let slope = 0.5 * (lo + hi);
    let (q, dq) = shooter.trajectory(slope);
    let rf = grid.radius();
    let alpha = dq[grid.intervals()] * rf.powf(kf + 2.0) / (kf + 1.0);
    let mut profile = SolitonProfile {
        params: *params,
        grid,
        q,
        dq,
        alpha,
        slope_at_one: slope,
        residual: 0.0,
    };
    profile.residual = stationary_residual(&profile);
    if !(profile.residual <= tol) {
        return Err(EquiwaveError::ShootingFailed { iterations, lo, hi });
    }
    Ok(profile)
}

/// Sup norm of -Q'' - (2/r) Q' + (k(k+1)/(2 r^2)) sin 2Q using a fourth-order difference of Q'.
pub fn stationary_residual(p: &SolitonProfile) -> f64 {
    (2..p.grid.len().saturating_sub(2)).map(|i| stationary_residual_at(p, i).abs()).fold(0.0, f64::max)
}

/// Residual at profile node `i`; zero within two nodes of either end.
pub fn stationary_residual_at(p: &SolitonProfile, i: usize) -> f64 {
    let n = p.grid.len();
    if i < 2 || i + 2 >= n {
        return 0.0;
    }
    let h = p.grid.spacing();
    let r = p.grid.node(i);
    let d2 = (-p.dq[i + 2] + 8.0 * p.dq[i + 1] - 8.0 * p.dq[i - 1] + p.dq[i - 2]) / (12.0 * h);
    -d2 - 2.0 * p.dq[i] / r + p.params.coupling() / (2.0 * r * r) * (2.0 * p.q[i]).sin()
}

impl SolitonProfile {
    pub fn far_radius(&self) -> f64 {
        self.grid.radius()
    }

    /// (Q(r), Q'(r)) by cubic Hermite interpolation; the asymptotic form beyond R_far.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let rf = self.far_radius();
        if self.params.n == 0 {
            return (0.0, 0.0);
        }
        if r >= rf {
            let kp1 = self.params.k as f64 + 1.0;
            let target = self.params.n as f64 * PI;
            return (
                target - self.alpha * r.powf(-kp1),
                kp1 * self.alpha * r.powf(-kp1 - 1.0),
            );
        }
        let h = self.grid.spacing();
        let x = ((r - 1.0) / h).max(0.0);
        let i = (x.floor() as usize).min(self.grid.intervals() - 1);
        let t = x - i as f64;
        let (q0, q1, d0, d1) = (self.q[i], self.q[i + 1], self.dq[i] * h, self.dq[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let q = (2.0 * t3 - 3.0 * t2 + 1.0) * q0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * q1
            + (t3 - t2) * d1;
        let dq = ((6.0 * t2 - 6.0 * t) * q0
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (-6.0 * t2 + 6.0 * t) * q1
            + (3.0 * t2 - 2.0 * t) * d1)
            / h;
        (q, dq)
    }

    /// Background quantities on a working grid.
    pub fn on_grid(&self, grid: RadialGrid) -> Result<Background> {
        if grid.radius() > self.far_radius() * (1.0 + 1e-12) {
            return Err(EquiwaveError::GridMismatch(format!(
                "grid radius {} exceeds the profile's far radius {}",
                grid.radius(),
                self.far_radius()
            )));
        }
        let q: Vec<f64> = (0..grid.len()).map(|i| self.eval(grid.node(i)).0).collect();
        Ok(Background::from_values(grid, self.params.coupling(), q))
    }

    /// Check that this profile belongs to `params` and reaches its radius.
    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        if self.params.n != params.n || self.params.k != params.k {
            return Err(EquiwaveError::GridMismatch(format!(
                "profile is for (n,k) = ({},{}), model is ({},{})",
                self.params.n, self.params.k, params.n, params.k
            )));
        }
        if self.far_radius() < params.radius {
            return Err(EquiwaveError::GridMismatch(format!(
                "profile far radius {} is below R = {}",
                self.far_radius(),
                params.radius
            )));
        }
        Ok(())
    }
}

/// Soliton-dependent coefficients sampled on a working grid.
#[derive(Clone, Debug)]
pub struct Background {
    pub grid: RadialGrid,
    /// k(k+1).
    pub coupling: f64,
    pub q: Vec<f64>,
    pub sin2q: Vec<f64>,
    pub cos2q: Vec<f64>,
    pub inv_r: Vec<f64>,
}

impl Background {
    pub fn from_values(grid: RadialGrid, coupling: f64, q: Vec<f64>) -> Self {
        let sin2q = q.iter().map(|v| (2.0 * v).sin()).collect();
        let cos2q = q.iter().map(|v| (2.0 * v).cos()).collect();
        let inv_r = (0..grid.len()).map(|i| 1.0 / grid.node(i)).collect();
        Background { grid, coupling, q, sin2q, cos2q, inv_r }
    }

    /// Q = 0 background, for n = 0.
    pub fn trivial(grid: RadialGrid, coupling: f64) -> Self {
        Background::from_values(grid, coupling, vec![0.0; grid.len()])
    }

    /// Restriction to the first `l` intervals.
    pub fn prefix(&self, l: usize) -> Background {
        Background {
            grid: self.grid.prefix(l),
            coupling: self.coupling,
            q: self.q[..=l].to_vec(),
            sin2q: self.sin2q[..=l].to_vec(),
            cos2q: self.cos2q[..=l].to_vec(),
            inv_r: self.inv_r[..=l].to_vec(),
        }
    }

    /// Linearized potential k(k+1) cos(2Q) / r^2 at every node.
    pub fn linear_potential(&self) -> Vec<f64> {
        self.cos2q
            .iter()
            .zip(&self.inv_r)
            .map(|(c, ir)| self.coupling * c * ir * ir)
            .collect()
    }
}

/// Result of [`asymptotic_fit`].
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct AsymptoticFit {
    pub alpha: f64,
    pub decay_slope: f64,
    pub window: (f64, f64),
}

/// Fit alpha on the far tail and the log-log decay rate of the remainder.
pub fn asymptotic_fit(profile: &SolitonProfile) -> Result<AsymptoticFit> {
    if profile.params.n == 0 {
        return Err(EquiwaveError::InvalidArgument(
            "asymptotic fit needs n >= 1".into(),
        ));
    }
    let kp1 = profile.params.k as f64 + 1.0;
    let target = profile.params.n as f64 * PI;
    let rf = profile.far_radius();
    let g = profile.grid;

    // y = r^{k+1} (n pi - Q) = alpha + c r^{-2(k+1)} on [R_far/4, R_far].
    let start = g.index_of_floor(rf / 4.0);
    let stride = ((g.len() - start) / 400).max(1);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in (start..g.len()).step_by(stride) {
        let r = g.node(i);
        xs.push(r.powf(-2.0 * kp1));
        ys.push(r.powf(kp1) * (target - profile.q[i]));
    }
    let (_, alpha) = stats::linear_fit(&xs, &ys);

    // Remainder window: above r = 3 and where the remainder stays above round-off.
    let r_lo = 3.0;
    let r_hi = (0.5 * 1e10_f64.powf(1.0 / (3.0 * kp1))).min(rf / 4.0);
    if r_hi < 1.5 * r_lo {
        return Err(EquiwaveError::TailTooShort(format!(
            "remainder window [{r_lo}, {r_hi}] is too short"
        )));
    }
    let (mut lr, mut lrem) = (Vec::new(), Vec::new());
    let pts = 60;
    for j in 0..pts {
        let r = r_lo * (r_hi / r_lo).powf(j as f64 / (pts - 1) as f64);
        let i = g.index_of_floor(r);
        let ri = g.node(i);
        let rem = (profile.q[i] - (target - alpha * ri.powf(-kp1))).abs();
        if rem > 0.0 {
            lr.push(ri.ln());
            lrem.push(rem.ln());
        }
    }
    if lr.len() < 10 {
        return Err(EquiwaveError::TailTooShort("remainder vanishes on the window".into()));
    }
    let (decay_slope, _) = stats::linear_fit(&lr, &lrem);
    Ok(AsymptoticFit { alpha, decay_slope, window: (r_lo, r_hi) })
}

/// Trapezoid value of 1/2 int_1^upTo r^2 (Q'^2 + k(k+1) sin^2 Q / r^2).
pub fn energy_of(profile: &SolitonProfile, up_to: f64) -> f64 {
    energy_of_values(profile.grid, profile.params.coupling(), &profile.q, &profile.dq, up_to, 1)
}

/// Same trapezoid sum using every `stride`-th node (for refinement checks).
pub fn energy_of_values(
    grid: RadialGrid,
    coupling: f64,
    q: &[f64],
    dq: &[f64],
    up_to: f64,
    stride: usize,
) -> f64 {
    let last = grid.index_of_floor(up_to.min(grid.radius()));
    let last = last - last % stride;
    let h = grid.spacing() * stride as f64;
    let mut sum = 0.0;
    let mut i = 0;
    while i <= last {
        let r = grid.node(i);
        let s = q[i].sin();
        let dens = 0.5 * (r * r * dq[i] * dq[i] + coupling * s * s);
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        sum += w * h * dens;
        i += stride;
    }
    sum
}

impl RadialGrid {
    /// Largest node index with r_i <= r (clamped to the grid).
    pub fn index_of_floor(&self, r: f64) -> usize {
        let x = (r - 1.0) / self.spacing();
        let i = (x + 1e-9).floor().max(0.0) as usize;
        i.min(self.intervals())
    }
}
