//! Model parameters, the uniform radial grid and grid fields.

use serde::{Deserialize, Serialize};

use crate::error::{EquiwaveError, Result};

/// Degree `n`, equivariance `k`, outer radius `R`, grid intervals `M` and
/// an optional spectral truncation `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u32,
    pub k: u32,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "M")]
    pub intervals: usize,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

impl ModelParams {
    pub fn new(n: u32, k: u32, radius: f64, intervals: usize) -> Result<Self> {
        let p = ModelParams {
            n,
            k,
            radius,
            intervals,
            truncation: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_truncation(mut self, n_modes: usize) -> Result<Self> {
        self.truncation = Some(n_modes);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 && self.n != 0 {
            return Err(EquiwaveError::InvalidParams(format!(
                "k = 0 is only allowed together with n = 0 (got n = {})",
                self.n
            )));
        }
        if !(self.radius.is_finite() && self.radius > 1.0) {
            return Err(EquiwaveError::InvalidParams(format!(
                "outer radius must exceed 1 (got {})",
                self.radius
            )));
        }
        if self.intervals < 2 {
            return Err(EquiwaveError::InvalidParams(format!(
                "need at least 2 grid intervals (got {})",
                self.intervals
            )));
        }
        if let Some(nm) = self.truncation {
            if nm == 0 {
                return Err(EquiwaveError::InvalidParams(
                    "truncation N must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// The coupling constant k(k+1).
    pub fn coupling(&self) -> f64 {
        let k = self.k as f64;
        k * (k + 1.0)
    }

    pub fn grid(&self) -> RadialGrid {
        RadialGrid::new(self.radius, self.intervals)
    }

    pub fn spacing(&self) -> f64 {
        (self.radius - 1.0) / self.intervals as f64
    }

    /// Same model on a different interval, keeping the grid spacing.
    pub fn with_radius_fixed_spacing(&self, radius: f64) -> Result<Self> {
        let h = self.spacing();
        let m = ((radius - 1.0) / h).round() as usize;
        let mut p = *self;
        p.radius = 1.0 + m as f64 * h;
        p.intervals = m;
        p.validate()?;
        Ok(p)
    }
}

/// Uniform grid r_i = 1 + i h, i = 0..=M.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialGrid {
    spacing: f64,
    intervals: usize,
}

impl RadialGrid {
    pub fn new(radius: f64, intervals: usize) -> Self {
        assert!(intervals >= 1 && radius > 1.0);
        RadialGrid {
            spacing: (radius - 1.0) / intervals as f64,
            intervals,
        }
    }

    /// Grid with a prescribed spacing, so that prefixes share node values bitwise.
    pub fn with_spacing(spacing: f64, intervals: usize) -> Self {
        assert!(intervals >= 1 && spacing > 0.0);
        RadialGrid { spacing, intervals }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn radius(&self) -> f64 {
        self.node(self.intervals)
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        1.0 + i as f64 * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| self.node(i)).collect()
    }

    /// Index of the node at radius `r`, if `r` lies on the grid.
    pub fn index_of(&self, r: f64) -> Result<usize> {
        let x = (r - 1.0) / self.spacing;
        let i = x.round();
        if (x - i).abs() > 1e-8 || i < 0.0 || i as usize > self.intervals {
            return Err(EquiwaveError::GridMismatch(format!(
                "radius {r} is not a node of the grid with h = {}",
                self.spacing
            )));
        }
        Ok(i as usize)
    }

    /// The sub-grid [1, r_l] sharing this grid's spacing.
    pub fn prefix(&self, l: usize) -> RadialGrid {
        assert!(l >= 1 && l <= self.intervals);
        RadialGrid {
            spacing: self.spacing,
            intervals: l,
        }
    }

    /// Trapezoid weights on the nodes 0..=l.
    pub fn trapezoid_weights(&self, l: usize) -> Vec<f64> {
        let h = self.spacing;
        let mut w = vec![h; l + 1];
        w[0] = 0.5 * h;
        w[l] = 0.5 * h;
        w
    }

    /// Linear interpolation of nodal values at an arbitrary radius in [1, R].
    pub fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        let x = (r - 1.0) / self.spacing;
        let xr = x.round();
        if (x - xr).abs() <= 1e-9 * x.abs().max(1.0) {
            let i = (xr.max(0.0) as usize).min(self.intervals);
            return values[i];
        }
        let x = x.clamp(0.0, self.intervals as f64);
        let i = (x.floor() as usize).min(self.intervals - 1);
        let t = x - i as f64;
        (1.0 - t) * values[i] + t * values[i + 1]
    }

    pub(crate) fn same_as(&self, other: &RadialGrid) -> bool {
        self.intervals == other.intervals
            && (self.spacing - other.spacing).abs() <= 1e-14 * self.spacing
    }

    pub(crate) fn check_same(&self, other: &RadialGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(EquiwaveError::GridMismatch(format!(
                "grids differ: (h = {}, M = {}) vs (h = {}, M = {})",
                self.spacing, self.intervals, other.spacing, other.intervals
            )))
        }
    }
}

/// Scalar values on the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(EquiwaveError::GridMismatch(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EquiwaveError::InvalidArgument(format!(
                "non-finite field value at node {i}"
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        Field {
            grid,
            values: (0..grid.len()).map(|i| f(grid.node(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid antiderivative r -> int_1^r f.
    pub fn antiderivative(&self) -> Field {
        Field {
            grid: self.grid,
            values: cumulative_trapezoid(&self.values, self.grid.spacing()),
        }
    }

    /// Linear interpolation at an arbitrary radius in [1, R].
    pub fn at(&self, r: f64) -> f64 {
        self.grid.interpolate(&self.values, r)
    }
}

pub(crate) fn cumulative_trapezoid(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Position psi and velocity antiderivative W at a given time.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub psi: Field,
    pub w: Field,
    pub time: f64,
}

impl PhaseState {
    pub fn new(psi: Field, w: Field) -> Result<Self> {
        psi.grid.check_same(&w.grid)?;
        let n = psi.len() - 1;
        let tol = 1e-12 * (1.0 + psi.sup_norm());
        if psi.values[0].abs() > tol || psi.values[n].abs() > tol {
            return Err(EquiwaveError::InvalidArgument(
                "psi must vanish at both endpoints".into(),
            ));
        }
        if w.values[0].abs() > 1e-12 * (1.0 + w.sup_norm()) {
            return Err(EquiwaveError::InvalidArgument("W(1) must vanish".into()));
        }
        Ok(PhaseState { psi, w, time: 0.0 })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        PhaseState {
            psi: Field::zeros(grid),
            w: Field::zeros(grid),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> RadialGrid {
        self.psi.grid
    }

    /// Nodal velocity from W by central differences (smooth data only).
    pub fn velocity(&self) -> Vec<f64> {
        let h = self.grid().spacing();
        let w = &self.w.values;
        let n = w.len();
        let mut v = vec![0.0; n];
        for i in 1..n - 1 {
            v[i] = (w[i + 1] - w[i - 1]) / (2.0 * h);
        }
        v[0] = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h);
        v[n - 1] = (3.0 * w[n - 1] - 4.0 * w[n - 2] + w[n - 3]) / (2.0 * h);
        v
    }

    /// State with velocity v given nodewise.
    pub fn from_velocity(psi: Field, velocity: &[f64]) -> Result<Self> {
        let w = Field::new(psi.grid, cumulative_trapezoid(velocity, psi.grid.spacing()))?;
        PhaseState::new(psi, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admissibility() {
        assert!(ModelParams::new(1, 1, 40.0, 1024).is_ok());
        assert!(ModelParams::new(0, 2, 40.0, 1024).is_ok());
        assert!(ModelParams::new(0, 0, 40.0, 1024).is_ok());
        assert!(ModelParams::new(1, 0, 40.0, 1024).is_err());
        assert!(ModelParams::new(1, 1, 1.0, 1024).is_err());
        assert!(ModelParams::new(1, 1, 40.0, 1).is_err());
    }

    #[test]
    fn grid_nodes() {
        let g = RadialGrid::new(3.0, 4);
        assert_eq!(g.nodes(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(g.index_of(2.5).unwrap(), 3);
        assert!(g.index_of(2.2).is_err());
        let p = g.prefix(2);
        assert_eq!(p.radius(), 2.0);
    }

    #[test]
    fn antiderivative_of_constant() {
        let g = RadialGrid::new(2.0, 10);
        let f = Field::from_fn(g, |_| 1.0);
        let a = f.antiderivative();
        for (i, v) in a.values.iter().enumerate() {
            assert!((v - (g.node(i) - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_is_exact_for_lines() {
        let g = RadialGrid::new(5.0, 8);
        let f = Field::from_fn(g, |r| 3.0 * r - 1.0);
        for r in [1.0, 1.3, 2.77, 4.999, 5.0] {
            assert!((f.at(r) - (3.0 * r - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_state_boundary_checks() {
        let g = RadialGrid::new(3.0, 8);
        let bad = Field::from_fn(g, |r| r);
        assert!(PhaseState::new(bad, Field::zeros(g)).is_err());
        let ok = Field::from_fn(g, |r| (r - 1.0) * (3.0 - r));
        assert!(PhaseState::new(ok, Field::zeros(g)).is_ok());
    }
}
