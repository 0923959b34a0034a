//! Weighted Hölder norms, odd extension, restriction and the free wave kernels.

use crate::error::{EquiwaveError, Result};
use crate::grid::{cumulative_trapezoid, Field, PhaseState, RadialGrid};

fn check_holder_args(alpha: f64, kappa: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(EquiwaveError::InvalidArgument(format!(
            "Hölder exponent must lie in [0,1) (got {alpha})"
        )));
    }
    if !(kappa <= 0.0) {
        return Err(EquiwaveError::InvalidArgument(format!(
            "weight exponent must be non-positive (got {kappa})"
        )));
    }
    Ok(())
}

/// Discrete C^{0,alpha,kappa} norm: weighted sup plus weighted Hölder seminorm.
pub fn holder_norm_c0(f: &Field, alpha: f64, kappa: f64) -> Result<f64> {
    check_holder_args(alpha, kappa)?;
    Ok(holder_parts(&f.values, f.grid, alpha, kappa).iter().sum())
}

/// Discrete C^{-1,alpha,kappa} norm, i.e. the C0 norm of the trapezoid antiderivative.
pub fn holder_norm_cm1(f: &Field, alpha: f64, kappa: f64) -> Result<f64> {
    holder_norm_c0(&f.antiderivative(), alpha, kappa)
}

/// The two terms of the C0 norm: (weighted sup, weighted Hölder seminorm).
pub fn holder_parts(values: &[f64], grid: RadialGrid, alpha: f64, kappa: f64) -> [f64; 2] {
    let n = values.len();
    let h = grid.spacing();
    let weight: Vec<f64> = (0..n).map(|i| grid.node(i).powf(kappa)).collect();
    let sup = values
        .iter()
        .zip(&weight)
        .fold(0.0_f64, |m, (v, w)| m.max((v * w).abs()));
    // (d h)^{-alpha} for each separation d.
    let inv_dist: Vec<f64> = (0..n)
        .map(|d| if d == 0 { 0.0 } else { (d as f64 * h).powf(-alpha) })
        .collect();
    let mut semi = 0.0_f64;
    for j in 1..n {
        let fj = values[j];
        let mut best = 0.0_f64;
        for i in 0..j {
            let q = (fj - values[i]).abs() * inv_dist[j - i];
            if q > best {
                best = q;
            }
        }
        semi = semi.max(best * weight[j]);
    }
    [sup, semi]
}

/// Fold `x` into [1, R] under the odd double reflection across 1 and R.
pub fn extend_fold(x: f64, radius: f64) -> (f64, f64) {
    if (1.0..=radius).contains(&x) {
        return (x, 1.0);
    }
    let len = radius - 1.0;
    let period = 2.0 * len;
    let y = (x - 1.0).rem_euclid(period);
    if y <= len {
        (1.0 + y, 1.0)
    } else {
        (1.0 + (period - y), -1.0)
    }
}

/// Index version of [`extend_fold`] for a node index offset on a grid with M intervals.
#[inline]
pub(crate) fn fold_index(j: i64, m: usize) -> (usize, f64) {
    let p = 2 * m as i64;
    let y = j.rem_euclid(p) as usize;
    if y <= m {
        (y, 1.0)
    } else {
        (2 * m - y, -1.0)
    }
}

/// Odd extension of nodal values evaluated at `x`.
pub fn eval_odd_extension(values: &[f64], grid: RadialGrid, x: f64) -> f64 {
    let (y, s) = extend_fold(x, grid.radius());
    s * grid.interpolate(values, y)
}

/// Even extension of nodal values evaluated at `x`.
pub fn eval_even_extension(values: &[f64], grid: RadialGrid, x: f64) -> f64 {
    let (y, _) = extend_fold(x, grid.radius());
    grid.interpolate(values, y)
}

/// `f` restricted to [1, L].
pub fn restrict(f: &Field, l: f64) -> Result<Field> {
    let li = f.grid.index_of(l)?;
    if li == 0 {
        return Err(EquiwaveError::InvalidArgument(
            "restriction radius must exceed 1".into(),
        ));
    }
    Ok(Field {
        grid: f.grid.prefix(li),
        values: f.values[..=li].to_vec(),
    })
}

/// How the last unit interval of [`restrict0`] is filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RampMode {
    /// f(L-1) + (r - (L-1)) (f(L) - f(L-1)), ending at f(L).
    #[default]
    AsPrinted,
    /// f(L-1) (L - r), ending at zero so the Dirichlet condition holds at L.
    ZeroAtEnd,
}

/// `f` on [1, L-1] followed by a linear ramp on [L-1, L].
pub fn restrict0(f: &Field, l: f64, mode: RampMode) -> Result<Field> {
    if l < 2.0 {
        return Err(EquiwaveError::InvalidArgument(format!(
            "restrict0 needs L >= 2 (got {l})"
        )));
    }
    let li = f.grid.index_of(l)?;
    let ai = f.grid.index_of(l - 1.0)?;
    let fa = f.values[ai];
    let fl = f.values[li];
    let ra = f.grid.node(ai);
    let rl = f.grid.node(li);
    let mut values = f.values[..=li].to_vec();
    for (i, v) in values.iter_mut().enumerate().skip(ai + 1) {
        let r = f.grid.node(i);
        *v = match mode {
            RampMode::AsPrinted => fa + (r - ra) * (fl - fa),
            RampMode::ZeroAtEnd => fa * (rl - r),
        };
    }
    if mode == RampMode::AsPrinted {
        values[li] = fl;
    } else {
        values[li] = 0.0;
    }
    Ok(Field {
        grid: f.grid.prefix(li),
        values,
    })
}

fn node_shift(t: f64, h: f64) -> Option<i64> {
    let s = t / h;
    let sr = s.round();
    ((s - sr).abs() <= 1e-9 * sr.abs().max(1.0)).then_some(sr as i64)
}

/// Free wave solution at time t from position f and velocity antiderivative W.
pub fn dalembert_linear(f: &Field, w: &Field, t: f64) -> Result<Field> {
    Ok(dalembert_state(&PhaseState { psi: f.clone(), w: w.clone(), time: 0.0 }, t)?.psi)
}

/// Free wave evolution of a full phase state, returning position and W at time t.
pub fn dalembert_state(state: &PhaseState, t: f64) -> Result<PhaseState> {
    let grid = state.grid();
    grid.check_same(&state.w.grid)?;
    let m = grid.intervals();
    let f = &state.psi.values;
    let w = &state.w.values;
    let mut u = vec![0.0; m + 1];
    let mut wt = vec![0.0; m + 1];
    if let Some(s) = node_shift(t, grid.spacing()) {
        let ef = |j: i64| {
            let (i, sg) = fold_index(j, m);
            sg * f[i]
        };
        let ew = |j: i64| w[fold_index(j, m).0];
        let base = ef(s) + ew(s);
        for i in 0..=m {
            let (p, q) = (i as i64 + s, i as i64 - s);
            let (fp, fq, wp, wq) = (ef(p), ef(q), ew(p), ew(q));
            u[i] = 0.5 * (fp + fq) + 0.5 * (wp - wq);
            wt[i] = 0.5 * (fp - fq) + 0.5 * (wp + wq) - base;
        }
    } else {
        let ef = |x: f64| eval_odd_extension(f, grid, x);
        let ew = |x: f64| eval_even_extension(w, grid, x);
        let base = ef(1.0 + t) + ew(1.0 + t);
        for i in 0..=m {
            let r = grid.node(i);
            let (fp, fq, wp, wq) = (ef(r + t), ef(r - t), ew(r + t), ew(r - t));
            u[i] = 0.5 * (fp + fq) + 0.5 * (wp - wq);
            wt[i] = 0.5 * (fp - fq) + 0.5 * (wp + wq) - base;
        }
    }
    u[0] = 0.0;
    u[m] = 0.0;
    wt[0] = 0.0;
    Ok(PhaseState {
        psi: Field { grid, values: u },
        w: Field { grid, values: wt },
        time: state.time + t,
    })
}

/// Forcing sampled at times s_j = j dt, j = 0..=J.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    pub grid: RadialGrid,
    pub dt: f64,
    pub slices: Vec<Vec<f64>>,
}

/// Duhamel integral 1/2 int_0^t int_{r-(t-s)}^{r+(t-s)} Ext h(s, rho) drho ds.
pub fn duhamel(h: &SpaceTimeField, t: f64) -> Result<Field> {
    let grid = h.grid;
    let steps = t / h.dt;
    let j_end = steps.round();
    if (steps - j_end).abs() > 1e-9 * j_end.max(1.0) || j_end < 0.0 {
        return Err(EquiwaveError::InvalidArgument(format!(
            "t = {t} is not a multiple of dt = {}",
            h.dt
        )));
    }
    let j_end = j_end as usize;
    if j_end + 1 > h.slices.len() {
        return Err(EquiwaveError::InvalidArgument(format!(
            "forcing has {} slices, need {}",
            h.slices.len(),
            j_end + 1
        )));
    }
    let m = grid.intervals();
    let mut out = vec![0.0; m + 1];
    if j_end == 0 {
        return Ok(Field { grid, values: out });
    }
    for (j, slice) in h.slices.iter().take(j_end + 1).enumerate() {
        if slice.len() != m + 1 {
            return Err(EquiwaveError::GridMismatch("forcing slice length".into()));
        }
        // The odd extension integrates to the even extension of the antiderivative.
        let anti = cumulative_trapezoid(slice, grid.spacing());
        let tau = (j_end - j) as f64 * h.dt;
        let wq = if j == 0 || j == j_end { 0.5 } else { 1.0 };
        for (i, o) in out.iter_mut().enumerate() {
            let r = grid.node(i);
            let inner = eval_even_extension(&anti, grid, r + tau)
                - eval_even_extension(&anti, grid, r - tau);
            *o += wq * h.dt * inner;
        }
    }
    for o in out.iter_mut() {
        *o *= 0.5;
    }
    Ok(Field { grid, values: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn brute_fold(mut x: f64, radius: f64) -> (f64, f64) {
        let mut s = 1.0;
        loop {
            if x < 1.0 {
                x = 2.0 - x;
                s = -s;
            } else if x > radius {
                x = 2.0 * radius - x;
                s = -s;
            } else {
                return (x, s);
            }
        }
    }

    #[test]
    fn fold_examples() {
        assert_eq!(extend_fold(1.5, 3.0), (1.5, 1.0));
        assert_eq!(extend_fold(0.5, 3.0), (1.5, -1.0));
        assert_eq!(extend_fold(3.5, 3.0), (2.5, -1.0));
    }

    #[test]
    fn fold_matches_reflection_oracle() {
        for i in 0..2000 {
            let x = -30.0 + i as f64 * 0.0371;
            for radius in [1.7, 3.0, 7.25] {
                let (a, s) = extend_fold(x, radius);
                let (b, t) = brute_fold(x, radius);
                assert!((a - b).abs() < 1e-9, "x = {x}");
                if (a - 1.0).abs() > 1e-9 && (a - radius).abs() > 1e-9 {
                    assert_eq!(s, t);
                }
            }
        }
    }

    #[test]
    fn fold_is_odd_about_one_and_radius() {
        for i in 1..500 {
            let x = -10.0 + i as f64 * 0.0437;
            let radius = 4.0;
            let (a, s) = extend_fold(x, radius);
            let (b, t) = extend_fold(2.0 - x, radius);
            assert!((a - b).abs() < 1e-9);
            if (a - 1.0).abs() > 1e-9 && (a - radius).abs() > 1e-9 {
                assert_eq!(s, -t);
            }
            let (c, u) = extend_fold(2.0 * radius - x, radius);
            assert!((a - c).abs() < 1e-9);
            if (a - 1.0).abs() > 1e-9 && (a - radius).abs() > 1e-9 {
                assert_eq!(s, -u);
            }
        }
    }

    #[test]
    fn holder_examples() {
        let g = RadialGrid::new(5.0, 40);
        assert_eq!(holder_norm_c0(&Field::zeros(g), 0.3, -0.5).unwrap(), 0.0);
        let f = Field::from_fn(g, |r| r);
        let v = holder_norm_c0(&f, 0.0, -1.0).unwrap();
        assert!((1.0..=2.0).contains(&v));
        let g2 = RadialGrid::new(2.0, 64);
        let one = Field::from_fn(g2, |_| 1.0);
        assert!((holder_norm_cm1(&one, 0.0, 0.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(holder_norm_c0(&f, 1.0, -1.0).is_err());
        assert!(holder_norm_c0(&f, 0.5, 0.1).is_err());
    }

    #[test]
    fn holder_matches_direct_pair_scan() {
        let g = RadialGrid::new(4.0, 30);
        let f = Field::from_fn(g, |r| (3.0 * r).sin() * r.sqrt());
        let (alpha, kappa) = (0.45, -0.55);
        let mut sup = 0.0_f64;
        let mut semi = 0.0_f64;
        for i in 0..f.len() {
            let ri = g.node(i);
            sup = sup.max((ri.powf(kappa) * f.values[i]).abs());
            for j in 0..f.len() {
                if i != j {
                    let rj = g.node(j);
                    let q = ri.max(rj).powf(kappa) * (f.values[i] - f.values[j])
                        / (ri - rj).abs().powf(alpha);
                    semi = semi.max(q.abs());
                }
            }
        }
        let v = holder_norm_c0(&f, alpha, kappa).unwrap();
        assert!((v - (sup + semi)).abs() < 1e-12 * v);
    }

    #[test]
    fn restrict_examples() {
        let g = RadialGrid::new(5.0, 16);
        let f = Field::from_fn(g, |r| r - 1.0);
        let a = restrict(&f, 2.0).unwrap();
        assert_eq!(a.len(), 5);
        for (i, v) in a.values.iter().enumerate() {
            assert_eq!(*v, g.node(i) - 1.0);
        }
        let b = restrict0(&f, 3.0, RampMode::AsPrinted).unwrap();
        for (i, v) in b.values.iter().enumerate() {
            assert!((v - (g.node(i) - 1.0)).abs() < 1e-14);
        }
        let c = restrict0(&f, 3.0, RampMode::ZeroAtEnd).unwrap();
        assert_eq!(*c.values.last().unwrap(), 0.0);
        assert!((c.values[6] - 0.5).abs() < 1e-14);
        assert!(restrict0(&f, 1.5, RampMode::AsPrinted).is_err());
        let z = restrict0(&Field::zeros(g), 4.0, RampMode::ZeroAtEnd).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standing_wave() {
        let radius = 6.0;
        let g = RadialGrid::new(radius, 200);
        let mode = |r: f64| (PI * (r - 1.0) / (radius - 1.0)).sin();
        let f = Field::from_fn(g, mode);
        let w = Field::zeros(g);
        for t in [0.0, 0.35, 1.0, 2.3, 7.9] {
            let u = dalembert_linear(&f, &w, t).unwrap();
            let c = (PI * t / (radius - 1.0)).cos();
            for i in 0..g.len() {
                let err = (u.values[i] - c * mode(g.node(i))).abs();
                assert!(err < 2e-4, "t = {t}, err = {err}");
            }
        }
        // On-node times are exact.
        let u = dalembert_linear(&f, &w, 1.0).unwrap();
        let c = (PI / (radius - 1.0)).cos();
        for i in 0..g.len() {
            assert!((u.values[i] - c * mode(g.node(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn full_period_and_identity() {
        let g = RadialGrid::new(3.0, 64);
        let f = Field::from_fn(g, |r| (r - 1.0) * (3.0 - r) * (5.0 * r).cos());
        let w = Field::from_fn(g, |r| (2.0 * r).sin() - 2.0_f64.sin());
        let u0 = dalembert_linear(&f, &w, 0.0).unwrap();
        assert_eq!(u0.values, f.values);
        let zero = Field::zeros(g);
        let u = dalembert_linear(&f, &zero, 4.0).unwrap();
        for i in 0..g.len() {
            assert!((u.values[i] - f.values[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn velocity_term_reconstructs_w() {
        // Velocity sin(pi m (r-1)/(R-1)) evolves as a standing wave in time.
        let radius = 5.0;
        let g = RadialGrid::new(radius, 400);
        let k = PI / (radius - 1.0);
        let v0 = |r: f64| (k * (r - 1.0)).sin();
        let w0 = Field::from_fn(g, |r| (1.0 - (k * (r - 1.0)).cos()) / k);
        let st = PhaseState { psi: Field::zeros(g), w: w0, time: 0.0 };
        let t = 1.3;
        let out = dalembert_state(&st, t).unwrap();
        for i in (0..g.len()).step_by(7) {
            let r = g.node(i);
            let exact_u = (k * t).sin() / k * v0(r);
            let exact_w = (k * t).cos() * (1.0 - (k * (r - 1.0)).cos()) / k;
            assert!((out.psi.values[i] - exact_u).abs() < 1e-4);
            assert!((out.w.values[i] - exact_w).abs() < 1e-4);
        }
    }

    #[test]
    fn free_energy_is_conserved() {
        let radius = 5.0;
        let g = RadialGrid::new(radius, 400);
        let h = g.spacing();
        let k = PI / (radius - 1.0);
        let f = Field::from_fn(g, |r| (k * (r - 1.0)).sin());
        let st = PhaseState { psi: f, w: Field::zeros(g), time: 0.0 };
        let energy = |s: &PhaseState| {
            let v = s.velocity();
            let u = &s.psi.values;
            let mut e = 0.0;
            for i in 0..u.len() - 1 {
                e += 0.5 * (u[i + 1] - u[i]).powi(2) / h;
            }
            let w = g.trapezoid_weights(g.intervals());
            e + 0.5 * v.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>()
        };
        let e0 = energy(&st);
        for t in [0.3, 1.1, 2.0] {
            let e = energy(&dalembert_state(&st, t).unwrap());
            assert!((e - e0).abs() / e0 < 1e-4, "t = {t}");
        }
    }

    #[test]
    fn duhamel_of_constant() {
        let g = RadialGrid::new(21.0, 400);
        let dt = g.spacing();
        let c = 0.7;
        let slices = vec![vec![c; g.len()]; 41];
        let h = SpaceTimeField { grid: g, dt, slices };
        let t = 40.0 * dt;
        let d = duhamel(&h, t).unwrap();
        for i in 0..g.len() {
            let r = g.node(i);
            if r - t > 1.0 && r + t < 21.0 {
                assert!((d.values[i] - c * t * t / 2.0).abs() < 1e-12);
            }
        }
        let zero = SpaceTimeField { grid: g, dt, slices: vec![vec![0.0; g.len()]; 3] };
        assert!(duhamel(&zero, 2.0 * dt).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duhamel_solves_forced_wave() {
        // u_tt - u_rr = (1 + k^2 t^2 / 2) sin(k x) is solved by u = t^2/2 sin(k x).
        let radius = 4.0;
        let len = radius - 1.0;
        let g = RadialGrid::new(radius, 600);
        let dt = g.spacing();
        let steps = 200;
        let kk = PI / len;
        let slices: Vec<Vec<f64>> = (0..=steps)
            .map(|j| {
                let s = j as f64 * dt;
                g.nodes().iter().map(|r| (1.0 + kk * kk * s * s / 2.0) * (kk * (r - 1.0)).sin()).collect()
            })
            .collect();
        let t = steps as f64 * dt;
        let d = duhamel(&SpaceTimeField { grid: g, dt, slices }, t).unwrap();
        for i in 0..g.len() {
            let exact = 0.5 * t * t * (kk * (g.node(i) - 1.0)).sin();
            assert!((d.values[i] - exact).abs() < 1e-4, "{} vs {}", d.values[i], exact);
        }
    }

    #[test]
    fn holder_is_homogeneous_and_subadditive() {
        let g = RadialGrid::new(6.0, 50);
        let f = Field::from_fn(g, |r| (r * 1.7).sin() * (r - 1.0));
        let gg = Field::from_fn(g, |r| (r * 0.3).cos() - 0.2 * r);
        let (a, k) = (0.4, -0.3);
        let nf = holder_norm_c0(&f, a, k).unwrap();
        let ng = holder_norm_c0(&gg, a, k).unwrap();
        assert!((holder_norm_c0(&f.scaled(-2.5), a, k).unwrap() - 2.5 * nf).abs() < 1e-12 * nf);
        let sum = Field { grid: g, values: f.values.iter().zip(&gg.values).map(|(x, y)| x + y).collect() };
        assert!(holder_norm_c0(&sum, a, k).unwrap() <= nf + ng + 1e-12);
    }
}
