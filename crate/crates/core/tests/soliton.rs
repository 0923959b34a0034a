//! Soliton profile checks against an independent relaxation solver.

use std::f64::consts::PI;

use equiwave::soliton::{compute_soliton, energy_of_values, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
use equiwave::{rng, ModelParams};
use rand::Rng;

/// Newton relaxation of Q_ss + Q_s - (k(k+1)/2) sin 2Q = 0 in s = ln r, with the
/// same Robin closure at the far end; returns alpha.
fn relaxation_alpha(n: u32, k: u32, far: f64, intervals: usize) -> f64 {
    let kf = k as f64;
    let c = kf * (kf + 1.0);
    let target = n as f64 * PI;
    let len = far.ln();
    let ds = len / intervals as f64;
    let mut q: Vec<f64> = (0..=intervals)
        .map(|j| target * (1.0 - (-(kf + 1.0) * j as f64 * ds).exp()))
        .collect();
    let m = intervals; // unknowns q[1..=m]
    for _ in 0..100 {
        let mut res = vec![0.0; m];
        let mut lo = vec![0.0; m];
        let mut di = vec![0.0; m];
        let mut up = vec![0.0; m];
        for j in 1..=m {
            let qm = q[j - 1];
            let (qp, dqp_dqj, dqp_dqm) = if j < m {
                (q[j + 1], 0.0, 0.0)
            } else {
                // Ghost value from Q + Q_s / (k+1) = n pi.
                (qm + 2.0 * ds * (kf + 1.0) * (target - q[j]), -2.0 * ds * (kf + 1.0), 1.0)
            };
            let a = 1.0 / (ds * ds) - 1.0 / (2.0 * ds);
            let b = 1.0 / (ds * ds) + 1.0 / (2.0 * ds);
            res[j - 1] = a * qm - 2.0 / (ds * ds) * q[j] + b * qp - 0.5 * c * (2.0 * q[j]).sin();
            di[j - 1] = -2.0 / (ds * ds) - c * (2.0 * q[j]).cos() + b * dqp_dqj;
            if j > 1 {
                lo[j - 1] = a + b * dqp_dqm;
            }
            if j < m {
                up[j - 1] = b;
            }
        }
        // Thomas solve J d = -res.
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        cp[0] = up[0] / di[0];
        dp[0] = -res[0] / di[0];
        for i in 1..m {
            let den = di[i] - lo[i] * cp[i - 1];
            cp[i] = up[i] / den;
            dp[i] = (-res[i] - lo[i] * dp[i - 1]) / den;
        }
        let mut d = vec![0.0; m];
        d[m - 1] = dp[m - 1];
        for i in (0..m - 1).rev() {
            d[i] = dp[i] - cp[i] * d[i + 1];
        }
        let step = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for i in 0..m {
            q[i + 1] += d[i];
        }
        if step < 1e-14 {
            break;
        }
    }
    (target - q[m]) * far.powf(kf + 1.0)
}

#[test]
fn shooting_agrees_with_relaxation() {
    // Beyond ~10^4 nodes the relaxation solve is dominated by round-off amplified by
    // R_far^{k+1}, so extrapolate from moderate resolutions.
    for (k, coarse, tol) in [(1u32, 5_000, 1e-6), (2, 2_500, 1e-4)] {
        let p = ModelParams::new(1, k, 40.0, 64).unwrap();
        let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
        let a1 = relaxation_alpha(1, k, DEFAULT_FAR_RADIUS, coarse);
        let a2 = relaxation_alpha(1, k, DEFAULT_FAR_RADIUS, 2 * coarse);
        let extrapolated = (4.0 * a2 - a1) / 3.0;
        let err = (prof.alpha - extrapolated).abs();
        println!("k = {k}: shooting alpha {:.10}, relaxation {:.10}", prof.alpha, extrapolated);
        assert!(err <= tol, "k = {k}: |alpha difference| = {err:e}");
    }
}

fn bump(r: f64, a: f64, b: f64) -> (f64, f64) {
    let x = (2.0 * r - a - b) / (b - a);
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let e = (-1.0 / (1.0 - x * x)).exp();
    let de_dx = e * (-2.0 * x / (1.0 - x * x).powi(2));
    (e, de_dx * 2.0 / (b - a))
}

#[test]
fn profile_minimizes_energy() {
    let p = ModelParams::new(1, 1, 40.0, 64).unwrap();
    let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
    let g = prof.grid;
    let upto = 60.0;
    let base = energy_of_values(g, 2.0, &prof.q, &prof.dq, upto, 1);
    let mut rng = rng::stream(2024, 0);
    for _ in 0..10 {
        let a = rng.gen_range(1.05..20.0);
        let b = a + rng.gen_range(0.5..15.0);
        for eps in [1e-2, -1e-2, 1e-3, -1e-3] {
            let mut q = prof.q.clone();
            let mut dq = prof.dq.clone();
            for i in 0..g.len() {
                let (e, de) = bump(g.node(i), a, b);
                q[i] += eps * e;
                dq[i] += eps * de;
            }
            let e = energy_of_values(g, 2.0, &q, &dq, upto, 1);
            assert!(e > base, "perturbation on [{a}, {b}] with eps {eps} lowered the energy");
        }
    }
}

#[test]
fn degree_two_profile_is_monotone() {
    let p = ModelParams::new(2, 1, 40.0, 64).unwrap();
    let prof = compute_soliton(&p, DEFAULT_FAR_RADIUS, DEFAULT_TOL).unwrap();
    assert!(prof.q.windows(2).all(|w| w[1] > w[0]));
    assert!(prof.q.iter().all(|v| *v < 2.0 * PI));
    assert!(prof.alpha > 0.0);
}
