//! The acceptance suite: fourteen numbered checks at fixed seeds and tolerances.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{evolve, evolve_with, finite_speed_check, FlowConfig, FreeForcing};
use crate::error::{EquiwaveError, Result};
use crate::gibbs::{increment_diagnostic, ESS_FLOOR, potential_upto, potential_v};
use crate::gibbs::{objective_and_gradient, variational_lower_bound};
use crate::grid::{Field, ModelParams, PhaseState, RadialGrid};
use crate::invariance::{
    bump, invariance_test_full, invariance_test_truncated, resolution_probe, GibbsStateSampler, VelocityLaw,
};
use crate::measures::{
    bridge_variance_deviation, growth_and_holder_diagnostic, mercer_check, sample_gaussian, sample_range,
    CholeskySampler,
};
use crate::operator::{find_r0, greens_explicit_matrix, greens_numeric, resolvent_check};
use crate::operator::{assemble, DiscreteOperator};
use crate::soliton::{compute_soliton, Background, SolitonProfile, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
use crate::{io, rng, stats};

pub const DEFAULT_SEED: u64 = 42;
pub const CRITERIA: u8 = 14;

/// Deliberate corruption used to check that the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Adds an antisymmetric perturbation to the numeric Green's matrix in criterion 2.
    GreensAsymmetry,
}

#[derive(Clone, Copy, Debug)]
pub struct AcceptanceOptions {
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { seed: DEFAULT_SEED, fault: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub metrics: Value,
    pub detail: String,
    /// Wall time; left out of the JSON so reruns compare equal.
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptanceReport {
    pub version: String,
    pub seed: u64,
    pub fault: Option<Fault>,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

impl AcceptanceReport {
    pub fn summary(&self) -> String {
        let mut out = format!("equiwave {} acceptance, seed {}\n", self.version, self.seed);
        for c in &self.criteria {
            out.push_str(&c.line());
            out.push('\n');
        }
        let failed: Vec<String> = self.criteria.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
        if failed.is_empty() {
            out.push_str("all criteria passed\n");
        } else {
            out.push_str(&format!("failed: {}\n", failed.join(", ")));
        }
        out
    }
}

pub fn criterion_name(id: u8) -> &'static str {
    match id {
        1 => "Green's closed form",
        2 => "Green's symmetry and bounds",
        3 => "resolvent identity",
        4 => "Mercer covariance",
        5 => "growth and Holder uniformity",
        6 => "potential scaling",
        7 => "exponential moments",
        8 => "Boue-Dupuis bound",
        9 => "increment rates",
        10 => "dynamics exactness and conservation",
        11 => "finite speed",
        12 => "Galerkin rate",
        13 => "invariance",
        14 => "resolution probe",
        _ => "unknown",
    }
}

/// Runs one criterion, turning errors into a failed result.
pub fn run_criterion(id: u8, opts: &AcceptanceOptions) -> CriterionResult {
    let seed = rng::derive_seed(opts.seed, 100 + id as u64);
    let start = Instant::now();
    let outcome = match id {
        1 => greens_closed_form(),
        2 => greens_bounds(opts.fault),
        3 => resolvent(),
        4 => mercer(seed),
        5 => growth(seed),
        6 => potential_scaling(seed),
        7 => exp_moments(seed),
        8 => boue_dupuis(seed),
        9 => increments(seed),
        10 => dynamics_exactness(),
        11 => finite_speed(seed),
        12 => galerkin_rate(seed),
        13 => invariance(seed),
        14 => probe(seed),
        _ => Err(EquiwaveError::InvalidArgument(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let name = criterion_name(id).to_string();
    match outcome {
        Ok((passed, metrics, detail)) => CriterionResult { id, name, passed, metrics, detail, seconds },
        Err(e) => CriterionResult { id, name, passed: false, metrics: Value::Null, detail: format!("error: {e}"), seconds },
    }
}

pub fn run_all(opts: &AcceptanceOptions) -> AcceptanceReport {
    run_selected(opts, &(1..=CRITERIA).collect::<Vec<_>>())
}

pub fn run_selected(opts: &AcceptanceOptions, ids: &[u8]) -> AcceptanceReport {
    let criteria: Vec<CriterionResult> = ids.iter().map(|&id| run_criterion(id, opts)).collect();
    AcceptanceReport {
        version: io::VERSION.to_string(),
        seed: opts.seed,
        fault: opts.fault,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

type Outcome = Result<(bool, Value, String)>;

struct Model {
    params: ModelParams,
    profile: SolitonProfile,
    bg: Background,
    op: DiscreteOperator,
}

fn model(n: u32, k: u32, radius: f64, intervals: usize) -> Result<Model> {
    let params = ModelParams::new(n, k, radius, intervals)?;
    let profile = compute_soliton(&params, DEFAULT_FAR_RADIUS.max(radius), DEFAULT_TOL)?;
    let bg = profile.on_grid(params.grid())?;
    let op = assemble(&params, &profile)?;
    Ok(Model { params, profile, bg, op })
}

/// Intervals for spacing 1/16 on [1, R].
fn sixteenth(radius: f64) -> usize {
    ((radius - 1.0) * 16.0).round() as usize
}

fn order(errors: &[f64]) -> f64 {
    let n = errors.len();
    (errors[n - 2] / errors[n - 1]).log2()
}

fn greens_closed_form() -> Outcome {
    let sizes = [512, 1024, 2048];
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst_err = 0.0_f64;
    let mut worst_order = f64::INFINITY;
    for k in 0..=2u32 {
        let errors: Vec<f64> = sizes
            .iter()
            .map(|&m| {
                let md = model(0, k, 20.0, m)?;
                let gn = greens_numeric(&md.op)?;
                let ge = greens_explicit_matrix(k, md.params.grid());
                let diff = gn.values.iter().zip(&ge.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                Ok(diff / ge.sup())
            })
            .collect::<Result<_>>()?;
        let last = *errors.last().unwrap();
        // At round-off there is nothing left to refine.
        let ord = if last < 1e-10 { f64::INFINITY } else { order(&errors) };
        let ok = last <= 1e-3 && ord >= 1.8;
        passed &= ok;
        worst_err = worst_err.max(last);
        worst_order = worst_order.min(ord);
        rows.push(json!({ "k": k, "M": sizes, "relative_error": errors, "order": finite_or_null(ord), "passed": ok }));
    }
    let detail = format!("max error {worst_err:.2e} at M=2048, min order {}", fmt_order(worst_order));
    Ok((passed, json!({ "R": 20.0, "cases": rows }), detail))
}

fn greens_bounds(fault: Option<Fault>) -> Outcome {
    let base = model(1, 1, 40.0, sixteenth(40.0))?;
    let r0 = find_r0(&base.params, &base.profile, 40.0)?.r0;
    let mut rows = Vec::new();
    let mut worst_sym = 0.0_f64;
    let mut growth = Vec::new();
    let mut min_c = f64::INFINITY;
    for mult in [1.0, 2.0, 4.0] {
        let p = base.params.with_radius_fixed_spacing(mult * r0)?;
        let md = model(1, 1, p.radius, p.intervals)?;
        let mut g = greens_numeric(&md.op)?;
        if fault == Some(Fault::GreensAsymmetry) {
            let len = g.grid.len();
            let (i, j) = (len / 3, len / 2);
            let eps = 1e-6 * g.sup();
            g.values[i * len + j] += eps;
            g.values[j * len + i] -= eps;
        }
        let sym = g.symmetry_defect();
        let gb = g.growth_bound();
        let c = g.diagonal_lower_constant();
        worst_sym = worst_sym.max(sym);
        growth.push(gb);
        min_c = min_c.min(c);
        rows.push(json!({ "R": md.params.radius, "M": md.params.intervals, "symmetry_defect": sym, "growth_bound": gb, "diagonal_constant": c }));
    }
    let lo = growth.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = growth.iter().cloned().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let passed = worst_sym <= 1e-10 && spread <= 0.2 && min_c > 0.0;
    let detail = format!("symmetry {worst_sym:.1e}, growth spread {:.1}%, diagonal c {min_c:.3}", 100.0 * spread);
    Ok((passed, json!({ "R0": r0, "h": 1.0 / 16.0, "radii": rows, "growth_spread": spread }), detail))
}

fn resolvent() -> Outcome {
    let sizes = [200usize, 400, 800];
    let mut rel = Vec::new();
    let mut plus = Vec::new();
    for &m in &sizes {
        let m0 = model(0, 1, 40.0, m)?;
        let mn = model(1, 1, 40.0, m)?;
        let g0 = greens_explicit_matrix(1, mn.params.grid());
        let gn = greens_numeric(&mn.op)?;
        let r = resolvent_check(&m0.op, &mn.op, &g0, &gn)?;
        rel.push(r.relative);
        plus.push(r.relative_plus_sign);
    }
    let ord = order(&rel);
    let last = rel[rel.len() - 1];
    let passed = last <= 1e-3 && ord >= 1.8;
    let detail = format!("residual {last:.2e} at M=800, order {ord:.2}");
    Ok((passed, json!({ "R": 40.0, "M": sizes, "relative_residual": rel, "order": ord, "relative_plus_sign": plus }), detail))
}

fn mercer(seed: u64) -> Outcome {
    let md = model(1, 1, 40.0, 128)?;
    let g = greens_numeric(&md.op)?;
    let sampler = CholeskySampler::new(&md.op)?;
    let ens = sample_gaussian(&sampler, md.params, seed, 200_000);
    let report = mercer_check(&ens, &g)?;
    drop(ens);
    let bridge = model(0, 0, 40.0, 128)?;
    let bens = sample_gaussian(&CholeskySampler::new(&bridge.op)?, bridge.params, rng::derive_seed(seed, 1), 200_000);
    let bridge_dev = bridge_variance_deviation(&bens);
    let passed = report.max_standardized_deviation <= 5.0 && bridge_dev <= 5.0;
    let detail = format!(
        "max standardized deviation {:.2}, bridge variance {:.2} se",
        report.max_standardized_deviation, bridge_dev
    );
    Ok((passed, json!({ "R": 40.0, "M": 128, "samples": 200_000, "mercer": report, "bridge_max_z": bridge_dev }), detail))
}

fn growth(seed: u64) -> Outcome {
    let mut medians = Vec::new();
    let mut rows = Vec::new();
    for radius in [40.0, 80.0] {
        let md = model(1, 1, radius, sixteenth(radius))?;
        let ens = sample_gaussian(&CholeskySampler::new(&md.op)?, md.params, seed, 400);
        let rep = growth_and_holder_diagnostic(&ens, 0.05)?;
        medians.push((rep.sup_statistic.median, rep.holder_statistic.median));
        rows.push(json!({ "R": radius, "M": md.params.intervals, "report": rep }));
    }
    let change = |a: f64, b: f64| (b - a).abs() / a;
    let sup_change = change(medians[0].0, medians[1].0);
    let hol_change = change(medians[0].1, medians[1].1);
    let passed = sup_change < 0.25 && hol_change < 0.25;
    let detail = format!("median change sup {:.1}%, Holder {:.1}%", 100.0 * sup_change, 100.0 * hol_change);
    Ok((passed, json!({ "eps": 0.05, "samples": 400, "radii": rows, "sup_change": sup_change, "holder_change": hol_change }), detail))
}

fn potential_scaling(seed: u64) -> Outcome {
    let md = model(1, 1, 40.0, sixteenth(40.0))?;
    let ens = sample_gaussian(&CholeskySampler::new(&md.op)?, md.params, seed, 20);
    let scaled = |psi: &[f64], e: f64| -> Result<f64> {
        let x: Vec<f64> = psi.iter().map(|v| v * e).collect();
        Ok(potential_v(&x, md.params.radius, &md.bg)? / e.powi(3))
    };
    let mut changes = Vec::new();
    let mut tail_ratio = Vec::new();
    for psi in &ens.samples {
        let (a, b, c) = (scaled(psi, 1e-2)?, scaled(psi, 1e-3)?, scaled(psi, 1e-4)?);
        changes.push((a - b).abs() / b.abs());
        // Linear convergence in eps shrinks successive differences tenfold.
        tail_ratio.push((a - b).abs() / (b - c).abs());
    }
    let worst = changes.iter().cloned().fold(0.0, f64::max);
    let failing = changes.iter().filter(|c| **c >= 0.05).count();
    let passed = failing == 0;
    let detail = format!("worst relative change {worst:.2e}, {failing} of 20 samples at or above 5%");
    Ok((passed, json!({ "R": 40.0, "samples": 20, "relative_change": changes, "difference_ratio": tail_ratio }), detail))
}

/// Values of V_L for L in `ls` over `count` Gaussian samples, generated in chunks.
fn potentials_by_l(md: &Model, ls: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = CholeskySampler::new(&md.op)?;
    let idx: Vec<usize> = ls.iter().map(|&l| md.params.grid().index_of(l)).collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(count); ls.len()];
    let chunk = 5000;
    let mut start = 0;
    while start < count {
        let n = chunk.min(count - start);
        let ens = sample_range(&sampler, md.params, seed, start, n);
        let vals: Vec<Vec<f64>> = ens.samples.par_iter().map(|s| idx.iter().map(|&li| potential_upto(s, li, &md.bg)).collect()).collect();
        for v in vals {
            for (j, x) in v.into_iter().enumerate() {
                out[j].push(x);
            }
        }
        start += n;
    }
    Ok(out)
}

fn exp_moments(seed: u64) -> Outcome {
    let qs = [0.5, 1.0, 1.1];
    let count = 100_000;
    let base = model(1, 1, 40.0, sixteenth(40.0))?;
    let r0 = find_r0(&base.params, &base.profile, 40.0)?.r0;
    let ls = [r0, 2.0 * r0];
    let mut table = Vec::new();
    let mut z_hat = Vec::new();
    for radius in [40.0, 80.0] {
        let md = model(1, 1, radius, sixteenth(radius))?;
        let all_l = [ls[0], ls[1], md.params.radius];
        let v = potentials_by_l(&md, &all_l, count, seed)?;
        for (j, &l) in ls.iter().enumerate() {
            for &q in &qs {
                let e: Vec<f64> = v[j].iter().map(|x| (-q * x).exp()).collect();
                table.push((radius, l, q, stats::mean(&e), stats::std_err(&e)));
            }
        }
        let z: Vec<f64> = v[2].iter().map(|x| (-x).exp()).collect();
        z_hat.push((radius, stats::mean(&z), stats::std_err(&z)));
    }
    let mut passed = true;
    let mut worst = 0.0_f64;
    let mut per_q = Vec::new();
    for &q in &qs {
        let est: Vec<f64> = table.iter().filter(|r| r.2 == q).map(|r| r.3).collect();
        let lo = est.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = est.iter().cloned().fold(0.0, f64::max);
        let variation = (hi - lo) / lo;
        let ok = est.iter().all(|e| e.is_finite() && *e > 0.0) && variation < 0.3;
        passed &= ok;
        worst = worst.max(variation);
        per_q.push(json!({ "q": q, "variation": variation, "passed": ok }));
    }
    let z_ok = z_hat.iter().all(|z| (0.2..=5.0).contains(&z.1));
    passed &= z_ok;
    let rows: Vec<Value> = table
        .iter()
        .map(|r| json!({ "R": r.0, "L": r.1, "q": r.2, "estimate": r.3, "stderr": r.4 }))
        .collect();
    let zs: Vec<Value> = z_hat.iter().map(|z| json!({ "R": z.0, "z_hat": z.1, "stderr": z.2 })).collect();
    let detail = format!(
        "max variation {:.1}%, Z_hat {}",
        100.0 * worst,
        z_hat.iter().map(|z| format!("{:.3}", z.1)).collect::<Vec<_>>().join("/")
    );
    Ok((passed, json!({ "samples": count, "R0": r0, "estimates": rows, "variation": per_q, "z_hat": zs }), detail))
}

fn boue_dupuis(seed: u64) -> Outcome {
    let md = model(1, 1, 20.0, 304)?;
    let l = md.params.radius;
    let ens = sample_gaussian(&CholeskySampler::new(&md.op)?, md.params, seed, 2000);
    let li = md.params.grid().index_of(l)?;
    let mut rows = Vec::new();
    let mut passed = true;
    for q in [0.5, 1.0] {
        let e: Vec<f64> = ens.samples.par_iter().map(|s| (-q * potential_upto(s, li, &md.bg)).exp()).collect();
        let (est, se) = (stats::mean(&e), stats::std_err(&e));
        let bound = variational_lower_bound(&ens, q, l, &md.bg, &md.op)?;
        let rhs = -est.ln() + 2.0 * se / est;
        let ok = bound.average <= rhs;
        passed &= ok;
        rows.push(json!({ "q": q, "bound": bound.average, "bound_stderr": bound.stderr, "direct": -est.ln(), "direct_stderr": se / est, "passed": ok }));
    }
    // Central differences of the objective along random directions.
    let mut worst_fd = 0.0_f64;
    let q = 1.0;
    for (j, psi) in ens.samples.iter().take(3).enumerate() {
        let mut r = rng::normals(rng::derive_seed(seed, 1), j as u64, psi.len());
        r[0] = 0.0;
        *r.last_mut().unwrap() = 0.0;
        let zeta: Vec<f64> = rng::normals(rng::derive_seed(seed, 2), j as u64, psi.len()).iter().map(|v| 0.3 * v).collect();
        let mut zeta = zeta;
        zeta[0] = 0.0;
        *zeta.last_mut().unwrap() = 0.0;
        let (_, grad) = objective_and_gradient(psi, &zeta, q, li, &md.bg, &md.op);
        let analytic: f64 = grad.iter().zip(&r).map(|(g, d)| g * d).sum();
        let t = 1e-5;
        let shifted = |s: f64| -> f64 {
            let z: Vec<f64> = zeta.iter().zip(&r).map(|(z, d)| z + s * d).collect();
            objective_and_gradient(psi, &z, q, li, &md.bg, &md.op).0
        };
        let fd = (shifted(t) - shifted(-t)) / (2.0 * t);
        worst_fd = worst_fd.max((analytic - fd).abs() / analytic.abs().max(1e-300));
    }
    let fd_ok = worst_fd <= 1e-6;
    passed &= fd_ok;
    let detail = format!(
        "bound minus direct {}, gradient mismatch {worst_fd:.1e}",
        rows.iter().map(|r| format!("{:+.3}", r["bound"].as_f64().unwrap() - r["direct"].as_f64().unwrap())).collect::<Vec<_>>().join("/")
    );
    Ok((passed, json!({ "R": 20.0, "M": 304, "L": l, "samples": 2000, "bounds": rows, "gradient_relative_error": worst_fd }), detail))
}

fn increments(seed: u64) -> Outcome {
    let md = model(1, 1, 161.0, sixteenth(161.0))?;
    let ens = sample_gaussian(&CholeskySampler::new(&md.op)?, md.params, seed, 2000);
    let rep = increment_diagnostic(&ens, &md.bg, &[20.0, 40.0, 80.0, 160.0], &[16, 32, 64, 128], 2.0)?;
    let passed = rep.l_slope <= -0.4 && rep.n_slope <= -0.4;
    let detail = format!("L slope {:.2}, N slope {:.2}", rep.l_slope, rep.n_slope);
    Ok((passed, json!({ "R": 161.0, "M": md.params.intervals, "samples": 2000, "report": rep }), detail))
}

fn smooth_state(grid: RadialGrid, center: f64, width: f64, amplitude: f64) -> Result<PhaseState> {
    PhaseState::new(Field::from_fn(grid, |r| amplitude * bump(r, center, width)[0]), Field::zeros(grid))
}

fn dynamics_exactness() -> Outcome {
    // Standing wave of the free equation under the unit-CFL scheme.
    let grid = RadialGrid::new(20.0, 380);
    let len = grid.radius() - 1.0;
    let omega = 3.0 * std::f64::consts::PI / len;
    let psi = Field::from_fn(grid, |r| (omega * (r - 1.0)).sin());
    let state = PhaseState::new(psi, Field::zeros(grid))?;
    let cfg = FlowConfig::cfl1(grid, 40.0);
    let tr = evolve_with(&state, &cfg, &FreeForcing(grid))?;
    let t = tr.last().time;
    let standing = (0..grid.len())
        .map(|i| (tr.last().psi.values[i] - (omega * (grid.node(i) - 1.0)).sin() * (omega * t).cos()).abs())
        .fold(0.0, f64::max);

    // Leapfrog energy over T = 2R.
    let md = model(1, 1, 20.0, 1024)?;
    let data = smooth_state(md.params.grid(), 6.0, 3.0, 1.5)?;
    let lf = FlowConfig::leapfrog(0.5 * md.params.spacing(), 40.0).with_energy();
    let drift = evolve(&data, &lf, &md.bg)?.energy_drift();

    // Self-convergence of the nonlinear unit-CFL flow.
    let sizes = [256usize, 512, 1024, 2048];
    let finals: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&m| {
            let md = model(1, 1, 9.0, m)?;
            let s = smooth_state(md.params.grid(), 4.0, 2.0, 2.0)?;
            Ok(evolve(&s, &FlowConfig::cfl1(md.params.grid(), 4.0), &md.bg)?.last().psi.values.clone())
        })
        .collect::<Result<_>>()?;
    let diffs: Vec<f64> = finals
        .windows(2)
        .map(|w| (0..w[0].len()).map(|i| (w[0][i] - w[1][2 * i]).abs()).fold(0.0, f64::max))
        .collect();
    let ord = order(&diffs);
    let passed = standing <= 1e-10 && drift <= 1e-4 && ord >= 1.8;
    let detail = format!("standing wave {standing:.1e}, leapfrog drift {drift:.1e}, order {ord:.2}");
    Ok((
        passed,
        json!({
            "standing_wave_error": standing,
            "leapfrog": { "R": 20.0, "M": 1024, "dt_over_h": 0.5, "T": 40.0, "energy_drift": drift },
            "self_convergence": { "R": 9.0, "M": sizes, "T": 4.0, "differences": diffs, "order": ord }
        }),
        detail,
    ))
}

fn gibbs_states(md: &Model, count: usize, seed: u64) -> Result<Vec<PhaseState>> {
    let sampler = GibbsStateSampler::new(md.params, md.bg.clone(), CholeskySampler::new(&md.op)?, None, VelocityLaw::Walk)?;
    // Small draws fall under the ESS floor of the resampler.
    let mut states = sampler.draw(count.max(ESS_FLOOR as usize), seed)?.0;
    states.truncate(count);
    Ok(states)
}

fn finite_speed(seed: u64) -> Outcome {
    let md = model(1, 1, 40.0, sixteenth(40.0))?;
    let states = gibbs_states(&md, 4, seed)?;
    let windows = [(5.0, 10.0, 16.0), (10.0, -8.0, 19.0), (3.0, 20.0, 24.0), (20.0, 15.0, 39.0)];
    let mut worst = 0.0_f64;
    let mut rows = Vec::new();
    for &(k, t, l) in &windows {
        let errs: Vec<f64> = states.iter().map(|s| finite_speed_check(s, t, k, l, &md.bg)).collect::<Result<_>>()?;
        let e = errs.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(e);
        rows.push(json!({ "K": k, "t": t, "L": l, "max_difference": e }));
    }
    let passed = worst <= 1e-10;
    Ok((passed, json!({ "R": 40.0, "samples": states.len(), "windows": rows }), format!("max difference {worst:.1e}")))
}

fn galerkin_rate(seed: u64) -> Outcome {
    let md = model(1, 1, 40.0, 1024)?;
    let states = gibbs_states(&md, 32, seed)?;
    let modes = [16usize, 32, 64, 128];
    let cfg = FlowConfig::cfl1(md.params.grid(), 1.0);
    let errors: Vec<Vec<f64>> = states
        .par_iter()
        .map(|s| {
            let full = evolve(s, &cfg, &md.bg)?;
            modes
                .iter()
                .map(|&n| {
                    let tr = evolve(s, &cfg.clone().with_truncation(n), &md.bg)?;
                    Ok(full.last().psi.values.iter().zip(&tr.last().psi.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mean_err: Vec<f64> = (0..modes.len()).map(|j| stats::mean(&errors.iter().map(|e| e[j]).collect::<Vec<_>>())).collect();
    let factors: Vec<f64> = mean_err.windows(2).map(|w| w[1] / w[0]).collect();
    let worst = factors.iter().cloned().fold(0.0, f64::max);
    let passed = worst <= 0.8;
    let detail = format!("per-doubling factors {}", factors.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>().join(", "));
    Ok((passed, json!({ "R": 40.0, "M": 1024, "T": 1.0, "samples": 32, "N": modes, "mean_sup_error": mean_err, "factors": factors }), detail))
}

fn invariance(seed: u64) -> Outcome {
    let truncated = invariance_test_truncated(&ModelParams::new(1, 1, 40.0, 512)?, 4, 10.0, 10_000, seed)?;
    let full = invariance_test_full(&ModelParams::new(1, 1, 40.0, 1024)?, 20.0, 10_000, rng::derive_seed(seed, 1))?;
    let min_p = |r: &crate::invariance::InvarianceReport| r.observables.iter().map(|o| o.p_value).fold(1.0, f64::min);
    let passed = truncated.passed && full.passed;
    let detail = format!(
        "truncated {} (min p {:.3}), full {} (min p {:.3}), per-test level {:.1e}",
        if truncated.passed { "pass" } else { "fail" },
        min_p(&truncated),
        if full.passed { "pass" } else { "fail" },
        min_p(&full),
        full.per_test_level
    );
    Ok((passed, json!({ "truncated": truncated, "full": full }), detail))
}

fn probe(seed: u64) -> Outcome {
    let params = ModelParams::new(1, 1, 48.0, 1504)?;
    let rep = resolution_probe(&params, &[10.0, 20.0, 40.0], 500, seed)?;
    let passed = rep.within_band && rep.smooth_decreasing;
    let detail = format!(
        "Gibbs band {:.2} (log2), smooth norms {}",
        rep.band_log2,
        rep.smooth_norm.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(" ")
    );
    Ok((passed, serde_json::to_value(&rep)?, detail))
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn fmt_order(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.2}")
    } else {
        "n/a (round-off)".into()
    }
}
