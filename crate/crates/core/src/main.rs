use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use equiwave::acceptance::{self, AcceptanceOptions, Fault};
use equiwave::cli::{parse_config, parse_list, CommonArgs, FileConfig, RunConfig, OUT_DIR_ENV};
use equiwave::dynamics::{evolve, FlowConfig, Scheme};
use equiwave::gibbs::{
    exp_moment, gibbs_reweight, gibbs_reweight_truncated, moment_threshold, pcn_sample, variational_lower_bound,
    PcnConfig, SineProjector,
};
use equiwave::grid::{Field, PhaseState};
use equiwave::invariance::{
    bump, invariance_test_full_with, invariance_test_truncated_with, resolution_probe, GibbsStateSampler, VelocityLaw,
};
use equiwave::io::{self, Envelope};
use equiwave::measures::{growth_and_holder_diagnostic, sample_gaussian, CholeskySampler, Ensemble};
use equiwave::operator::{assemble, find_r0, greens_numeric};
use equiwave::soliton::{asymptotic_fit, compute_soliton, energy_of, stationary_residual_at, DEFAULT_FAR_RADIUS, DEFAULT_TOL};
use equiwave::{rng, EquiwaveError, Result};

#[derive(Parser)]
#[command(name = "equiwave", version = io::VERSION, about = "Gibbs measures and wave flows around equivariant solitons")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file, JSON or key=value lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Degree of the soliton.
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Equivariance class.
    #[arg(long, global = true)]
    k: Option<u32>,
    /// Outer radius.
    #[arg(long = "R", global = true)]
    radius: Option<f64>,
    /// Grid intervals on [1, R].
    #[arg(long = "M", global = true)]
    intervals: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $EQUIWAVE_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Soliton profile as CSV plus a JSON summary.
    Soliton {
        #[arg(long)]
        far_radius: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Numeric Green's matrix as CSV plus bounds and R0.
    Greens,
    /// Gaussian ensemble (binary) and growth diagnostics.
    Sample {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Gibbs reweighting or pCN sampling with moment and bound reports.
    Gibbs {
        /// reweight or pcn.
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        q: Option<f64>,
        /// Potential cutoff radius (default R).
        #[arg(long = "L")]
        cutoff: Option<f64>,
        /// Sine-mode truncation of the potential (reweight only).
        #[arg(long = "N")]
        modes: Option<usize>,
        /// Prior draws for reweighting.
        #[arg(long)]
        count: Option<usize>,
        /// pCN proposals.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        /// Samples used for the variational bound (0 to skip).
        #[arg(long)]
        bound_samples: Option<usize>,
    },
    /// Evolve one Gibbs sample (or bump data) and store frames.
    Evolve {
        /// cfl1 or leapfrog.
        #[arg(long)]
        scheme: Option<String>,
        /// Time step (leapfrog only; cfl1 uses h).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "T")]
        final_time: Option<f64>,
        /// Galerkin truncation.
        #[arg(long = "N")]
        modes: Option<usize>,
        /// Comma-separated snapshot times.
        #[arg(long)]
        snapshots: Option<String>,
        /// gibbs or bump.
        #[arg(long)]
        init: Option<String>,
    },
    /// Invariance test of the Gibbs measure under the (truncated) flow.
    Invariance {
        #[arg(long = "T")]
        final_time: Option<f64>,
        /// Galerkin truncation; omit for the full flow.
        #[arg(long = "N")]
        modes: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        /// walk or bridge.
        #[arg(long)]
        velocity: Option<String>,
    },
    /// Windowed-norm probe of Gibbs data against smooth data.
    Probe {
        /// Comma-separated horizon times.
        #[arg(long)]
        horizons: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Run the acceptance suite; exit status 1 if any criterion fails.
    Accept {
        /// Draw the suite seed from the clock instead of the fixed default.
        #[arg(long)]
        seedless: bool,
        /// Comma-separated criterion numbers (default: all).
        #[arg(long)]
        only: Option<String>,
        /// Fault injection for negative-control runs.
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Soliton { .. } => "soliton",
        Command::Greens => "greens",
        Command::Sample { .. } => "sample",
        Command::Gibbs { .. } => "gibbs",
        Command::Evolve { .. } => "evolve",
        Command::Invariance { .. } => "invariance",
        Command::Probe { .. } => "probe",
        Command::Accept { .. } => "accept",
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = cli.common.config.as_deref().map(FileConfig::load).transpose()?;
    let args = CommonArgs {
        n: cli.common.n,
        k: cli.common.k,
        radius: cli.common.radius,
        intervals: cli.common.intervals,
        seed: cli.common.seed,
        out: cli.common.out,
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let mut cfg = parse_config(subcommand_name(&cli.command), &args, file, env_out)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    match cli.command {
        Command::Soliton { far_radius, tol } => soliton(&mut cfg, far_radius, tol),
        Command::Greens => greens(&mut cfg),
        Command::Sample { count } => sample(&mut cfg, count),
        Command::Gibbs { sampler, q, cutoff, modes, count, steps, beta, bound_samples } => {
            gibbs(&mut cfg, GibbsArgs { sampler, q, cutoff, modes, count, steps, beta, bound_samples })
        }
        Command::Evolve { scheme, dt, final_time, modes, snapshots, init } => {
            evolve_cmd(&mut cfg, scheme, dt, final_time, modes, snapshots, init)
        }
        Command::Invariance { final_time, modes, count, velocity } => invariance(&mut cfg, final_time, modes, count, velocity),
        Command::Probe { horizons, count } => probe(&mut cfg, horizons, count),
        Command::Accept { seedless, only, fault } => accept(&mut cfg, seedless, only, fault),
    }
}

fn done(cfg: &RunConfig, files: &[&str]) -> Result<ExitCode> {
    for f in files {
        println!("{}", cfg.path(f).display());
    }
    Ok(ExitCode::SUCCESS)
}

fn soliton(cfg: &mut RunConfig, far_radius: Option<f64>, tol: Option<f64>) -> Result<ExitCode> {
    let far = cfg.option("far-radius", far_radius, DEFAULT_FAR_RADIUS.max(cfg.params.radius))?;
    let tol = cfg.option("tol", tol, DEFAULT_TOL)?;
    let profile = compute_soliton(&cfg.params, far, tol)?;
    let last = profile.grid.index_of_floor(cfg.params.radius);
    let rows: Vec<usize> = (0..=last).collect();
    io::write_columns_csv(
        &cfg.path("soliton.csv"),
        &["r", "Q", "dQ", "residual"],
        &[
            rows.iter().map(|&i| profile.grid.node(i)).collect(),
            rows.iter().map(|&i| profile.q[i]).collect(),
            rows.iter().map(|&i| profile.dq[i]).collect(),
            rows.iter().map(|&i| stationary_residual_at(&profile, i)).collect(),
        ],
    )?;
    let fit = if cfg.params.n > 0 { Some(asymptotic_fit(&profile)?) } else { None };
    let summary = json!({
        "alpha": profile.alpha,
        "decay_slope": fit.map(|f| f.decay_slope),
        "fit_window": fit.map(|f| f.window),
        "energy": energy_of(&profile, far),
        "slope_at_one": profile.slope_at_one,
        "residual": profile.residual,
        "far_radius": far,
    });
    io::write_json(&cfg.path("soliton.json"), &Envelope::new(cfg.to_value(), None, summary))?;
    done(cfg, &["soliton.csv", "soliton.json"])
}

fn greens(cfg: &mut RunConfig) -> Result<ExitCode> {
    let p = cfg.params;
    let profile = compute_soliton(&p, DEFAULT_FAR_RADIUS.max(p.radius), DEFAULT_TOL)?;
    let op = assemble(&p, &profile)?;
    let g = greens_numeric(&op)?;
    let nodes = p.grid().nodes();
    let mut columns = vec![nodes.clone()];
    let mut header = vec!["r".to_string()];
    for (j, rho) in nodes.iter().enumerate() {
        header.push(format!("{rho}"));
        columns.push((0..nodes.len()).map(|i| g.get(i, j)).collect());
    }
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    io::write_columns_csv(&cfg.path("greens.csv"), &header, &columns)?;
    let r0 = match find_r0(&p, &profile, p.radius) {
        Ok(r) => json!(r.r0),
        Err(e) => json!(e.to_string()),
    };
    let report = json!({
        "symmetry_defect": g.symmetry_defect(),
        "growth_bound": g.growth_bound(),
        "derivative_bound": g.derivative_bound(),
        "diagonal_lower_constant": g.diagonal_lower_constant(),
        "lowest_eigenvalue": op.lowest_eigenvalue(),
        "R0": r0,
    });
    io::write_json(&cfg.path("greens.json"), &Envelope::new(cfg.to_value(), None, report))?;
    done(cfg, &["greens.csv", "greens.json"])
}

fn model_sampler(cfg: &RunConfig) -> Result<(equiwave::soliton::Background, CholeskySampler, equiwave::operator::DiscreteOperator)> {
    let p = cfg.params;
    let profile = compute_soliton(&p, DEFAULT_FAR_RADIUS.max(p.radius), DEFAULT_TOL)?;
    let op = assemble(&p, &profile)?;
    let bg = profile.on_grid(p.grid())?;
    Ok((bg, CholeskySampler::new(&op)?, op))
}

fn sample(cfg: &mut RunConfig, count: Option<usize>) -> Result<ExitCode> {
    let count = cfg.option("count", count, 1000)?;
    let (_, sampler, _) = model_sampler(cfg)?;
    let ens = sample_gaussian(&sampler, cfg.params, cfg.seed, count);
    io::write_ensemble(&cfg.path("ensemble.bin"), &ens, cfg.to_value())?;
    let growth = if count > 0 { Some(growth_and_holder_diagnostic(&ens, 0.05)?) } else { None };
    let report = json!({ "count": count, "growth": growth });
    io::write_json(&cfg.path("sample.json"), &Envelope::new(cfg.to_value(), Some(cfg.seed), report))?;
    done(cfg, &["ensemble.bin", "sample.json"])
}

struct GibbsArgs {
    sampler: Option<String>,
    q: Option<f64>,
    cutoff: Option<f64>,
    modes: Option<usize>,
    count: Option<usize>,
    steps: Option<usize>,
    beta: Option<f64>,
    bound_samples: Option<usize>,
}

fn gibbs(cfg: &mut RunConfig, a: GibbsArgs) -> Result<ExitCode> {
    let kind = cfg.option("sampler", a.sampler, "reweight".to_string())?;
    let q = cfg.option("q", a.q, 1.0)?;
    let l = cfg.option("L", a.cutoff, cfg.params.radius)?;
    let modes = cfg.optional("N", a.modes)?;
    let count = cfg.option("count", a.count, 2000)?;
    let bound_samples = cfg.option("bound-samples", a.bound_samples, 200)?;
    let (bg, sampler, op) = model_sampler(cfg)?;
    let p = cfg.params;
    let prior = sample_gaussian(&sampler, p, rng::derive_seed(cfg.seed, 1), count);
    let moment = exp_moment(&prior, q, l, &bg)?;
    let threshold = moment_threshold(bg.coupling);
    let bound = if bound_samples > 0 && q < threshold {
        let sub = Ensemble { samples: prior.samples.iter().take(bound_samples).cloned().collect(), ..prior.clone() };
        Some(variational_lower_bound(&sub, q, l, &bg, &op)?)
    } else {
        None
    };
    let (ensemble, sampler_report) = match kind.as_str() {
        "reweight" => {
            let w = match modes {
                Some(n) => gibbs_reweight_truncated(prior.clone(), &SineProjector::new(p.grid(), n)?, l, &bg)?,
                None => gibbs_reweight(prior.clone(), l, &bg)?,
            };
            let picks = w.resample(count, rng::derive_seed(cfg.seed, 2));
            let samples = picks.iter().map(|&i| w.base.samples[i].clone()).collect();
            let report = json!({ "z_hat": w.z_hat, "ess": w.ess, "pool": count });
            (Ensemble { samples, ..w.base }, report)
        }
        "pcn" => {
            if modes.is_some() {
                return Err(EquiwaveError::InvalidArgument("--N applies to the reweight sampler only".into()));
            }
            let steps = cfg.option("steps", a.steps, 20_000)?;
            let defaults = PcnConfig::default();
            let beta = cfg.option("beta", a.beta, defaults.beta)?;
            let pc = PcnConfig { beta, seed: rng::derive_seed(cfg.seed, 3), ..defaults };
            let out = pcn_sample(&sampler, p, &pc, l, &bg, steps)?;
            if let Some(w) = &out.warning {
                eprintln!("warning: {w}");
            }
            let report = json!({
                "beta": beta,
                "steps": steps,
                "acceptance_rate": out.chain.acceptance_rate(),
                "kept": out.ensemble.base.len(),
                "warning": out.warning,
            });
            (out.ensemble.base, report)
        }
        other => return Err(EquiwaveError::InvalidArgument(format!("unknown sampler {other:?} (reweight or pcn)"))),
    };
    io::write_ensemble(&cfg.path("gibbs.bin"), &ensemble, cfg.to_value())?;
    let report = json!({
        "sampler": sampler_report,
        "moment": moment,
        "log_moment": -moment.estimate.ln(),
        "variational_bound": bound.as_ref().map(|b| json!({ "q": b.q, "average": b.average, "stderr": b.stderr, "samples": b.minima.len() })),
    });
    io::write_json(&cfg.path("gibbs.json"), &Envelope::new(cfg.to_value(), Some(cfg.seed), report))?;
    done(cfg, &["gibbs.bin", "gibbs.json"])
}

fn evolve_cmd(
    cfg: &mut RunConfig,
    scheme: Option<String>,
    dt: Option<f64>,
    final_time: Option<f64>,
    modes: Option<usize>,
    snapshots: Option<String>,
    init: Option<String>,
) -> Result<ExitCode> {
    let scheme: Scheme = cfg.option("scheme", scheme, "cfl1".to_string())?.parse()?;
    let h = cfg.params.spacing();
    let t = cfg.option("T", final_time, 10.0)?;
    let modes = cfg.optional("N", modes)?;
    let snaps: Vec<f64> = parse_list(&cfg.option("snapshots", snapshots, String::new())?)?;
    let init = cfg.option("init", init, "gibbs".to_string())?;
    let mut flow = match scheme {
        Scheme::Cfl1 => {
            if let Some(d) = dt {
                if (d - h).abs() > 1e-12 * h {
                    return Err(EquiwaveError::CflViolation { dt: d, h });
                }
            }
            FlowConfig::cfl1(cfg.params.grid(), t)
        }
        Scheme::Leapfrog => FlowConfig::leapfrog(cfg.option("dt", dt, 0.5 * h)?, t),
    }
    .with_snapshots(snaps)
    .with_energy();
    flow.truncation = modes;
    let (bg, sampler, _) = model_sampler(cfg)?;
    let grid = cfg.params.grid();
    let state = match init.as_str() {
        "gibbs" => {
            let proj = modes.map(|n| SineProjector::new(grid, n)).transpose()?;
            let gs = GibbsStateSampler::new(cfg.params, bg.clone(), sampler, proj, VelocityLaw::Walk)?;
            gs.draw(100, cfg.seed)?.0.swap_remove(0)
        }
        "bump" => {
            let c = 1.0 + (cfg.params.radius - 1.0) / 4.0;
            let w = (cfg.params.radius - 1.0) / 16.0;
            PhaseState::new(Field::from_fn(grid, |r| bump(r, c, w)[0]), Field::zeros(grid))?
        }
        other => return Err(EquiwaveError::InvalidArgument(format!("unknown initial data {other:?} (gibbs or bump)"))),
    };
    let mut traj = evolve(&state, &flow, &bg)?;
    traj.snapshots.insert(0, state);
    io::write_trajectory(
        &cfg.path("trajectory.bin"),
        &cfg.path("trajectory.json"),
        &cfg.params,
        cfg.seed,
        json!({ "run": cfg.to_value(), "flow": flow }),
        &traj,
    )?;
    done(cfg, &["trajectory.bin", "trajectory.json"])
}

fn invariance(cfg: &mut RunConfig, final_time: Option<f64>, modes: Option<usize>, count: Option<usize>, velocity: Option<String>) -> Result<ExitCode> {
    let t = cfg.option("T", final_time, 20.0)?;
    let modes = cfg.optional("N", modes)?;
    let count = cfg.option("count", count, 10_000)?;
    let law: VelocityLaw = cfg.option("velocity", velocity, "walk".to_string())?.parse()?;
    let report = match modes {
        Some(n) => invariance_test_truncated_with(&cfg.params, n, t, count, cfg.seed, law)?,
        None => invariance_test_full_with(&cfg.params, t, count, cfg.seed, law)?,
    };
    println!("invariance: {}", if report.passed { "pass" } else { "fail" });
    io::write_json(&cfg.path("invariance.json"), &Envelope::new(cfg.to_value(), Some(cfg.seed), report))?;
    done(cfg, &["invariance.json"])
}

fn probe(cfg: &mut RunConfig, horizons: Option<String>, count: Option<usize>) -> Result<ExitCode> {
    let horizons: Vec<f64> = parse_list(&cfg.option("horizons", horizons, "10,20,40".to_string())?)?;
    let count = cfg.option("count", count, 500)?;
    let report = resolution_probe(&cfg.params, &horizons, count, cfg.seed)?;
    io::write_json(&cfg.path("probe.json"), &Envelope::new(cfg.to_value(), Some(cfg.seed), report))?;
    done(cfg, &["probe.json"])
}

fn accept(cfg: &mut RunConfig, seedless: bool, only: Option<String>, fault: Option<String>) -> Result<ExitCode> {
    let seed = if seedless {
        let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64);
        rng::derive_seed(nanos, 0)
    } else {
        cfg.seed
    };
    let fault = match fault.as_deref() {
        None => None,
        Some("greens-asymmetry") => Some(Fault::GreensAsymmetry),
        Some(other) => return Err(EquiwaveError::InvalidArgument(format!("unknown fault {other:?}"))),
    };
    let ids: Vec<u8> = match only {
        Some(s) => parse_list(&s)?,
        None => (1..=acceptance::CRITERIA).collect(),
    };
    let opts = AcceptanceOptions { seed, fault };
    let mut results = Vec::new();
    for &id in &ids {
        let r = acceptance::run_criterion(id, &opts);
        println!("{}", r.line());
        results.push(r);
    }
    let report = acceptance::AcceptanceReport {
        version: io::VERSION.to_string(),
        seed,
        fault,
        passed: results.iter().all(|r| r.passed),
        criteria: results,
    };
    io::write_json(&cfg.path("acceptance.json"), &Envelope::new(cfg.to_value(), Some(seed), &report))?;
    std::fs::write(cfg.path("acceptance.txt"), report.summary())?;
    if report.passed {
        println!("all criteria passed");
        Ok(ExitCode::SUCCESS)
    } else {
        let failed: Vec<String> = report.criteria.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.id, c.name)).collect();
        eprintln!("failed criteria: {}", failed.join(", "));
        Ok(ExitCode::from(1))
    }
}
