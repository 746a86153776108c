//! `lhs-lab`: run simulations, experiments and parameter sweeps from TOML
//! configuration files.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lhs_core::dynamics::{CouplingParams, Ensemble};
use lhs_core::experiments::sampler::{check_feasible, random_frequency, sample_admissible_states, stream, uniform_states};
use lhs_core::experiments::{self, ExperimentConfig, ExperimentId, ExperimentReport};
use lhs_core::integrators::{integrate, IntegratorConfig};
use lhs_core::observables::fmt_f64;
use rayon::prelude::*;
use serde_json::json;

use config::{ConfigFile, Diagnostic, InitKind, SweepAxis};
use output::{Manifest, OutputDir};

#[derive(Parser, Debug)]
#[command(name = "lhs-lab", version, about = "Aggregation dynamics on the Hermitian sphere: simulations and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Base seed (overrides `seed`)
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps
    #[arg(long, value_name = "K")]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one ensemble and write its observables
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment (e1..e7) and write its report
    Experiment {
        /// Experiment id
        #[arg(value_name = "ID", conflicts_with = "experiment")]
        id: Option<String>,
        #[arg(long, value_name = "ID")]
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment over a parameter axis given in `[sweep]`
    Sweep {
        #[arg(long, value_name = "ID")]
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

/// Process outcome mapped to the exit code.
enum Failure {
    /// Invalid usage or configuration: exit 2, nothing written.
    Usage(String),
    /// Some asserted bound failed: exit 1.
    Assertion,
    /// Numerical or I/O failure after validation: exit 1.
    Runtime(String),
}

impl From<Diagnostic> for Failure {
    fn from(d: Diagnostic) -> Self {
        Failure::Usage(d.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("i/o error: {e}"))
    }
}

fn runtime(e: lhs_core::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { common } => cmd_simulate(&common),
        Command::Experiment { id, experiment, common } => cmd_experiment(id.or(experiment).as_deref(), &common),
        Command::Sweep { experiment, common } => cmd_sweep(experiment.as_deref(), &common),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<ConfigFile, Failure> {
    match &common.config {
        Some(path) => Ok(ConfigFile::load(path)?),
        None => Ok(ConfigFile::default()),
    }
}

fn set_workers(common: &Common) -> Result<(), Failure> {
    if let Some(k) = common.workers {
        if k == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn out_dir(common: &Common, file: &ConfigFile, default: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(default))
}

/// Parameters of a single trajectory run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
struct SimulateConfig {
    n: usize,
    d: usize,
    kappa0: f64,
    kappa1: f64,
    delta: f64,
    dt: f64,
    t_end: f64,
    seed: u64,
    omega_spread: f64,
    init: &'static str,
    homogeneous: bool,
    record_every: usize,
}

const EXPERIMENT_ONLY: [&str; 9] = [
    "samples", "perturbation", "seeds", "n_values", "horizons", "p_values", "check_time", "fd_step", "fd_floor",
];

fn simulate_config(file: &ConfigFile, seed: Option<u64>) -> Result<(SimulateConfig, Ensemble, IntegratorConfig), Failure> {
    let o = &file.overrides;
    let unused = [
        o.samples.is_some(),
        o.perturbation.is_some(),
        o.seeds.is_some(),
        o.n_values.is_some(),
        o.horizons.is_some(),
        o.p_values.is_some(),
        o.check_time.is_some(),
        o.fd_step.is_some(),
        o.fd_floor.is_some(),
    ];
    if let Some(k) = unused.iter().position(|&u| u) {
        return Err(file.blame(format!("{} is not used by simulate", EXPERIMENT_ONLY[k])).into());
    }
    let init = file.simulate.init.unwrap_or(InitKind::Admissible);
    let cfg = SimulateConfig {
        n: o.n.unwrap_or(32),
        d: o.d.unwrap_or(3),
        kappa0: o.kappa0.unwrap_or(1.0),
        kappa1: o.kappa1.unwrap_or(0.1),
        delta: o.delta.unwrap_or(0.05),
        dt: o.dt.unwrap_or(1e-3),
        t_end: o.t_end.unwrap_or(10.0),
        seed: seed.or(o.seed).unwrap_or(1),
        omega_spread: o.omega_spread.unwrap_or(1.0),
        init: match init {
            InitKind::Admissible => "admissible",
            InitKind::Uniform => "uniform",
        },
        homogeneous: file.simulate.homogeneous.unwrap_or(true),
        record_every: file.simulate.record_every.unwrap_or(10),
    };
    let blame = |e: lhs_core::Error| Failure::from(file.blame(e.to_string()));
    if cfg.n == 0 || cfg.d == 0 {
        return Err(file.blame("n and d must be at least 1").into());
    }
    if !(cfg.omega_spread >= 0.0 && cfg.omega_spread.is_finite()) {
        return Err(file.blame("omega_spread must be nonnegative").into());
    }
    let params = CouplingParams::new(cfg.kappa0, cfg.kappa1).map_err(blame)?;
    let icfg = IntegratorConfig::new(cfg.dt, cfg.t_end).map_err(blame)?;
    if cfg.record_every == 0 {
        let line = file.text.lines().position(|l| l.trim_start().starts_with("record_every")).map(|k| k + 1);
        return Err(Diagnostic {
            path: file.path.clone(),
            line,
            column: None,
            message: "record_every must be at least 1".into(),
        }
        .into());
    }
    let icfg = icfg.with_record_every(cfg.record_every);
    let mut rng = stream(cfg.seed, "simulate/states", 0);
    let states = match init {
        InitKind::Admissible => {
            check_feasible(params, cfg.delta).map_err(blame)?;
            sample_admissible_states(&mut rng, cfg.n, cfg.d, params, cfg.delta).map_err(blame)?
        }
        InitKind::Uniform => uniform_states(&mut rng, cfg.n, cfg.d),
    };
    let mut rng = stream(cfg.seed, "simulate/omega", 0);
    let frequencies = if cfg.homogeneous {
        vec![random_frequency(&mut rng, cfg.d, cfg.omega_spread); cfg.n]
    } else {
        (0..cfg.n).map(|_| random_frequency(&mut rng, cfg.d, cfg.omega_spread)).collect()
    };
    let ens = Ensemble::new(states, frequencies, params).map_err(runtime)?;
    Ok((cfg, ens, icfg))
}

fn cmd_simulate(common: &Common) -> Result<(), Failure> {
    let file = load(common)?;
    let (cfg, ens, icfg) = simulate_config(&file, common.seed)?;
    set_workers(common)?;
    let result = integrate(&ens, &icfg, &mut []).map_err(runtime)?;
    let mut series = result.series;
    series.insert_metadata("config", json!(cfg));

    let dir = OutputDir::create(&out_dir(common, &file, "out/simulate"))?;
    let mut manifest = Manifest::new("simulate", common.config.as_deref(), &file.text, &json!(cfg), dir.path());
    dir.write(&mut manifest, "observables.csv", series.to_csv().as_bytes())?;
    dir.write_manifest(&manifest)?;
    println!(
        "simulate: {} particles, {} records to t = {}; wrote {}",
        cfg.n,
        series.len(),
        cfg.t_end,
        dir.path().display()
    );
    Ok(())
}

/// Writes `report.json`, one CSV per table and `timing.json` under `dir`.
fn write_report(dir: &OutputDir, manifest: &mut Manifest, prefix: &Path, report: &ExperimentReport) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
    dir.write(manifest, &prefix.join("report.json"), json.as_bytes())?;
    for table in &report.tables {
        dir.write(manifest, &prefix.join(format!("{}.csv", table.name)), table.to_csv().as_bytes())?;
    }
    let timing = serde_json::to_string_pretty(&json!({"wall_clock_seconds": report.wall_clock_seconds})).expect("json");
    dir.write(manifest, &prefix.join("timing.json"), timing.as_bytes())?;
    Ok(())
}

fn print_verdicts(report: &ExperimentReport) {
    for v in &report.verdicts {
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!("  {status} {} (tol {:e}): {}", v.name, v.tolerance, v.detail);
    }
}

fn cmd_experiment(id: Option<&str>, common: &Common) -> Result<(), Failure> {
    let file = load(common)?;
    let id = file.experiment_id(id)?;
    let cfg = file.experiment_config(id, common.seed)?;
    set_workers(common)?;
    let report = experiments::run(&cfg).map_err(runtime)?;

    let dir = OutputDir::create(&out_dir(common, &file, &format!("out/{id}")))?;
    let resolved = serde_json::to_value(&cfg).expect("config serializes");
    let mut manifest = Manifest::new("experiment", common.config.as_deref(), &file.text, &resolved, dir.path());
    write_report(&dir, &mut manifest, Path::new(""), &report)?;
    dir.write_manifest(&manifest)?;
    println!(
        "{id} ({}): {} in {:.2} s; wrote {}",
        id.title(),
        if report.passed() { "PASS" } else { "FAIL" },
        report.wall_clock_seconds,
        dir.path().display()
    );
    print_verdicts(&report);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

enum Point {
    Inadmissible(String),
    Ran(Box<ExperimentReport>),
}

fn metric(report: &ExperimentReport, name: &str) -> f64 {
    report.metric(name).and_then(|v| v.as_f64()).unwrap_or(f64::NAN)
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn cmd_sweep(id: Option<&str>, common: &Common) -> Result<(), Failure> {
    if common.config.is_none() {
        return Err(Failure::Usage("sweep needs --config with a [sweep] section".into()));
    }
    let file = load(common)?;
    let id: ExperimentId = file.experiment_id(id)?;
    let base = ExperimentConfig::resolve(id, &file.overrides);
    let base = ExperimentConfig {
        seed: common.seed.unwrap_or(base.seed),
        ..base
    };
    let axis = SweepAxis::from_config(&file, base.seed)?;
    let mut configs = Vec::with_capacity(axis.values.len());
    for &v in &axis.values {
        let cfg = axis.apply(&base, v);
        match cfg.validate() {
            Ok(()) => configs.push((cfg, None)),
            Err(lhs_core::Error::Infeasible(msg)) => configs.push((cfg, Some(msg))),
            Err(e) => {
                return Err(file.blame(format!("sweep point {} = {v}: {e}", axis.parameter)).into());
            }
        }
    }
    set_workers(common)?;
    let points: Vec<Point> = configs
        .par_iter()
        .map(|(cfg, infeasible)| match infeasible {
            Some(msg) => Ok(Point::Inadmissible(msg.clone())),
            None => experiments::run(cfg).map(|r| Point::Ran(Box::new(r))),
        })
        .collect::<lhs_core::Result<_>>()
        .map_err(runtime)?;

    let dir = OutputDir::create(&out_dir(common, &file, &format!("out/{id}-sweep")))?;
    let resolved = json!({
        "parameter": axis.parameter,
        "points": configs.iter().map(|(c, _)| c).collect::<Vec<_>>(),
    });
    let mut manifest = Manifest::new("sweep", common.config.as_deref(), &file.text, &resolved, dir.path());
    let mut csv = format!("{},admissible,passed,fitted_rate,guaranteed_rate\n", axis.parameter);
    let mut rates = Vec::new();
    let mut all_pass = true;
    let mut passed_points = 0usize;
    let mut admissible_points = 0usize;
    for (k, (point, &value)) in points.iter().zip(&axis.values).enumerate() {
        let (admissible, passed, fitted, guaranteed) = match point {
            Point::Inadmissible(msg) => {
                println!("  {} = {value}: inadmissible ({msg})", axis.parameter);
                (false, false, f64::NAN, f64::NAN)
            }
            Point::Ran(report) => {
                let prefix = PathBuf::from(format!("point_{k:03}"));
                write_report(&dir, &mut manifest, &prefix, report)?;
                let fitted = metric(report, "fitted_rate");
                if fitted.is_finite() {
                    rates.push(fitted);
                }
                println!(
                    "  {} = {value}: {}",
                    axis.parameter,
                    if report.passed() { "PASS" } else { "FAIL" }
                );
                (true, report.passed(), fitted, metric(report, "guaranteed_rate"))
            }
        };
        admissible_points += admissible as usize;
        passed_points += passed as usize;
        all_pass &= !admissible || passed;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(value),
            admissible as u8,
            passed as u8,
            fmt_f64(fitted),
            fmt_f64(guaranteed)
        ));
    }
    dir.write(&mut manifest, "sweep.csv", csv.as_bytes())?;
    let summary = json!({
        "experiment": id,
        "parameter": axis.parameter,
        "points": axis.values.len(),
        "admissible_points": admissible_points,
        "passed_points": passed_points,
        "fitted_rate": mean_std(&rates).map(|(m, s)| json!({"mean": m, "std": s, "count": rates.len()})),
    });
    dir.write(&mut manifest, "summary.json", serde_json::to_string_pretty(&summary).expect("json").as_bytes())?;
    dir.write_manifest(&manifest)?;
    println!(
        "{id} sweep over {}: {passed_points}/{admissible_points} admissible points pass ({} points); wrote {}",
        axis.parameter,
        axis.values.len(),
        dir.path().display()
    );
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}
