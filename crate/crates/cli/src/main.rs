//! `vlasov`: command-line driver for simulations and experiment suites.
//!
//! Exit codes: 0 success, 1 a verdict failed, 2 configuration error,
//! 3 runtime abort.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use vlasov_lagrange::experiments::{
    mollified_existence_suite, run_simulation, strong_stability_suite, superlevel_study, weak_stability_suite,
    ExperimentConfig, ExperimentReport,
};
use vlasov_lagrange::field::translation_sweep;
use vlasov_lagrange::Error;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "VLASOV_OUT";

#[derive(Parser)]
#[command(
    name = "vlasov",
    version,
    about = "Particle Vlasov-Poisson simulator with Lagrangian-flow diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configured run and write its history.
    Simulate(RunArgs),
    /// Strong stability suite over a mollification sequence.
    Stability(RunArgs),
    /// Weak stability suite over an oscillation sequence.
    WeakStability(RunArgs),
    /// Existence by mollified data (repulsive only).
    Existence(RunArgs),
    /// Superlevel measure of the flow and the beta functional (repulsive only).
    Functional(RunArgs),
    /// Translation-rate sweep of the Coulomb kernel.
    KernelTest(KernelArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory; defaults to `output.dir`, then `$VLASOV_OUT/<subcommand>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the numerical kernels.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set run.dt=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set field.omega=<value>`.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    /// Record the run as deterministic (reductions use fixed chunking either way).
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct KernelArgs {
    /// Spatial dimension N.
    #[arg(long = "N", alias = "dim")]
    dim: usize,
    /// Lebesgue exponent p.
    #[arg(long)]
    p: f64,
    /// Number of offsets |h| = 2^-k.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    /// Allowed relative error of the fitted slope.
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Verdict,
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict) => ExitCode::from(1),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { 2 } else { 3 })
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Stability(a) => suite(a, "stability", strong_stability_suite),
        Command::WeakStability(a) => suite(a, "weak-stability", weak_stability_suite),
        Command::Existence(a) => suite(a, "existence", mollified_existence_suite),
        Command::Functional(a) => suite(a, "functional", superlevel_study),
        Command::KernelTest(a) => kernel_test(a),
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn load(a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut overrides = a.overrides.clone();
    if let Some(w) = a.omega {
        overrides.push(format!("field.omega={w:?}"));
    }
    if a.deterministic {
        overrides.push("output.deterministic=true".into());
    }
    if let Some(t) = a.common.threads {
        overrides.push(format!("output.threads={t}"));
    }
    let cfg = ExperimentConfig::load(&a.config, &overrides)?;
    cfg.validate()?;
    init_threads(cfg.output.threads)?;
    Ok(cfg)
}

fn out_dir(flag: &Option<PathBuf>, config: Option<&Path>, sub: &str) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_ENV).map(|root| PathBuf::from(root).join(sub)))
}

fn simulate(a: RunArgs) -> Result<(), Failure> {
    let cfg = load(&a)?;
    let out = out_dir(&a.common.out, cfg.output.dir.as_deref(), "simulate");
    let art = run_simulation(&cfg, out.as_deref())?;
    let h = &art.history;
    println!("steps            {}", h.steps());
    println!("samples          {}", h.sample_count());
    println!("end_time         {}", h.end_time());
    for e in h.energy() {
        println!(
            "energy t={:<10} total={:.15e} kinetic={:.6e} potential={:.6e}",
            e.time, e.total, e.kinetic, e.potential
        );
    }
    if let Some(dir) = &out {
        println!("written          {}", dir.display());
    }
    if let Some(err) = art.failure {
        return Err(err.into());
    }
    let checks = art.checks.expect("checks exist for complete runs");
    println!("energy_drift     {:e}", checks.energy_drift);
    println!("mass_conserved   {}", checks.mass_conserved);
    println!("current_check    {:e}", checks.current_consistency);
    if checks.passed() {
        Ok(())
    } else {
        println!("FAIL lagrangian checks");
        Err(Failure::Verdict)
    }
}

fn suite(
    a: RunArgs,
    sub: &str,
    run: fn(&ExperimentConfig) -> vlasov_lagrange::Result<ExperimentReport>,
) -> Result<(), Failure> {
    let cfg = load(&a)?;
    let out = out_dir(&a.common.out, cfg.output.dir.as_deref(), sub);
    let report = run(&cfg)?;
    for v in &report.verdicts {
        println!(
            "{} {}: {} = {:.6e} (threshold {:e})",
            if v.pass { "PASS" } else { "FAIL" },
            v.rule,
            v.metric,
            v.value,
            v.threshold
        );
    }
    for (k, m) in &report.medians {
        println!("median {k} = {m:?}");
    }
    for (k, m) in &report.summary {
        println!("summary {k} = {m}");
    }
    if let Some(dir) = &out {
        report.save(dir)?;
        println!("written {}", dir.display());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

#[derive(Serialize)]
struct KernelSummary {
    format_version: u32,
    dim: usize,
    p: f64,
    levels: usize,
    slope: f64,
    expected: f64,
    relative_error: f64,
    tolerance: f64,
    pass: bool,
}

fn kernel_test(a: KernelArgs) -> Result<(), Failure> {
    init_threads(a.common.threads)?;
    if a.levels < 2 {
        return Err(Error::Config("--levels must be at least 2 to fit a slope".into()).into());
    }
    let sweep = translation_sweep(a.dim, a.p, a.levels)?;
    let rel = ((sweep.slope - sweep.expected) / sweep.expected).abs();
    let summary = KernelSummary {
        format_version: 1,
        dim: a.dim,
        p: a.p,
        levels: a.levels,
        slope: sweep.slope,
        expected: sweep.expected,
        relative_error: rel,
        tolerance: a.tolerance,
        pass: rel <= a.tolerance,
    };
    let mut table = String::from("# |h| [length], error [L^p norm of kernel difference]\nh,error\n");
    for (h, e) in sweep.offsets.iter().zip(&sweep.errors) {
        table.push_str(&format!("{h:e},{e:e}\n"));
    }
    print!("{table}");
    let text = toml::to_string(&summary).map_err(|e| Error::Format(e.to_string()))?;
    print!("{text}");
    if let Some(dir) = out_dir(&a.common.out, None, "kernel-test") {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("kernel_test.csv"), &table)?;
        std::fs::write(dir.join("summary.toml"), &text)?;
    }
    if summary.pass {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}
