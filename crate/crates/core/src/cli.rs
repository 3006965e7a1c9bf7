//! Command-line front end: `levy-euler <subcommand> --config <path> --out <dir>`.
//!
//! Every subcommand writes `meta.json` (effective config, seed, versions,
//! wall time) and its result files into the output directory. Numbers are
//! written with 17 significant digits. On failure an `error.json` is written
//! and the exit status is 2; a run whose checks fail exits with 1.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::harness::{
    generator_consistency_check, one_step_sweep, weak_error_sweep, RateReport, WeakErrorPoint,
};
use crate::rng::{Purpose, StreamKey};
use crate::stable::{char_exponent_constant, IsotropicSampler};
use crate::stats::quantile;

#[derive(Debug, Parser)]
#[command(name = "levy-euler", version, about = "Weak Euler scheme for stable-driven SDEs with rate diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weak-error sweep over the configured grids with rate fit and envelope check.
    Rate(RunArgs),
    /// One-step increments max_s |E f(Y_s) − f(x0)| over the grid steps.
    OneStep(RunArgs),
    /// Quadrature generator against its Monte Carlo estimate.
    CheckGenerator(RunArgs),
    /// Samples of the driving stable increment with empirical quantiles.
    SampleStable(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `mc.master_seed`.
    #[arg(long, env = "LEVY_EULER_SEED")]
    pub seed: Option<u64>,
    /// Overrides `mc.workers`; results do not depend on it.
    #[arg(long, env = "LEVY_EULER_WORKERS")]
    pub workers: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rate(_) => "rate",
            Command::OneStep(_) => "one-step",
            Command::CheckGenerator(_) => "check-generator",
            Command::SampleStable(_) => "sample-stable",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Rate(a) | Command::OneStep(a) | Command::CheckGenerator(a) | Command::SampleStable(a) => a,
        }
    }
}

/// Parses `argv`, runs the subcommand and returns the exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let out = cli.command.args().out.clone();
    match run(&cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("levy-euler {}: {e}", cli.command.name());
            if let Err(io) = write_error(&out, &e) {
                eprintln!("could not write error.json: {io}");
            }
            2
        }
    }
}

/// Runs one subcommand; `Ok(pass)` when it completed.
pub fn run(command: &Command) -> Result<bool> {
    let args = command.args();
    let start = Instant::now();
    let mut config = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.mc.master_seed = seed;
    }
    if let Some(workers) = args.workers {
        config.mc.workers = workers;
    }
    config.validate()?;
    std::fs::create_dir_all(&args.out)?;
    let pass = match command {
        Command::Rate(_) => run_rate(&config, &args.out),
        Command::OneStep(_) => run_one_step(&config, &args.out),
        Command::CheckGenerator(_) => run_check_generator(&config, &args.out),
        Command::SampleStable(_) => run_sample_stable(&config, &args.out),
    };
    // Written on failure too, so a failed run can be replayed from it.
    write_meta(&config, command.name(), start.elapsed().as_secs_f64(), &args.out)?;
    pass
}

/// Number in the output format: 17 significant digits, `.` separator.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn points_csv(points: &[WeakErrorPoint]) -> String {
    let mut s = String::from("delta,estimate,stderr,n_paths,excluded\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_num(p.delta),
            fmt_num(p.estimate),
            fmt_num(p.stderr),
            p.n_paths,
            p.excluded
        );
    }
    s
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(out.join(name), contents).map_err(|e| Error::Io(format!("{}: {e}", out.join(name).display())))
}

fn write_json(out: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    write(out, name, &(text + "\n"))
}

fn write_meta(config: &ExperimentConfig, subcommand: &str, wall: f64, out: &Path) -> Result<()> {
    let meta = json!({
        "config": config,
        "seed": config.mc.master_seed,
        "subcommand": subcommand,
        "versions": {
            "levy-euler": env!("CARGO_PKG_VERSION"),
            "config_schema": 1,
        },
        "wall_time_seconds": wall,
    });
    write_json(out, "meta.json", &meta)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter { .. } => "invalid-parameter",
        Error::Dimension(_) => "dimension",
        Error::Quadrature { .. } => "quadrature",
        Error::Divergent(_) => "divergent",
        Error::Degenerate { .. } => "degenerate",
        Error::Bound { .. } => "bound",
        Error::Hypothesis(_) => "hypothesis",
        Error::Explosion { .. } => "explosion",
        Error::Exclusion { .. } => "exclusion",
        Error::Insufficient(_) => "insufficient",
        Error::UnknownCatalog(_) => "unknown-catalog",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

/// Writes `error.json` with the error kind, message and violation list.
pub fn write_error(out: &Path, e: &Error) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    let violations: Vec<String> = match e {
        Error::Config(v) => v.clone(),
        other => vec![other.to_string()],
    };
    let value = json!({
        "error": error_kind(e),
        "message": e.to_string(),
        "violations": violations,
    });
    let text = serde_json::to_string_pretty(&value).unwrap_or_default();
    std::fs::write(out.join("error.json"), text + "\n")
}

const REPORT_HEADER: &str = "fitted_slope,ci_lo,ci_hi,theory_exponent,theory_label,pass";

fn run_rate(config: &ExperimentConfig, out: &Path) -> Result<bool> {
    let exp = config.experiment()?;
    let functional = config.functional()?;
    let law = config.rate_law()?;
    let mut steps = config.grids.n.clone();
    steps.sort_unstable();
    steps.dedup();
    let points = weak_error_sweep(
        &functional,
        &exp,
        &steps,
        config.reference_n(),
        config.mc.n_paths,
        config.mc.master_seed,
    )?;
    write(out, "points.csv", &points_csv(&points))?;

    // Constant coefficients: the scheme is exact and every error must vanish
    // within noise; there is no rate to fit.
    if exp.field().is_constant() {
        let pass = points.iter().all(|p| p.estimate.abs() <= 3.0 * p.stderr);
        let report = format!(
            "{REPORT_HEADER},mode\nNaN,NaN,NaN,{},{},{pass},exactness\n",
            fmt_num(law.exponent),
            law.label.as_str()
        );
        write(out, "report.csv", &report)?;
        return Ok(pass);
    }

    let report = RateReport::new(&points, config.checks.fit_model, law)?;
    let pass = report.pass(config.checks.slope_tolerance);
    let fit = &report.fit;
    let text = format!(
        "{REPORT_HEADER},mode,envelope_constant,envelope_pass,power_residual,log_linear_residual\n\
         {},{},{},{},{},{pass},rate,{},{},{},{}\n",
        fmt_num(fit.slope),
        fmt_num(fit.ci.0),
        fmt_num(fit.ci.1),
        fmt_num(law.exponent),
        law.label.as_str(),
        fmt_num(report.envelope.constant),
        report.envelope.pass,
        fmt_num(fit.power_residual),
        fmt_num(fit.log_linear_residual),
    );
    write(out, "report.csv", &text)?;
    Ok(pass)
}

fn run_one_step(config: &ExperimentConfig, out: &Path) -> Result<bool> {
    let exp = config.experiment()?;
    let law = config.rate_law()?;
    let f = config
        .test
        .f
        .clone()
        .or_else(|| config.test.g.clone())
        .ok_or_else(|| Error::Config(vec!["one-step needs test.f or test.g".into()]))?;
    let n_paths = config.one_step.n_paths.unwrap_or(config.mc.n_paths);
    let sweep = one_step_sweep(
        &f,
        &exp,
        &law,
        &config.deltas(),
        n_paths,
        config.mc.master_seed,
        config.one_step.slope_tolerance,
    )?;
    let mut points = String::from("delta,estimate,stderr,n_paths,excluded\n");
    let mut panel = String::from("delta,s,estimate,stderr\n");
    for c in &sweep.checks {
        let _ = writeln!(
            points,
            "{},{},{},{n_paths},0",
            fmt_num(c.delta),
            fmt_num(c.max_over_s),
            fmt_num(c.stderr)
        );
        for p in &c.panel {
            let _ = writeln!(
                panel,
                "{},{},{},{}",
                fmt_num(c.delta),
                fmt_num(p.s),
                fmt_num(p.estimate),
                fmt_num(p.stderr)
            );
        }
    }
    write(out, "points.csv", &points)?;
    write(out, "panel.csv", &panel)?;
    let report = format!(
        "{REPORT_HEADER}\n{},NaN,NaN,{},{},{}\n",
        fmt_num(sweep.slope),
        fmt_num(sweep.theory_exponent),
        law.label.as_str(),
        sweep.pass
    );
    write(out, "report.csv", &report)?;
    Ok(sweep.pass)
}

fn run_check_generator(config: &ExperimentConfig, out: &Path) -> Result<bool> {
    let exp = config.experiment()?;
    let g = &config.generator;
    let u = g
        .u
        .clone()
        .or_else(|| config.test.g.clone())
        .ok_or_else(|| Error::Config(vec!["check-generator needs generator.u or test.g".into()]))?;
    let n_paths = g.n_paths.unwrap_or(config.mc.n_paths);
    let check = generator_consistency_check(&u, &exp, &g.h, n_paths, config.mc.master_seed, &g.quadrature)?;
    let pass = check.relative_error <= g.max_relative_error;
    let mut points = String::from("h,estimate,stderr,n_paths,excluded\n");
    for p in &check.panel {
        let _ = writeln!(
            points,
            "{},{},{},{n_paths},0",
            fmt_num(p.h),
            fmt_num(p.value),
            fmt_num(p.stderr)
        );
    }
    write(out, "points.csv", &points)?;
    let report = format!(
        "quadrature,quadrature_error,monte_carlo,monte_carlo_stderr,relative_error,tolerance,pass\n{},{},{},{},{},{},{pass}\n",
        fmt_num(check.quadrature),
        fmt_num(check.quadrature_error),
        fmt_num(check.monte_carlo),
        fmt_num(check.monte_carlo_stderr),
        fmt_num(check.relative_error),
        fmt_num(g.max_relative_error),
    );
    write(out, "report.csv", &report)?;
    Ok(pass)
}

fn run_sample_stable(config: &ExperimentConfig, out: &Path) -> Result<bool> {
    let driver = config.driver()?;
    let sampler = IsotropicSampler::new(driver)?;
    let s = &config.sample_stable;
    let d = driver.dim;
    let key = StreamKey::new(config.mc.master_seed, Purpose::SampleStable);
    let samples: Vec<Vec<f64>> = (0..s.n_samples)
        .map(|i| sampler.increment(s.dt, &mut key.stream(i)))
        .collect::<Result<_>>()?;

    let mut csv = (0..d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",") + "\n";
    for x in &samples {
        csv += &x.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(",");
        csv.push('\n');
    }
    write(out, "samples.csv", &csv)?;

    // Scale of one coordinate: (c·dt)^{1/α} for α < 2, sqrt(variance·dt) at α = 2.
    let scale = if driver.is_wiener() {
        (driver.wiener_normalization.variance() * s.dt).sqrt()
    } else {
        (char_exponent_constant(d, driver.alpha)?.value * s.dt).powf(1.0 / driver.alpha)
    };
    let mut coords = Vec::with_capacity(d);
    for k in 0..d {
        let mut xs: Vec<f64> = samples.iter().map(|x| x[k]).collect();
        xs.sort_by(f64::total_cmp);
        let q = [0.25, 0.5, 0.75].map(|p| quantile(&xs, p));
        // Finite in expectation for α > 1 only.
        let abs_mean = xs.iter().map(|v| v.abs()).sum::<f64>() / xs.len() as f64;
        coords.push(json!({
            "coordinate": k,
            "quartiles": [q[0], q[2]],
            "median": q[1],
            "quartiles_unit_scale": [q[0] / scale, q[2] / scale],
            "mean_abs": abs_mean,
        }));
    }
    let moments = json!({
        "alpha": driver.alpha,
        "d": d,
        "dt": s.dt,
        "n_samples": s.n_samples,
        "scale": scale,
        "coordinates": coords,
    });
    write_json(out, "moments.json", &moments)?;
    Ok(true)
}
