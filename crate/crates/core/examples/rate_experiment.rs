//! Weak-error sweep with rate fit and envelope check for a config file.
//!
//! Usage: `cargo run --release --example rate_experiment [config.json] [n_paths]`.
//! Defaults to the Hölder-coefficient config with 20 000 paths per level.

use std::path::PathBuf;

use levy_euler::config::parse_config;
use levy_euler::harness::{weak_error_sweep, RateReport};

fn main() -> levy_euler::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/holder_rate.json"));
    let mut config = parse_config(&path)?;
    config.mc.n_paths = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let exp = config.experiment()?;
    let law = config.rate_law()?;
    let points = weak_error_sweep(
        &config.functional()?,
        &exp,
        &config.grids.n,
        config.reference_n(),
        config.mc.n_paths,
        config.mc.master_seed,
    )?;
    println!("{:>10} {:>13} {:>11} {:>7}", "delta", "error", "stderr", "usable");
    for p in &points {
        println!("{:>10.5} {:>+13.5e} {:>11.3e} {:>7}", p.delta, p.estimate, p.stderr, p.usable());
    }
    println!("theory: {} (exponent {:.3})", law.label.as_str(), law.exponent);
    match RateReport::new(&points, config.checks.fit_model, law) {
        Ok(report) => println!(
            "fitted slope {:.3} (95% CI {:.3}..{:.3}), envelope {}, pass {}",
            report.fit.slope,
            report.fit.ci.0,
            report.fit.ci.1,
            report.envelope.pass,
            report.pass(config.checks.slope_tolerance)
        ),
        Err(e) => println!("no fit: {e}"),
    }
    Ok(())
}
