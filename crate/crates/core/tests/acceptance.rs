//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Built with `harness = false`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use levy_euler::config::{parse_config, ExperimentConfig};
use levy_euler::generator::{frac_laplacian, mollifier_scaling_probe, QuadratureSpec};
use levy_euler::harness::{
    estimate_weak_error, generator_consistency_check, one_step_sweep, weak_error_sweep, Experiment, Functional,
    RateReport,
};
use levy_euler::levy::{Atom, JumpDistribution, LevyMeasureSpec};
use levy_euler::model::{CoefficientFieldSpec, TestFunction};
use levy_euler::rng::{Purpose, StreamKey};
use levy_euler::stable::{char_exponent_constant, IsotropicSampler, StableDriverSpec};
use statrs::function::gamma::gamma;

// Tolerances pinned by the acceptance criteria.
const CF_SIGMAS: f64 = 3.0;
const CF_SAMPLES: u64 = 100_000;
const CF_BUDGET_SECS: f64 = 30.0;
const EXACT_SIGMAS: f64 = 3.0;
const EXACT_PATHS: u64 = 100_000;
const EXACT_FINE_STEPS: usize = 1024;
const EXACT_BUDGET_SECS: f64 = 60.0;
const SMOOTH_MIN_SLOPE: f64 = 0.8;
const HOLDER_EXPONENT: f64 = 0.5;
const HOLDER_SLOPE_TOLERANCE: f64 = 0.15;
const HEAVY_TAIL_EXPONENT: f64 = 0.5;
const ONE_STEP_TOLERANCE: f64 = 0.15;
const ONE_STEP_PATHS: u64 = 1_000_000;
const GENERATOR_MAX_RELATIVE_ERROR: f64 = 0.05;
const GENERATOR_H: f64 = 1e-3;
const GENERATOR_PATHS: u64 = 1_000_000;
const QUAD_MAX_RELATIVE_ERROR: f64 = 1e-3;
const C11_TOLERANCE: f64 = 1e-4;
const MOLLIFIER_ERROR_SLOPE_TOLERANCE: f64 = 0.1;
const MOLLIFIER_LAPLACIAN_SLOPE_TOLERANCE: f64 = 0.15;
const MOLLIFIER_BUDGET_SECS: f64 = 60.0;
const SWEEP_PATHS: u64 = 1_000_000;
const DETERMINISM_WORKERS: [usize; 3] = [1, 4, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> ExperimentConfig {
    parse_config(&configs_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Closed form of `∫ (1 − cos y₁) |y|^{-d-α} dy`.
fn c_closed(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    2.0 * std::f64::consts::PI.powf(d / 2.0) * gamma(1.0 - alpha / 2.0)
        / (alpha * 2f64.powf(alpha) * gamma((d + alpha) / 2.0))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let t = 1.0;
    let radii = [0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
    let mut worst = 0.0f64;
    for (case, (d, alpha)) in [(1, 0.7), (1, 1.0), (1, 1.5), (2, 1.5), (2, 2.0)].into_iter().enumerate() {
        let sampler = IsotropicSampler::new(StableDriverSpec::new(alpha, d).unwrap()).unwrap();
        let key = StreamKey::new(101, Purpose::Diagnostic).level(case as u64);
        let samples: Vec<Vec<f64>> = (0..CF_SAMPLES)
            .map(|i| sampler.increment(t, &mut key.stream(i)).unwrap())
            .collect();
        // Under the default normalization the Gaussian branch has E e^{i⟨ξ,U_t⟩} = e^{−t|ξ|²}.
        let c = if alpha == 2.0 { 1.0 } else { c_closed(d, alpha) };
        for (k, r) in radii.iter().enumerate() {
            let angle = 0.4 * k as f64;
            let xi: Vec<f64> = if d == 1 { vec![*r] } else { vec![r * angle.cos(), r * angle.sin()] };
            let vals: Vec<f64> = samples
                .iter()
                .map(|x| x.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>().cos())
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            let exact = (-t * c * r.powf(alpha)).exp();
            worst = worst.max((mean - exact).abs() / se);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= CF_SIGMAS && secs < CF_BUDGET_SECS,
        format!("max |ecf − exact| = {worst:.2} se over 40 points, {secs:.1} s"),
    )
}

fn constant_experiment(alpha: f64) -> Experiment {
    let spec: CoefficientFieldSpec = serde_json::from_value(serde_json::json!({
        "drift": {"kind": "constant", "value": 0.5},
        "diffusion": {"kind": "constant", "value": 1.0},
        "jump": {"kind": "constant", "value": 1.0}
    }))
    .unwrap();
    let z = LevyMeasureSpec {
        rate: 2.0,
        jump: JumpDistribution::Atoms {
            atoms: vec![
                Atom { point: vec![1.0], prob: 0.5 },
                Atom { point: vec![-0.5], prob: 0.5 },
            ],
        },
        tail_moment_order: 1.5,
        driver_alpha: alpha,
    };
    Experiment::new(
        spec.build(1, 1).unwrap(),
        StableDriverSpec::new(alpha, 1).unwrap(),
        Some(z),
        vec![0.0],
        1.0,
    )
    .unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let g = Functional::Terminal(TestFunction::PlaneWave { freq: vec![1.0], phase: 0.0 });
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [1.5, 2.0] {
        let exp = constant_experiment(alpha);
        let p = estimate_weak_error(&g, &exp, 1.0, 1.0 / EXACT_FINE_STEPS as f64, EXACT_PATHS, 202).unwrap();
        pass &= p.estimate.abs() <= EXACT_SIGMAS * p.stderr;
        parts.push(format!("α={alpha}: {:+.2e} ± {:.2e}", p.estimate, p.stderr));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < EXACT_BUDGET_SECS, format!("{}, {secs:.1} s", parts.join("; ")))
}

fn rate_report(config: &ExperimentConfig) -> RateReport {
    let exp = config.experiment().unwrap();
    let points = weak_error_sweep(
        &config.functional().unwrap(),
        &exp,
        &config.grids.n,
        config.reference_n(),
        SWEEP_PATHS,
        config.mc.master_seed,
    )
    .unwrap();
    RateReport::new(&points, config.checks.fit_model, config.rate_law().unwrap()).unwrap()
}

fn describe(report: &RateReport) -> String {
    let ratios: Vec<String> = report.envelope.ratios.iter().map(|r| format!("{r:.2}")).collect();
    format!(
        "slope {:.3} (CI {:.3}..{:.3}), {} usable, envelope ratios [{}]",
        report.fit.slope,
        report.fit.ci.0,
        report.fit.ci.1,
        report.fit.used.len(),
        ratios.join(" ")
    )
}

fn criterion_3() -> Outcome {
    let config = load("smooth_rate.json");
    let report = rate_report(&config);
    assert_eq!(report.law.exponent, 1.0);
    outcome(
        report.fit.slope >= SMOOTH_MIN_SLOPE && report.envelope.pass,
        describe(&report),
    )
}

fn criterion_4() -> Outcome {
    let config = load("holder_rate.json");
    let report = rate_report(&config);
    assert_eq!(report.law.exponent, HOLDER_EXPONENT);
    outcome(
        report.fit.slope >= HOLDER_EXPONENT - HOLDER_SLOPE_TOLERANCE && report.envelope.pass,
        describe(&report),
    )
}

fn criterion_5() -> Outcome {
    let config = load("heavy_tail_rate.json");
    let report = rate_report(&config);
    assert_eq!(report.law.exponent, HEAVY_TAIL_EXPONENT);
    outcome(report.envelope.pass, describe(&report))
}

fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["smooth_rate.json", "holder_rate.json"] {
        let config = load(name);
        let exp = config.experiment().unwrap();
        let law = config.rate_law().unwrap();
        let f = config.test.f.clone().or(config.test.g.clone()).unwrap();
        let sweep = one_step_sweep(
            &f,
            &exp,
            &law,
            &config.deltas(),
            ONE_STEP_PATHS,
            config.mc.master_seed,
            ONE_STEP_TOLERANCE,
        )
        .unwrap();
        pass &= sweep.slope >= law.exponent - ONE_STEP_TOLERANCE;
        parts.push(format!("{name}: slope {:.3} vs exponent {}", sweep.slope, law.exponent));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let config = load("generator_check.json");
    let exp = config.experiment().unwrap();
    assert_eq!(config.model.alpha, 1.5);
    let u = TestFunction::PlaneWave { freq: vec![1.0], phase: 0.0 };
    let check = generator_consistency_check(
        &u,
        &exp,
        &[GENERATOR_H],
        GENERATOR_PATHS,
        config.mc.master_seed,
        &QuadratureSpec::default(),
    )
    .unwrap();
    outcome(
        check.relative_error <= GENERATOR_MAX_RELATIVE_ERROR,
        format!(
            "quadrature {:+.5}, Monte Carlo {:+.5} ± {:.5}, relative error {:.2e}",
            check.quadrature, check.monte_carlo, check.monte_carlo_stderr, check.relative_error
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    for d in [1usize, 2] {
        for alpha in [0.5, 1.0, 1.5] {
            let mut freq = vec![0.0; d];
            freq[0] = 1.0;
            freq[d - 1] += 0.5;
            let u = TestFunction::PlaneWave { freq: freq.clone(), phase: 0.0 };
            let x = vec![0.3; d];
            let q = QuadratureSpec {
                angular_nodes: if d == 1 { 64 } else { 256 },
                max_panel_width: 8.0,
                ..QuadratureSpec::with_tolerance(if alpha < 1.0 { 5e-2 } else { 1e-2 })
            };
            let v = frac_laplacian(&u, &x, alpha, &q).unwrap().value;
            let norm = freq.iter().map(|f| f * f).sum::<f64>().sqrt();
            let exact = -c_closed(d, alpha) * norm.powf(alpha) * u.eval(&x);
            worst = worst.max((v - exact).abs() / exact.abs());
        }
    }
    let c11 = char_exponent_constant(1, 1.0).unwrap().value;
    let c11_err = (c11 - std::f64::consts::PI).abs();
    outcome(
        worst <= QUAD_MAX_RELATIVE_ERROR && c11_err <= C11_TOLERANCE,
        format!("max relative error {worst:.2e}, |c₁,₁ − π| = {c11_err:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let (beta, alpha) = (0.5, 1.5);
    let f = TestFunction::RadialPower {
        center: vec![0.0],
        power: beta,
        cutoff: 1.0,
        scale: 1.0,
    };
    let epsilons: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
    let probe = mollifier_scaling_probe(&f, alpha, &epsilons).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (probe.slope_sup_error - beta).abs() <= MOLLIFIER_ERROR_SLOPE_TOLERANCE
            && (probe.slope_frac_laplacian - (beta - alpha)).abs() <= MOLLIFIER_LAPLACIAN_SLOPE_TOLERANCE
            && secs < MOLLIFIER_BUDGET_SECS,
        format!(
            "slopes {:.3} (target {beta}) and {:.3} (target {}), {secs:.1} s",
            probe.slope_sup_error,
            probe.slope_frac_laplacian,
            beta - alpha
        ),
    )
}

fn run_cli(config: &Path, out: &Path, workers: usize) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_levy-euler"))
        .args(["rate", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .env_remove("LEVY_EULER_SEED")
        .env_remove("LEVY_EULER_WORKERS")
        .status()
        .unwrap();
    assert!(status.code().is_some_and(|c| c <= 1), "rate run failed: {status}");
    std::fs::read(out.join("points.csv")).unwrap()
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut config = load("holder_rate.json");
    config.mc.n_paths = 20_000;
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let mut runs = Vec::new();
    for (i, &w) in DETERMINISM_WORKERS.iter().chain(&[1]).enumerate() {
        runs.push(run_cli(&path, &dir.path().join(format!("run{i}")), w));
    }
    let identical = runs.windows(2).all(|p| p[0] == p[1]);
    outcome(
        identical,
        format!(
            "{} runs (workers {:?}, then 1 again), {} bytes each, identical = {identical}",
            runs.len(),
            DETERMINISM_WORKERS,
            runs[0].len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("stable characteristic function", criterion_1),
        ("constant-coefficient exactness", criterion_2),
        ("smooth-case rate", criterion_3),
        ("Hölder-case rate", criterion_4),
        ("heavy-tail rate", criterion_5),
        ("one-step estimate", criterion_6),
        ("generator consistency", criterion_7),
        ("fractional-Laplacian quadrature", criterion_8),
        ("mollifier scalings", criterion_9),
        ("determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
