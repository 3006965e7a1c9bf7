//! Weak-error estimation, rate fitting and the theoretical rate table.
//!
//! `E[g(X_T)]` is replaced by the Euler scheme on a fine reference grid
//! simulated with independent randomness. Points whose error is not resolved
//! by the Monte Carlo (`|e| ≤ 3·stderr`) are excluded from fits. The rate
//! `r(δ)` is an upper bound, so the check is an envelope `|e| ≤ C·r(δ)`
//! anchored at the coarsest usable point rather than an equality of slopes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::{make_uniform_grid, monte_carlo, EulerScheme, TimeGrid};
use crate::error::{Error, Result};
use crate::generator::{apply_a, apply_b, QuadratureSpec};
use crate::levy::{moment_report, Atom, JumpDistribution, LevyMeasureSpec};
use crate::model::{CoefficientField, TestFunction};
use crate::rng::{Purpose, StreamKey};
use crate::stable::StableDriverSpec;
use crate::stats::fit_line;

/// Which statement of the rate table applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Main,
    HeavyTail,
    JumpDiffusion,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Main => "main",
            Variant::HeavyTail => "heavy-tail",
            Variant::JumpDiffusion => "jump-diffusion",
        }
    }
}

/// Shape of `r(δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateLabel {
    /// `δ^{β/α}`
    #[serde(rename = "power(β/α)")]
    PowerBetaOverAlpha,
    /// `δ^{(β∧μ)/α}`
    #[serde(rename = "power((β∧μ)/α)")]
    PowerMinOverAlpha,
    /// `δ(1 + |ln δ|)`
    #[serde(rename = "log-linear")]
    LogLinear,
    /// `δ`
    #[serde(rename = "linear")]
    Linear,
}

impl RateLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RateLabel::PowerBetaOverAlpha => "power(β/α)",
            RateLabel::PowerMinOverAlpha => "power((β∧μ)/α)",
            RateLabel::LogLinear => "log-linear",
            RateLabel::Linear => "linear",
        }
    }
}

/// The rate function `r(δ)` selected by `(α, β, μ, variant)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLaw {
    pub label: RateLabel,
    /// Power of δ; 1 for the log-linear law.
    pub exponent: f64,
}

impl RateLaw {
    pub fn eval(&self, delta: f64) -> f64 {
        match self.label {
            RateLabel::LogLinear => delta * (1.0 + delta.ln().abs()),
            _ => delta.powf(self.exponent),
        }
    }
}

fn hypothesis(variant: Variant, inequality: &str, alpha: f64, beta: f64, mu: f64) -> Error {
    Error::Hypothesis(format!(
        "{} variant requires {inequality} (α = {alpha}, β = {beta}, μ = {mu})",
        variant.as_str()
    ))
}

fn main_law(alpha: f64, beta: f64, mu: f64) -> Result<RateLaw> {
    if !(0.0 < beta && beta <= mu && mu < alpha + beta) {
        return Err(hypothesis(Variant::Main, "0 < β ≤ μ < α + β", alpha, beta, mu));
    }
    Ok(if beta < alpha {
        RateLaw {
            label: RateLabel::PowerBetaOverAlpha,
            exponent: beta / alpha,
        }
    } else if beta == alpha {
        RateLaw {
            label: RateLabel::LogLinear,
            exponent: 1.0,
        }
    } else {
        RateLaw {
            label: RateLabel::Linear,
            exponent: 1.0,
        }
    })
}

/// Selects `r(δ)`, checking the hypotheses of the chosen statement.
///
/// In the jump-diffusion variant, parameter combinations not covered by its
/// three cases (for instance μ = 2 with β ≠ 2) fall back to the main table.
pub fn rate_law(alpha: f64, beta: f64, mu: f64, variant: Variant) -> Result<RateLaw> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(hypothesis(variant, "0 < α ≤ 2", alpha, beta, mu));
    }
    if !(beta > 0.0 && beta < 3.0) {
        return Err(hypothesis(variant, "β ∈ (0,3)", alpha, beta, mu));
    }
    match variant {
        Variant::Main => main_law(alpha, beta, mu),
        Variant::HeavyTail => {
            if !(0.0 < beta && beta <= mu && mu < alpha) {
                return Err(hypothesis(variant, "0 < β ≤ μ < α", alpha, beta, mu));
            }
            Ok(RateLaw {
                label: RateLabel::PowerMinOverAlpha,
                exponent: beta.min(mu) / alpha,
            })
        }
        Variant::JumpDiffusion => {
            if alpha != 2.0 {
                return Err(hypothesis(variant, "α = 2", alpha, beta, mu));
            }
            if !(mu > 0.0 && mu < 3.0) {
                return Err(hypothesis(variant, "μ ∈ (0,3)", alpha, beta, mu));
            }
            if mu < 2.0 {
                Ok(RateLaw {
                    label: RateLabel::PowerMinOverAlpha,
                    exponent: beta.min(mu) / 2.0,
                })
            } else if mu == 2.0 && beta == 2.0 {
                Ok(RateLaw {
                    label: RateLabel::LogLinear,
                    exponent: 1.0,
                })
            } else if mu > 2.0 && beta > 2.0 {
                Ok(RateLaw {
                    label: RateLabel::Linear,
                    exponent: 1.0,
                })
            } else {
                main_law(alpha, beta, mu)
            }
        }
    }
}

/// `r(δ, α, β)` from the rate table.
pub fn theoretical_rate(alpha: f64, beta: f64, mu: f64, variant: Variant, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            constraint: "must be positive".into(),
        });
    }
    Ok(rate_law(alpha, beta, mu, variant)?.eval(delta))
}

/// Regularity and moment hypotheses of the rate statements that concern the
/// model rather than `(α, β, μ)`. Returns every violation found.
pub fn regularity_violations(
    field: &CoefficientField,
    z: Option<&LevyMeasureSpec>,
    functional: &Functional,
    alpha: f64,
    beta: f64,
    mu: f64,
    variant: Variant,
) -> Vec<String> {
    const SLACK: f64 = 1e-12;
    let mut out = Vec::new();
    if field.beta_a + SLACK < beta {
        out.push(format!("a must lie in C^β: declared regularity {} < β = {beta}", field.beta_a));
    }
    if field.beta_b + SLACK < beta {
        out.push(format!("b must lie in C^β: declared regularity {} < β = {beta}", field.beta_b));
    }
    let g_needed = beta / mu.min(1.0);
    if field.beta_g + SLACK < g_needed {
        out.push(format!(
            "G must lie in C^(β/(μ∧1)) = C^{g_needed}: declared regularity {}",
            field.beta_g
        ));
    }
    match functional {
        Functional::Terminal(g) => {
            if g.declared_beta() + SLACK < alpha + beta {
                out.push(format!(
                    "g must lie in C^(α+β) = C^{}: declared regularity {}",
                    alpha + beta,
                    g.declared_beta()
                ));
            }
        }
        Functional::Running(f) => {
            if f.declared_beta() + SLACK < beta {
                out.push(format!(
                    "f must lie in C^β: declared regularity {} < β = {beta}",
                    f.declared_beta()
                ));
            }
        }
    }
    if let Some(z) = z {
        // Small jumps are weighted by |y|^α (|y|² in the jump-diffusion case,
        // which is the same exponent since α = 2 there).
        let small = if variant == Variant::JumpDiffusion { 2.0 } else { alpha };
        if let Err(e) = moment_report(z, small, mu) {
            out.push(format!("∫_{{|y|≤1}}|y|^α π(dy) + ∫_{{|y|>1}}|y|^μ π(dy) < ∞ fails: {e}"));
        }
        if z.tail_moment_order != mu {
            out.push(format!(
                "declared tail moment order {} differs from μ = {mu}",
                z.tail_moment_order
            ));
        }
    }
    out
}

/// `E[g(Y_T)]` or `E[Σ f(Y_{τ_i}) Δτ_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "function", rename_all = "kebab-case")]
pub enum Functional {
    Terminal(TestFunction),
    Running(TestFunction),
}

impl Functional {
    pub fn function(&self) -> &TestFunction {
        match self {
            Functional::Terminal(f) | Functional::Running(f) => f,
        }
    }

    fn purpose(&self) -> Purpose {
        match self {
            Functional::Terminal(_) => Purpose::Terminal,
            Functional::Running(_) => Purpose::Running,
        }
    }
}

/// A compiled model ready for Monte Carlo.
#[derive(Debug)]
pub struct Experiment {
    pub scheme: EulerScheme,
    pub z: Option<LevyMeasureSpec>,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub workers: usize,
    /// Largest tolerated fraction of excluded (exploded) paths.
    pub exclusion_threshold: f64,
}

impl Experiment {
    pub fn new(
        field: CoefficientField,
        driver: StableDriverSpec,
        z: Option<LevyMeasureSpec>,
        x0: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                value: horizon,
                constraint: "must be positive and finite".into(),
            });
        }
        if x0.len() != field.dim {
            return Err(Error::Dimension(format!(
                "x0 has length {}, state dimension is {}",
                x0.len(),
                field.dim
            )));
        }
        Ok(Self {
            scheme: EulerScheme::new(field, driver, z.as_ref())?,
            z,
            x0,
            horizon,
            workers: 1,
            exclusion_threshold: 0.0,
        })
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_exclusion_threshold(mut self, threshold: f64) -> Self {
        self.exclusion_threshold = threshold;
        self
    }

    pub fn field(&self) -> &CoefficientField {
        self.scheme.field()
    }

    pub fn driver(&self) -> &StableDriverSpec {
        self.scheme.driver()
    }

    /// Uniform grid on `[0, T]` with `steps` steps.
    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        make_uniform_grid(self.horizon, steps)
    }

    /// Number of uniform steps with step size `delta`.
    pub fn steps_for(&self, delta: f64) -> Result<usize> {
        let n = (self.horizon / delta).round();
        if !(n >= 1.0) || ((self.horizon / n - delta).abs() > 1e-12 * delta) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: delta,
                constraint: format!("must divide the horizon {}", self.horizon),
            });
        }
        Ok(n as usize)
    }
}

/// Monte Carlo mean with its CLT standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub excluded: u64,
}

fn check_paths(n_paths: u64) -> Result<()> {
    if n_paths < 2 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            value: n_paths as f64,
            constraint: "need at least 2 paths".into(),
        });
    }
    Ok(())
}

fn check_exclusion(exp: &Experiment, excluded: u64, n_paths: u64) -> Result<()> {
    if excluded as f64 > exp.exclusion_threshold * n_paths as f64 {
        return Err(Error::Exclusion {
            excluded,
            n_paths,
            threshold: exp.exclusion_threshold,
        });
    }
    Ok(())
}

/// Monte Carlo estimate of the functional without its additive constant.
fn estimate_variable_part(
    rest: &TestFunction,
    terminal: bool,
    exp: &Experiment,
    grid: &TimeGrid,
    n_paths: u64,
    key: StreamKey,
) -> Result<Estimate> {
    let running = if terminal { None } else { Some(rest) };
    let s = monte_carlo(key, n_paths, exp.workers, |_, rng| {
        let r = exp.scheme.simulate(&exp.x0, grid, running, rng)?;
        let v = if terminal { rest.eval(&r.terminal) } else { r.running_integral };
        Ok((v, r.jump_count))
    })?;
    check_exclusion(exp, s.excluded, s.n_paths)?;
    Ok(Estimate {
        mean: s.mean(),
        stderr: s.stderr(),
        n_paths: s.n_paths,
        excluded: s.excluded,
    })
}

/// Splits `functional` into a simulated part and an exact constant.
fn split(functional: &Functional, horizon: f64) -> (Option<TestFunction>, f64, bool) {
    let terminal = matches!(functional, Functional::Terminal(_));
    let (rest, c) = functional.function().split_constant();
    let constant = if terminal { c } else { c * horizon };
    (rest, constant, terminal)
}

fn estimate_with_key(
    functional: &Functional,
    exp: &Experiment,
    grid: &TimeGrid,
    n_paths: u64,
    key: StreamKey,
) -> Result<Estimate> {
    check_paths(n_paths)?;
    let (rest, constant, terminal) = split(functional, grid.horizon());
    match rest {
        None => Ok(Estimate {
            mean: constant,
            stderr: 0.0,
            n_paths,
            excluded: 0,
        }),
        Some(rest) => {
            let mut e = estimate_variable_part(&rest, terminal, exp, grid, n_paths, key)?;
            e.mean += constant;
            Ok(e)
        }
    }
}

/// `E[g(Y_T)]` or the expected running integral on `grid`.
pub fn estimate_expectation(
    functional: &Functional,
    exp: &Experiment,
    grid: &TimeGrid,
    n_paths: u64,
    seed: u64,
) -> Result<Estimate> {
    let key = StreamKey::new(seed, functional.purpose()).level(grid.steps() as u64);
    estimate_with_key(functional, exp, grid, n_paths, key)
}

/// One weak-error measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorPoint {
    pub delta: f64,
    /// Signed `E[g(Y^δ)] − E[g(Y^{δ_ref})]`.
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: u64,
    /// Excluded paths in the coarse and reference runs together.
    pub excluded: u64,
}

impl WeakErrorPoint {
    /// Resolved above Monte Carlo noise: `|estimate| > 3·stderr`.
    pub fn usable(&self) -> bool {
        self.estimate.abs() > 3.0 * self.stderr
    }
}

/// Difference of the non-constant parts; additive constants cancel exactly.
fn weak_error_from(coarse: Estimate, reference: Estimate, delta: f64) -> WeakErrorPoint {
    WeakErrorPoint {
        delta,
        estimate: coarse.mean - reference.mean,
        stderr: coarse.stderr.hypot(reference.stderr),
        n_paths: coarse.n_paths,
        excluded: coarse.excluded + reference.excluded,
    }
}

fn variable_estimate(
    rest: &Option<TestFunction>,
    terminal: bool,
    exp: &Experiment,
    steps: usize,
    n_paths: u64,
    key: StreamKey,
) -> Result<Estimate> {
    match rest {
        None => Ok(Estimate {
            mean: 0.0,
            stderr: 0.0,
            n_paths,
            excluded: 0,
        }),
        Some(f) => estimate_variable_part(f, terminal, exp, &exp.grid(steps)?, n_paths, key),
    }
}

fn reference_key(functional: &Functional, seed: u64, steps: usize) -> StreamKey {
    StreamKey::new(seed, functional.purpose())
        .level(steps as u64)
        .reference(true)
}

fn check_separation(delta: f64, delta_ref: f64) -> Result<()> {
    if !(delta_ref <= delta / 16.0) {
        return Err(Error::InvalidParameter {
            name: "delta_ref",
            value: delta_ref,
            constraint: format!("must be at most δ/16 = {}", delta / 16.0),
        });
    }
    Ok(())
}

/// Weak error at step `delta` against a reference run at `delta_ref`.
pub fn estimate_weak_error(
    functional: &Functional,
    exp: &Experiment,
    delta: f64,
    delta_ref: f64,
    n_paths: u64,
    seed: u64,
) -> Result<WeakErrorPoint> {
    Ok(weak_error_sweep(functional, exp, &[exp.steps_for(delta)?], exp.steps_for(delta_ref)?, n_paths, seed)?[0])
}

/// Weak errors for several uniform grids sharing one reference run. The
/// result equals calling [`estimate_weak_error`] for each grid. Points are
/// returned with δ descending.
pub fn weak_error_sweep(
    functional: &Functional,
    exp: &Experiment,
    steps: &[usize],
    reference_steps: usize,
    n_paths: u64,
    seed: u64,
) -> Result<Vec<WeakErrorPoint>> {
    check_paths(n_paths)?;
    let mut steps = steps.to_vec();
    steps.sort_unstable();
    steps.dedup();
    if steps.is_empty() {
        return Err(Error::Insufficient("no grids given".into()));
    }
    let delta_ref = exp.horizon / reference_steps as f64;
    for &n in &steps {
        check_separation(exp.horizon / n as f64, delta_ref)?;
    }
    let (rest, _, terminal) = split(functional, exp.horizon);
    let reference = variable_estimate(
        &rest,
        terminal,
        exp,
        reference_steps,
        n_paths,
        reference_key(functional, seed, reference_steps),
    )?;
    steps
        .iter()
        .map(|&n| {
            let key = StreamKey::new(seed, functional.purpose()).level(n as u64);
            let coarse = variable_estimate(&rest, terminal, exp, n, n_paths, key)?;
            Ok(weak_error_from(coarse, reference, exp.horizon / n as f64))
        })
        .collect()
}

/// Regression model for [`fit_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    #[default]
    Power,
    LogLinear,
}

/// Result of regressing `|e|` on `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub model: FitModel,
    /// Least-squares slope of `ln|e|` against `ln δ`.
    pub slope: f64,
    /// 95% confidence interval of the slope.
    pub ci: (f64, f64),
    /// Scale `c` of the selected model: `c·δ^slope` or `c·δ(1 + |ln δ|)`.
    pub scale: f64,
    /// Residual sum of squares in log space of the power and log-linear fits.
    pub power_residual: f64,
    pub log_linear_residual: f64,
    /// Indices (into the sorted points) used by the fit.
    pub used: Vec<usize>,
}

fn sort_points(points: &[WeakErrorPoint]) -> Vec<WeakErrorPoint> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    p
}

/// Fits the decay of `|e|` over the usable points (`|e| > 3·stderr`).
pub fn fit_rate(points: &[WeakErrorPoint], model: FitModel) -> Result<RateFit> {
    let points = sort_points(points);
    let used: Vec<usize> = (0..points.len()).filter(|&i| points[i].usable()).collect();
    if used.len() < 3 {
        return Err(Error::Insufficient(format!(
            "{} of {} points resolved above 3 standard errors; need at least 3",
            used.len(),
            points.len()
        )));
    }
    let x: Vec<f64> = used.iter().map(|&i| points[i].delta.ln()).collect();
    let y: Vec<f64> = used.iter().map(|&i| points[i].estimate.abs().ln()).collect();
    let line = fit_line(&x, &y).ok_or_else(|| Error::Insufficient("grid steps must differ".into()))?;
    let dof = (used.len() - 2) as f64;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Insufficient(e.to_string()))?
        .inverse_cdf(0.975);
    let half = t * line.slope_stderr;
    // ln|e| = ln c + ln(δ(1 + |ln δ|))
    let shape: Vec<f64> = used
        .iter()
        .map(|&i| {
            let d = points[i].delta;
            (d * (1.0 + d.ln().abs())).ln()
        })
        .collect();
    let log_c = y.iter().zip(&shape).map(|(a, b)| a - b).sum::<f64>() / y.len() as f64;
    let log_linear_residual = y
        .iter()
        .zip(&shape)
        .map(|(a, b)| (a - b - log_c).powi(2))
        .sum::<f64>();
    Ok(RateFit {
        model,
        slope: line.slope,
        ci: (line.slope - half, line.slope + half),
        scale: match model {
            FitModel::Power => line.intercept.exp(),
            FitModel::LogLinear => log_c.exp(),
        },
        power_residual: line.rss,
        log_linear_residual,
        used,
    })
}

/// `|e_i| ≤ C·r(δ_i)` for every usable point, with `C` anchored at the
/// coarsest usable point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCheck {
    pub constant: f64,
    /// `|e_i| / (C·r(δ_i))` for the usable points, δ descending.
    pub ratios: Vec<f64>,
    pub pass: bool,
}

pub fn envelope_check(points: &[WeakErrorPoint], law: &RateLaw) -> Result<EnvelopeCheck> {
    let usable: Vec<WeakErrorPoint> = sort_points(points).into_iter().filter(|p| p.usable()).collect();
    let first = usable
        .first()
        .ok_or_else(|| Error::Insufficient("no point resolved above 3 standard errors".into()))?;
    let constant = first.estimate.abs() / law.eval(first.delta);
    let ratios: Vec<f64> = usable
        .iter()
        .map(|p| p.estimate.abs() / (constant * law.eval(p.delta)))
        .collect();
    // A few ulps of slack so the anchor, C·r(δ₀) = |e₀| up to rounding, passes.
    let pass = usable
        .iter()
        .all(|p| p.estimate.abs() <= constant * law.eval(p.delta) * (1.0 + 8.0 * f64::EPSILON));
    Ok(EnvelopeCheck { constant, ratios, pass })
}

/// Weak-error points, their fit and the comparison with the rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// δ descending.
    pub points: Vec<WeakErrorPoint>,
    pub fit: RateFit,
    pub law: RateLaw,
    pub envelope: EnvelopeCheck,
}

impl RateReport {
    pub fn new(points: &[WeakErrorPoint], model: FitModel, law: RateLaw) -> Result<Self> {
        Ok(Self {
            points: sort_points(points),
            fit: fit_rate(points, model)?,
            law,
            envelope: envelope_check(points, &law)?,
        })
    }

    pub fn fitted_slope(&self) -> f64 {
        self.fit.slope
    }

    /// Envelope holds and, if requested, the slope is at least
    /// `exponent − slope_tolerance`.
    pub fn pass(&self, slope_tolerance: Option<f64>) -> bool {
        self.envelope.pass && slope_tolerance.is_none_or(|t| self.fit.slope >= self.law.exponent - t)
    }
}

/// `E[f(Y_s)] − f(x₀)` for one Euler step of length `s` from `x₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepPoint {
    pub s: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStepCheck {
    pub delta: f64,
    pub panel: Vec<OneStepPoint>,
    /// `max_s |E[f(Y_s) − f(x₀)]|`.
    pub max_over_s: f64,
    /// Standard error of the maximising panel entry.
    pub stderr: f64,
    /// `r(δ)`.
    pub bound: f64,
}

/// Fractions of δ at which the one-step estimate is probed.
pub const ONE_STEP_PANEL: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// One-step estimate `max_{s ≤ δ} |E[f(Y_s) − f(Y_0)]|` from `x₀`.
pub fn one_step_check(
    f: &TestFunction,
    exp: &Experiment,
    law: &RateLaw,
    delta: f64,
    n_paths: u64,
    seed: u64,
) -> Result<OneStepCheck> {
    check_paths(n_paths)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            constraint: "must be positive".into(),
        });
    }
    let (rest, _) = f.split_constant();
    let mut panel = Vec::with_capacity(ONE_STEP_PANEL.len());
    for frac in ONE_STEP_PANEL {
        let s = frac * delta;
        let point = match &rest {
            None => OneStepPoint {
                s,
                estimate: 0.0,
                stderr: 0.0,
            },
            Some(rest) => {
                let grid = TimeGrid::new(vec![0.0, s])?;
                let f0 = rest.eval(&exp.x0);
                let key = StreamKey::new(seed, Purpose::OneStep).level(s.to_bits());
                let m = monte_carlo(key, n_paths, exp.workers, |_, rng| {
                    let r = exp.scheme.simulate(&exp.x0, &grid, None, rng)?;
                    Ok((rest.eval(&r.terminal) - f0, r.jump_count))
                })?;
                check_exclusion(exp, m.excluded, m.n_paths)?;
                OneStepPoint {
                    s,
                    estimate: m.mean(),
                    stderr: m.stderr(),
                }
            }
        };
        panel.push(point);
    }
    let best = panel
        .iter()
        .max_by(|a, b| a.estimate.abs().total_cmp(&b.estimate.abs()))
        .copied()
        .unwrap_or(OneStepPoint {
            s: delta,
            estimate: 0.0,
            stderr: 0.0,
        });
    Ok(OneStepCheck {
        delta,
        max_over_s: best.estimate.abs(),
        stderr: best.stderr,
        bound: law.eval(delta),
        panel,
    })
}

/// One-step checks over a δ-sweep and the log–log slope of their maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepSweep {
    /// δ descending.
    pub checks: Vec<OneStepCheck>,
    pub slope: f64,
    pub theory_exponent: f64,
    /// `slope ≥ theory_exponent − tolerance`.
    pub pass: bool,
}

pub fn one_step_sweep(
    f: &TestFunction,
    exp: &Experiment,
    law: &RateLaw,
    deltas: &[f64],
    n_paths: u64,
    seed: u64,
    tolerance: f64,
) -> Result<OneStepSweep> {
    let mut deltas = deltas.to_vec();
    deltas.sort_by(|a, b| b.total_cmp(a));
    let checks: Vec<OneStepCheck> = deltas
        .iter()
        .map(|&d| one_step_check(f, exp, law, d, n_paths, seed))
        .collect::<Result<_>>()?;
    let used: Vec<&OneStepCheck> = checks.iter().filter(|c| c.max_over_s > 3.0 * c.stderr).collect();
    if used.len() < 3 {
        return Err(Error::Insufficient(format!(
            "{} of {} one-step maxima resolved above 3 standard errors; need at least 3",
            used.len(),
            checks.len()
        )));
    }
    let x: Vec<f64> = used.iter().map(|c| c.delta.ln()).collect();
    let y: Vec<f64> = used.iter().map(|c| c.max_over_s.ln()).collect();
    let slope = fit_line(&x, &y)
        .ok_or_else(|| Error::Insufficient("sweep steps must differ".into()))?
        .slope;
    Ok(OneStepSweep {
        checks,
        slope,
        theory_exponent: law.exponent,
        pass: slope >= law.exponent - tolerance,
    })
}

/// Monte Carlo difference quotient at one `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorPoint {
    pub h: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCheck {
    /// `A_{x₀}u(x₀) + B_{x₀}u(x₀)` by quadrature.
    pub quadrature: f64,
    /// Quadrature error bound.
    pub quadrature_error: f64,
    pub panel: Vec<GeneratorPoint>,
    /// Monte Carlo side extrapolated linearly to `h = 0` (the single value
    /// when the panel has one entry).
    pub monte_carlo: f64,
    pub monte_carlo_stderr: f64,
    pub relative_error: f64,
}

impl GeneratorCheck {
    /// `sqrt(stderr² + quadrature_error²)`.
    pub fn pooled_error(&self) -> f64 {
        self.monte_carlo_stderr.hypot(self.quadrature_error)
    }
}

fn silent_jumps(dim: usize, alpha: f64) -> LevyMeasureSpec {
    LevyMeasureSpec {
        rate: 0.0,
        jump: JumpDistribution::Atoms {
            atoms: vec![Atom {
                point: vec![0.0; dim],
                prob: 1.0,
            }],
        },
        tail_moment_order: 1.0,
        driver_alpha: alpha,
    }
}

/// Compares `(E[u(Y_h)] − u(x₀))/h` from one Euler step with
/// `(A_{x₀} + B_{x₀})u(x₀)`. One step from `x₀` uses the coefficients frozen
/// at `x₀`, so `Y_h` is exactly the frozen-coefficient process.
pub fn generator_consistency_check(
    u: &TestFunction,
    exp: &Experiment,
    h_panel: &[f64],
    n_paths: u64,
    seed: u64,
    q: &QuadratureSpec,
) -> Result<GeneratorCheck> {
    check_paths(n_paths)?;
    if h_panel.is_empty() || h_panel.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "h",
            value: h_panel.iter().copied().find(|h| !(*h > 0.0)).unwrap_or(f64::NAN),
            constraint: "need a nonempty panel of positive steps".into(),
        });
    }
    let x0 = &exp.x0;
    let field = exp.field();
    let driver = exp.driver();
    let a = apply_a(x0, field, u, x0, driver, q)?;
    let silent = silent_jumps(field.jump_dim, driver.alpha);
    let z = exp.z.as_ref().unwrap_or(&silent);
    let b = apply_b(x0, field, z, u, x0, driver.alpha)?;
    let quadrature = a.value + b;
    let quadrature_error = q.tolerance + a.tail_bound;

    let (rest, _) = u.split_constant();
    let mut panel = Vec::with_capacity(h_panel.len());
    for &h in h_panel {
        let point = match &rest {
            None => GeneratorPoint {
                h,
                value: 0.0,
                stderr: 0.0,
            },
            Some(rest) => {
                let grid = TimeGrid::new(vec![0.0, h])?;
                let u0 = rest.eval(x0);
                let key = StreamKey::new(seed, Purpose::Generator).level(h.to_bits());
                let m = monte_carlo(key, n_paths, exp.workers, |_, rng| {
                    let r = exp.scheme.simulate(x0, &grid, None, rng)?;
                    Ok(((rest.eval(&r.terminal) - u0) / h, r.jump_count))
                })?;
                check_exclusion(exp, m.excluded, m.n_paths)?;
                GeneratorPoint {
                    h,
                    value: m.mean(),
                    stderr: m.stderr(),
                }
            }
        };
        panel.push(point);
    }
    let (monte_carlo, monte_carlo_stderr) = extrapolate(&panel);
    let diff = (monte_carlo - quadrature).abs();
    let relative_error = if diff == 0.0 { 0.0 } else { diff / quadrature.abs() };
    Ok(GeneratorCheck {
        quadrature,
        quadrature_error,
        panel,
        monte_carlo,
        monte_carlo_stderr,
        relative_error,
    })
}

/// Intercept of the least-squares line through `(h, value)` with its
/// propagated standard error; the value itself for a single distinct `h`.
fn extrapolate(panel: &[GeneratorPoint]) -> (f64, f64) {
    let n = panel.len() as f64;
    let mh = panel.iter().map(|p| p.h).sum::<f64>() / n;
    let shh: f64 = panel.iter().map(|p| (p.h - mh).powi(2)).sum();
    if shh == 0.0 {
        let mean = panel.iter().map(|p| p.value).sum::<f64>() / n;
        let se = panel.iter().map(|p| p.stderr * p.stderr).sum::<f64>().sqrt() / n;
        return (mean, se);
    }
    // intercept = Σ w_i v_i with w_i = 1/n − mh (h_i − mh)/shh
    let w: Vec<f64> = panel.iter().map(|p| 1.0 / n - mh * (p.h - mh) / shh).collect();
    let value = w.iter().zip(panel).map(|(w, p)| w * p.value).sum();
    let se = w
        .iter()
        .zip(panel)
        .map(|(w, p)| (w * p.stderr).powi(2))
        .sum::<f64>()
        .sqrt();
    (value, se)
}
