//! Experiment configuration: JSON schema, defaults and validation.
//!
//! A config has the blocks `model`, `z`, `test`, `grids`, `mc` and
//! `variant`, plus optional settings for the checks and the diagnostic
//! subcommands. Loading fills every default, so the effective config echoed
//! into `meta.json` parses back to an identical value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::QuadratureSpec;
use crate::harness::{rate_law, regularity_violations, Experiment, FitModel, Functional, RateLaw, Variant};
use crate::levy::{JumpDistribution, LevyMeasureSpec};
use crate::model::{CoefficientField, CoefficientFieldSpec, TestFunction};
use crate::stable::{StableDriverSpec, WienerNormalization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub alpha: f64,
    pub d: usize,
    /// Dimension of `Z`.
    #[serde(default = "one")]
    pub m: usize,
    pub x0: Vec<f64>,
    #[serde(alias = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub wiener_normalization: WienerNormalization,
    pub coefficients: CoefficientFieldSpec,
}

/// The jump measure `π = rate · jump` with declared tail-moment order `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZBlock {
    pub rate: f64,
    pub jump: JumpDistribution,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionalKind {
    #[default]
    Terminal,
    Running,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestBlock {
    /// Terminal test function `g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<TestFunction>,
    /// Running test function `f`; also the function of the one-step check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<TestFunction>,
    /// Regularity index β of the rate table.
    pub beta: f64,
    /// Which functional the `rate` subcommand estimates.
    #[serde(default)]
    pub functional: FunctionalKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsBlock {
    /// Step counts of the uniform grids on `[0, T]`.
    pub n: Vec<usize>,
    /// Steps of the reference grid; defaults to 16 times the finest grid.
    #[serde(default)]
    pub reference_n: Option<usize>,
    /// Optional bound every grid's δ must stay below.
    #[serde(default)]
    pub max_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub n_paths: u64,
    pub master_seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    /// Largest tolerated fraction of excluded paths.
    #[serde(default)]
    pub exclusion_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksBlock {
    /// Pass requires `slope ≥ exponent − slope_tolerance`; `null` disables.
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: Option<f64>,
    #[serde(default)]
    pub fit_model: FitModel,
}

impl Default for ChecksBlock {
    fn default() -> Self {
        Self {
            slope_tolerance: default_slope_tolerance(),
            fit_model: FitModel::Power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneStepBlock {
    /// Paths per panel entry; defaults to `mc.n_paths`.
    #[serde(default)]
    pub n_paths: Option<u64>,
    #[serde(default = "default_one_step_tolerance")]
    pub slope_tolerance: f64,
}

impl Default for OneStepBlock {
    fn default() -> Self {
        Self {
            n_paths: None,
            slope_tolerance: default_one_step_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorBlock {
    /// Function the generator is applied to; defaults to `test.g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<TestFunction>,
    #[serde(default = "default_h")]
    pub h: Vec<f64>,
    #[serde(default)]
    pub n_paths: Option<u64>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_max_relative_error")]
    pub max_relative_error: f64,
}

impl Default for GeneratorBlock {
    fn default() -> Self {
        Self {
            u: None,
            h: default_h(),
            n_paths: None,
            quadrature: QuadratureSpec::default(),
            max_relative_error: default_max_relative_error(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleStableBlock {
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl Default for SampleStableBlock {
    fn default() -> Self {
        Self {
            n_samples: default_samples(),
            dt: default_dt(),
        }
    }
}

fn one() -> usize {
    1
}
fn default_slope_tolerance() -> Option<f64> {
    Some(0.15)
}
fn default_one_step_tolerance() -> f64 {
    0.15
}
fn default_h() -> Vec<f64> {
    vec![1e-3]
}
fn default_max_relative_error() -> f64 {
    0.05
}
fn default_samples() -> u64 {
    100_000
}
fn default_dt() -> f64 {
    1.0
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub z: ZBlock,
    pub test: TestBlock,
    pub grids: GridsBlock,
    pub mc: McBlock,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub checks: ChecksBlock,
    #[serde(default)]
    pub one_step: OneStepBlock,
    #[serde(default)]
    pub generator: GeneratorBlock,
    #[serde(default)]
    pub sample_stable: SampleStableBlock,
}

/// Reads and validates a config file. A `meta.json` written by a run is
/// accepted as well: its `config` member is the effective config.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    let mut config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(vec![format!("schema: {e}")]))?;
    config.fill_defaults();
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    /// Replaces derived defaults by explicit values.
    pub fn fill_defaults(&mut self) {
        if self.grids.reference_n.is_none() {
            if let Some(&finest) = self.grids.n.iter().max() {
                self.grids.reference_n = Some(16 * finest);
            }
        }
        if self.one_step.n_paths.is_none() {
            self.one_step.n_paths = Some(self.mc.n_paths);
        }
        if self.generator.n_paths.is_none() {
            self.generator.n_paths = Some(self.mc.n_paths);
        }
        if self.generator.u.is_none() {
            self.generator.u = self.test.g.clone();
        }
    }

    pub fn driver(&self) -> Result<StableDriverSpec> {
        Ok(StableDriverSpec::new(self.model.alpha, self.model.d)?.with_normalization(self.model.wiener_normalization))
    }

    pub fn levy_spec(&self) -> LevyMeasureSpec {
        LevyMeasureSpec {
            rate: self.z.rate,
            jump: self.z.jump.clone(),
            tail_moment_order: self.z.mu,
            driver_alpha: self.model.alpha,
        }
    }

    pub fn field(&self) -> Result<CoefficientField> {
        self.model.coefficients.build(self.model.d, self.model.m)
    }

    pub fn rate_law(&self) -> Result<RateLaw> {
        rate_law(self.model.alpha, self.test.beta, self.z.mu, self.variant)
    }

    /// The functional the `rate` subcommand estimates.
    pub fn functional(&self) -> Result<Functional> {
        let missing = |what: &str| Error::Config(vec![format!("test.{what} is required for the {what:?} functional")]);
        match self.test.functional {
            FunctionalKind::Terminal => Ok(Functional::Terminal(self.test.g.clone().ok_or_else(|| missing("g"))?)),
            FunctionalKind::Running => Ok(Functional::Running(self.test.f.clone().ok_or_else(|| missing("f"))?)),
        }
    }

    /// Step sizes `T/n` of the configured grids, δ descending.
    pub fn deltas(&self) -> Vec<f64> {
        let mut n = self.grids.n.clone();
        n.sort_unstable();
        n.dedup();
        n.iter().map(|&k| self.model.horizon / k as f64).collect()
    }

    pub fn reference_n(&self) -> usize {
        self.grids
            .reference_n
            .unwrap_or_else(|| 16 * self.grids.n.iter().copied().max().unwrap_or(1))
    }

    /// Compiled experiment.
    pub fn experiment(&self) -> Result<Experiment> {
        let z = self.levy_spec();
        Ok(
            Experiment::new(self.field()?, self.driver()?, Some(z), self.model.x0.clone(), self.model.horizon)?
                .with_workers(self.mc.workers)
                .with_exclusion_threshold(self.mc.exclusion_threshold),
        )
    }

    /// Checks everything that can be checked without simulating and reports
    /// all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut v: Vec<String> = Vec::new();
        let m = &self.model;
        if !(m.alpha > 0.0 && m.alpha <= 2.0) {
            v.push(format!("model.alpha = {} must lie in (0, 2]", m.alpha));
        }
        if m.d == 0 || m.m == 0 {
            v.push("model.d and model.m must be positive".into());
        }
        if m.x0.len() != m.d {
            v.push(format!("model.x0 has length {}, expected d = {}", m.x0.len(), m.d));
        }
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            v.push(format!("model.horizon = {} must be positive", m.horizon));
        }
        let field = match self.field() {
            Ok(f) => Some(f),
            Err(e) => {
                v.push(format!("model.coefficients: {e}"));
                None
            }
        };
        if let Some(f) = &field {
            if m.alpha < 1.0 && !f.drift_is_zero {
                v.push("a must be zero for α ∈ (0,1)".into());
            }
        }
        let z = self.levy_spec();
        if let Err(e) = z.validate() {
            v.push(format!("z: {e}"));
        } else if z.dim() != m.m {
            v.push(format!("z.jump has dimension {}, expected m = {}", z.dim(), m.m));
        }
        if let Err(e) = self.rate_law() {
            v.push(e.to_string());
        }
        match (self.functional(), &field) {
            (Ok(functional), Some(field)) => {
                if let Err(e) = functional.function().validate(m.d) {
                    v.push(format!("test function: {e}"));
                }
                v.extend(regularity_violations(
                    field,
                    Some(&z),
                    &functional,
                    m.alpha,
                    self.test.beta,
                    self.z.mu,
                    self.variant,
                ));
            }
            (Err(e), _) => v.push(e.to_string()),
            _ => {}
        }
        if let Some(f) = &self.test.f {
            if let Err(e) = f.validate(m.d) {
                v.push(format!("test.f: {e}"));
            }
        }
        let g = &self.grids;
        if g.n.is_empty() || g.n.contains(&0) {
            v.push("grids.n must be a nonempty list of positive step counts".into());
        } else {
            let finest = m.horizon / *g.n.iter().max().unwrap_or(&1) as f64;
            let delta_ref = m.horizon / self.reference_n() as f64;
            if !(delta_ref <= finest / 16.0) {
                v.push(format!(
                    "reference step {delta_ref} must be at most δ/16 = {} for the finest grid",
                    finest / 16.0
                ));
            }
            if let Some(bound) = g.max_delta {
                let coarsest = m.horizon / *g.n.iter().min().unwrap_or(&1) as f64;
                if !(coarsest < bound) {
                    v.push(format!("grid step {coarsest} must be below grids.max_delta = {bound}"));
                }
            }
        }
        if self.mc.n_paths < 2 || self.one_step.n_paths.is_some_and(|n| n < 2) || self.generator.n_paths.is_some_and(|n| n < 2)
        {
            v.push("path counts must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.mc.exclusion_threshold) {
            v.push(format!(
                "mc.exclusion_threshold = {} must lie in [0, 1)",
                self.mc.exclusion_threshold
            ));
        }
        if self.generator.h.is_empty() || self.generator.h.iter().any(|&h| !(h > 0.0)) {
            v.push("generator.h must be a nonempty list of positive steps".into());
        }
        if let Err(e) = self.generator.quadrature.validate() {
            v.push(format!("generator.quadrature: {e}"));
        }
        if !(self.sample_stable.dt > 0.0) || self.sample_stable.n_samples == 0 {
            v.push("sample_stable needs dt > 0 and at least one sample".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
