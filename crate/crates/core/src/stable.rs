//! Stable variates and the isotropic α-stable driver.
//!
//! One-dimensional variates follow the Chambers–Mallows–Stuck construction
//! in the `S_α(1, β, 0)` parametrisation, so the symmetric case has
//! characteristic exponent `-|ξ|^α` (variance 2 at α = 2).
//!
//! The `d`-dimensional driver `U^α` has Lévy measure exactly
//! `dy / |y|^{d+α}`, hence `E exp(i⟨ξ, U_t⟩) = exp(-t c_{d,α} |ξ|^α)` with
//! `c_{d,α} = ∫ (1 - cos y_1) |y|^{-d-α} dy`. Increments are produced by
//! subordination: `U_t = sqrt(S_t) N` with `N` standard Gaussian and `S_t` a
//! positive (α/2)-stable variable whose Laplace exponent is
//! `t c_{d,α} 2^{α/2} s^{α/2}`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_param, Error, Result};
use crate::quad::{self, sphere_area};

/// Variance convention for the α = 2 branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WienerNormalization {
    /// Standard Wiener process: covariance `t·I`.
    Standard,
    /// Continuous limit of the exponent convention: covariance `2t·I`.
    #[default]
    ExponentLimit,
}

impl WienerNormalization {
    /// Per-component variance of `U_1` at α = 2.
    pub fn variance(self) -> f64 {
        match self {
            WienerNormalization::Standard => 1.0,
            WienerNormalization::ExponentLimit => 2.0,
        }
    }
}

/// Stability index and dimension of the principal driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableDriverSpec {
    pub alpha: f64,
    pub dim: usize,
    #[serde(default)]
    pub wiener_normalization: WienerNormalization,
}

impl StableDriverSpec {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        let s = Self {
            alpha,
            dim,
            wiener_normalization: WienerNormalization::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_normalization(mut self, w: WienerNormalization) -> Self {
        self.wiener_normalization = w;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_param("alpha", self.alpha, self.alpha > 0.0 && self.alpha <= 2.0, "must lie in (0, 2]")?;
        check_param("dim", self.dim as f64, self.dim >= 1, "must be at least 1")
    }

    pub fn is_wiener(&self) -> bool {
        self.alpha == 2.0
    }
}

#[inline]
fn open_uniform(rng: &mut impl Rng) -> f64 {
    // (0, 1) exclusive on both ends
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn exp1(rng: &mut impl Rng) -> f64 {
    -open_uniform(rng).ln()
}

/// One stable variate with index `alpha` and skewness `skew`.
///
/// For `skew = 0` the characteristic exponent is `-|ξ|^alpha`. For
/// `skew = 1`, `alpha < 1` the variate is strictly positive with Laplace
/// transform `exp(-s^alpha / cos(π alpha / 2))`.
pub fn sample_stable_1d(alpha: f64, skew: f64, rng: &mut impl Rng) -> Result<f64> {
    check_param("alpha", alpha, alpha > 0.0 && alpha <= 2.0, "must lie in (0, 2]")?;
    check_param("skew", skew, (-1.0..=1.0).contains(&skew), "must lie in [-1, 1]")?;
    check_param("skew", skew, alpha < 2.0 || skew == 0.0, "must be 0 when alpha = 2")?;
    let positive = skew == 1.0 && alpha < 1.0;
    loop {
        let v = PI * (open_uniform(rng) - 0.5);
        let w = exp1(rng);
        let x = if alpha == 1.0 {
            let c = FRAC_PI_2 + skew * v;
            (c * v.tan() - skew * (FRAC_PI_2 * w * v.cos() / c).ln()) / FRAC_PI_2
        } else {
            let t = skew * (FRAC_PI_2 * alpha).tan();
            let b = t.atan() / alpha;
            let s = (1.0 + t * t).powf(0.5 / alpha);
            let ab = alpha * (v + b);
            s * ab.sin() / v.cos().powf(1.0 / alpha)
                * ((v - ab).cos() / w).powf((1.0 - alpha) / alpha)
        };
        if !positive || x > 0.0 {
            return Ok(x);
        }
    }
}

/// Positive stable variate with index `rho ∈ (0, 1)` and Laplace transform
/// `exp(-s^rho)` (Kanter's representation).
pub fn sample_positive_stable(rho: f64, rng: &mut impl Rng) -> Result<f64> {
    check_param("rho", rho, rho > 0.0 && rho < 1.0, "must lie in (0, 1)")?;
    loop {
        let x = positive_stable_sqrt(rho, rng);
        let s = x * x;
        if s > 0.0 && s.is_finite() {
            return Ok(s);
        }
    }
}

// Square root of a Kanter variate, computed in log space.
#[inline]
fn positive_stable_sqrt(rho: f64, rng: &mut impl Rng) -> f64 {
    let u = PI * open_uniform(rng);
    let w = exp1(rng);
    let k = (1.0 - rho) / rho;
    let log_s = (rho * u).sin().ln() - u.sin().ln() / rho + k * (((1.0 - rho) * u).sin().ln() - w.ln());
    (0.5 * log_s).exp()
}

/// The constant `c_{d,α}` with its quadrature error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharExponentConstant {
    pub value: f64,
    pub d: usize,
    pub alpha: f64,
    pub quad_error: f64,
}

const CHAR_CONST_TOL: f64 = 1e-11;

fn char_cache() -> &'static Mutex<HashMap<(usize, u64), CharExponentConstant>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), CharExponentConstant>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `c_{d,α} = ∫_{R^d} (1 - cos y_1) |y|^{-d-α} dy` for `α ∈ (0, 2)`.
///
/// Polar coordinates split the integral into the radial factor
/// `K_α = ∫_0^∞ (1 - cos t) t^{-1-α} dt` and the angular factor
/// `∫_{S^{d-1}} |θ_1|^α dσ`. Cached per `(d, α)`.
pub fn char_exponent_constant(d: usize, alpha: f64) -> Result<CharExponentConstant> {
    check_param("alpha", alpha, alpha > 0.0 && alpha < 2.0, "must lie in (0, 2)")?;
    check_param("d", d as f64, d >= 1, "must be at least 1")?;
    let key = (d, alpha.to_bits());
    if let Some(c) = char_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(*c);
    }
    let radial = radial_factor(alpha)?;
    let angular = angular_factor(d, alpha)?;
    let c = CharExponentConstant {
        value: radial.value * angular.value,
        d,
        alpha,
        quad_error: radial.error * angular.value + radial.value * angular.error,
    };
    if c.quad_error > CHAR_CONST_TOL * c.value.max(1.0) {
        return Err(Error::Quadrature {
            context: format!("c_(d={d}, alpha={alpha})"),
            tolerance: CHAR_CONST_TOL,
            achieved: c.quad_error,
        });
    }
    char_cache().lock().expect("cache poisoned").insert(key, c);
    Ok(c)
}

/// `K_α = ∫_0^∞ (1 - cos t) t^{-1-α} dt`.
///
/// `[0, 1]`: termwise integration of the cosine series (exact up to the
/// truncation bound). `[1, R]`: adaptive Gauss–Kronrod. `[R, ∞)`: the
/// non-oscillatory part in closed form, the cosine part along the
/// vertical ray `t = R + iy`, where it decays like `e^{-y}`.
pub(crate) fn radial_factor(alpha: f64) -> Result<quad::Estimate> {
    let mut series = 0.0;
    let mut fact = 1.0;
    let mut bound = 0.0;
    for k in 1..40 {
        let n = 2 * k;
        fact *= ((n - 1) * n) as f64;
        let term = 1.0 / (fact * (n as f64 - alpha));
        if term < 1e-18 {
            bound = term;
            break;
        }
        series += if k % 2 == 1 { term } else { -term };
    }
    let r = 8.0 * PI;
    let mid = quad::integrate(
        |t| (1.0 - t.cos()) * t.powf(-1.0 - alpha),
        1.0,
        r,
        1e-13,
        2000,
    )?;
    let s = 1.0 + alpha;
    let ray = |y: f64| (-y).exp() * Complex64::new(r, y).powf(-s);
    let re = quad::integrate_to_infinity(|y| ray(y).re, 0.0, 1e-14, 2000)?;
    let im = quad::integrate_to_infinity(|y| ray(y).im, 0.0, 1e-14, 2000)?;
    // ∫_R^∞ cos t t^{-s} dt = Re[i e^{iR} (re + i im)]
    let cos_tail = (Complex64::i() * Complex64::new(0.0, r).exp() * Complex64::new(re.value, im.value)).re;
    let value = series + mid.value + r.powf(-alpha) / alpha - cos_tail;
    Ok(quad::Estimate {
        value,
        error: bound + mid.error + re.error + im.error,
    })
}

/// `∫_{S^{d-1}} |θ_1|^α dσ(θ)`.
pub(crate) fn angular_factor(d: usize, alpha: f64) -> Result<quad::Estimate> {
    if d == 1 {
        return Ok(quad::Estimate { value: 2.0, error: 0.0 });
    }
    let lower = sphere_area(d - 1);
    let k = (d - 2) as i32;
    // φ measured from the equator of θ_1: ∫_0^{π/2} sin^α ψ cos^{d-2} ψ dψ
    let e = quad::integrate(|psi| psi.sin().powf(alpha) * psi.cos().powi(k), 0.0, FRAC_PI_2, 1e-14, 2000)?;
    Ok(quad::Estimate {
        value: 2.0 * lower * e.value,
        error: 2.0 * lower * e.error,
    })
}

/// Precomputed sampler for increments of `U^α`.
#[derive(Debug, Clone)]
pub struct IsotropicSampler {
    spec: StableDriverSpec,
    rho: f64,
    // U_dt = dt^{1/α} · unit_scale · sqrt(S_0) · N
    unit_scale: f64,
}

impl IsotropicSampler {
    pub fn new(spec: StableDriverSpec) -> Result<Self> {
        spec.validate()?;
        let alpha = spec.alpha;
        if spec.is_wiener() {
            return Ok(Self {
                spec,
                rho: 1.0,
                unit_scale: spec.wiener_normalization.variance().sqrt(),
            });
        }
        let c = char_exponent_constant(spec.dim, alpha)?;
        let k = c.value * 2f64.powf(alpha / 2.0);
        Ok(Self {
            spec,
            rho: alpha / 2.0,
            unit_scale: k.powf(1.0 / alpha),
        })
    }

    pub fn spec(&self) -> &StableDriverSpec {
        &self.spec
    }

    /// Scale factor `dt^{1/α}` times the unit scale; hoist out of loops on
    /// uniform grids.
    pub fn step_scale(&self, dt: f64) -> f64 {
        if self.spec.is_wiener() {
            dt.sqrt() * self.unit_scale
        } else {
            dt.powf(1.0 / self.spec.alpha) * self.unit_scale
        }
    }

    /// Writes one increment with precomputed `step_scale` into `out`.
    #[inline]
    pub fn fill_scaled(&self, scale: f64, rng: &mut impl Rng, out: &mut [f64]) {
        let s = if self.spec.is_wiener() {
            scale
        } else {
            scale * positive_stable_sqrt(self.rho, rng)
        };
        for o in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o = s * z;
        }
    }

    pub fn increment(&self, dt: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
        check_param("dt", dt, dt > 0.0, "must be positive")?;
        let mut out = vec![0.0; self.spec.dim];
        self.fill_scaled(self.step_scale(dt), rng, &mut out);
        Ok(out)
    }
}

/// One increment of `U^α` over a step of length `dt`.
pub fn sample_isotropic_increment(spec: &StableDriverSpec, dt: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    check_param("dt", dt, dt > 0.0, "must be positive")?;
    IsotropicSampler::new(*spec)?.increment(dt, rng)
}
