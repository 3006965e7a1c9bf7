use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_scale() -> f64 {
    1.0
}

fn default_terms() -> usize {
    12
}

/// One weighted isotropic Gaussian bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub weight: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

/// Scalar test functions `g`, `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `⟨coeffs, x⟩ + offset`; unbounded.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `cos(⟨freq, x⟩ + phase)`.
    PlaneWave {
        freq: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `Σ w_k exp(−|x − c_k|² / (2 s_k²))`.
    SmoothGaussianMixture {
        components: Vec<GaussianBump>,
    },
    /// `scale · |x − center|^power · ψ(|x − center| / cutoff)` with a smooth
    /// cutoff ψ equal to 1 on [0, 1] and 0 on [2, ∞).
    RadialPower {
        center: Vec<f64>,
        power: f64,
        cutoff: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// `amplitude · Σ_{n<terms} base^{−n·exponent} cos(base^n ⟨direction, x⟩)`.
    Weierstrass {
        base: f64,
        exponent: f64,
        #[serde(default = "default_terms")]
        terms: usize,
        direction: Vec<f64>,
        #[serde(default = "default_scale")]
        amplitude: f64,
    },
    /// `base(x) + offset`.
    Shifted {
        base: Box<TestFunction>,
        offset: f64,
    },
}

/// Growth of a test function at infinity.
#[derive(Debug, Clone, PartialEq)]
pub enum Growth {
    /// `sup |u| ≤ bound`.
    Bounded(f64),
    /// `u ≡ value`.
    Constant(f64),
    /// `|u(y)| ≤ sup · exp(−(dist(y, centers))² / (2 width²))`.
    GaussianDecay { sup: f64, centers: Vec<Vec<f64>>, width: f64 },
    /// `sup |u| ≤ sup` and `u = 0` outside the ball `B(center, radius)`.
    Compact { sup: f64, center: Vec<f64>, radius: f64 },
    /// `|u(x)| ≤ constant · (1 + |x|)^order`.
    Polynomial { order: f64, constant: f64 },
}

/// `e^{-1/u}` for `u > 0`, else 0.
fn flat(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// Smooth step: 1 on [0, 1], 0 on [2, ∞).
pub(crate) fn smooth_cutoff(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let a = flat(2.0 - t);
        a / (a + flat(t - 1.0))
    }
}

impl TestFunction {
    pub fn family(&self) -> &'static str {
        match self {
            TestFunction::Constant { .. } => "constant",
            TestFunction::Linear { .. } => "linear",
            TestFunction::PlaneWave { .. } => "plane-wave",
            TestFunction::SmoothGaussianMixture { .. } => "smooth-gaussian-mixture",
            TestFunction::RadialPower { .. } => "radial-power",
            TestFunction::Weierstrass { .. } => "weierstrass",
            TestFunction::Shifted { base, .. } => base.family(),
        }
    }

    /// Radial-power and Weierstrass functions declare their exponent; the
    /// others are smooth.
    pub fn declared_beta(&self) -> f64 {
        match self {
            TestFunction::RadialPower { power, .. } => *power,
            TestFunction::Weierstrass { base, exponent, .. } => {
                // amplitude decay per term is base^{-exponent}
                let decay = base.powf(-exponent);
                -decay.ln() / base.ln()
            }
            TestFunction::Shifted { base, .. } => base.declared_beta(),
            _ => f64::INFINITY,
        }
    }

    /// Input dimension, if the function fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            TestFunction::Constant { .. } => None,
            TestFunction::Linear { coeffs, .. } => Some(coeffs.len()),
            TestFunction::PlaneWave { freq, .. } => Some(freq.len()),
            TestFunction::SmoothGaussianMixture { components } => components.first().map(|c| c.center.len()),
            TestFunction::RadialPower { center, .. } => Some(center.len()),
            TestFunction::Weierstrass { direction, .. } => Some(direction.len()),
            TestFunction::Shifted { base, .. } => base.dim(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(k) = self.dim() {
            if k != dim {
                return Err(Error::Dimension(format!(
                    "test function `{}` has dimension {k}, state dimension is {dim}",
                    self.family()
                )));
            }
        }
        let bad = |name: &'static str, value: f64, constraint: &str| Error::InvalidParameter {
            name,
            value,
            constraint: constraint.into(),
        };
        match self {
            TestFunction::SmoothGaussianMixture { components } => {
                if components.is_empty() {
                    return Err(Error::Config(vec!["gaussian mixture needs at least one component".into()]));
                }
                for c in components {
                    if c.center.len() != dim {
                        return Err(Error::Dimension("mixture centres must share the state dimension".into()));
                    }
                    if !(c.width > 0.0) {
                        return Err(bad("width", c.width, "must be positive"));
                    }
                }
            }
            TestFunction::RadialPower { power, cutoff, .. } => {
                if !(*power > 0.0) {
                    return Err(bad("power", *power, "must be positive"));
                }
                if !(*cutoff > 0.0) {
                    return Err(bad("cutoff", *cutoff, "must be positive"));
                }
            }
            TestFunction::Weierstrass { base, exponent, terms, .. } => {
                if !(*base > 1.0) {
                    return Err(bad("base", *base, "must exceed 1"));
                }
                if !(*exponent > 0.0) {
                    return Err(bad("exponent", *exponent, "must be positive"));
                }
                if *terms == 0 {
                    return Err(bad("terms", 0.0, "need at least one term"));
                }
            }
            TestFunction::Shifted { base, .. } => base.validate(dim)?,
            _ => {}
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let dot = |v: &[f64]| v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let dist = |c: &[f64]| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Linear { coeffs, offset } => dot(coeffs) + offset,
            TestFunction::PlaneWave { freq, phase } => (dot(freq) + phase).cos(),
            TestFunction::SmoothGaussianMixture { components } => components
                .iter()
                .map(|c| {
                    let r = dist(&c.center);
                    c.weight * (-0.5 * r * r / (c.width * c.width)).exp()
                })
                .sum(),
            TestFunction::RadialPower {
                center,
                power,
                cutoff,
                scale,
            } => {
                let r = dist(center);
                if r == 0.0 {
                    0.0
                } else {
                    scale * r.powf(*power) * smooth_cutoff(r / cutoff)
                }
            }
            TestFunction::Weierstrass {
                base,
                exponent,
                terms,
                direction,
                amplitude,
            } => {
                let s = dot(direction);
                let (mut freq, mut weight, mut sum) = (1.0, 1.0, 0.0);
                let decay = base.powf(-exponent);
                for _ in 0..*terms {
                    sum += weight * (freq * s).cos();
                    freq *= base;
                    weight *= decay;
                }
                amplitude * sum
            }
            TestFunction::Shifted { base, offset } => base.eval(x) + offset,
        }
    }

    /// Splits off the additive constant: `u = rest + constant`, with `rest`
    /// absent when `u` is constant.
    pub fn split_constant(&self) -> (Option<TestFunction>, f64) {
        match self {
            TestFunction::Constant { value } => (None, *value),
            TestFunction::Linear { coeffs, offset } => {
                if coeffs.iter().all(|&c| c == 0.0) {
                    (None, *offset)
                } else {
                    let rest = TestFunction::Linear {
                        coeffs: coeffs.clone(),
                        offset: 0.0,
                    };
                    (Some(rest), *offset)
                }
            }
            TestFunction::Shifted { base, offset } => {
                let (rest, c) = base.split_constant();
                (rest, c + offset)
            }
            other => (Some(other.clone()), 0.0),
        }
    }

    pub fn growth(&self) -> Growth {
        match self {
            TestFunction::Constant { value } => Growth::Constant(*value),
            TestFunction::Linear { coeffs, offset } => Growth::Polynomial {
                order: if coeffs.iter().all(|&c| c == 0.0) { 0.0 } else { 1.0 },
                constant: coeffs.iter().map(|c| c * c).sum::<f64>().sqrt() + offset.abs(),
            },
            TestFunction::PlaneWave { .. } => Growth::Bounded(1.0),
            TestFunction::SmoothGaussianMixture { components } => Growth::GaussianDecay {
                sup: components.iter().map(|c| c.weight.abs()).sum(),
                centers: components.iter().map(|c| c.center.clone()).collect(),
                width: components.iter().map(|c| c.width).fold(0.0, f64::max),
            },
            TestFunction::RadialPower {
                center,
                power,
                cutoff,
                scale,
            } => Growth::Compact {
                sup: scale.abs() * (2.0 * cutoff).powf(*power),
                center: center.clone(),
                radius: 2.0 * cutoff,
            },
            TestFunction::Weierstrass {
                base,
                exponent,
                terms,
                amplitude,
                ..
            } => {
                let decay = base.powf(-exponent);
                Growth::Bounded(amplitude.abs() * (0..*terms).map(|n| decay.powi(n as i32)).sum::<f64>())
            }
            TestFunction::Shifted { base, offset } => match base.growth() {
                Growth::Constant(v) => Growth::Constant(v + offset),
                Growth::Polynomial { order, constant } => Growth::Polynomial {
                    order,
                    constant: constant + offset.abs(),
                },
                Growth::Bounded(b) | Growth::Compact { sup: b, .. } | Growth::GaussianDecay { sup: b, .. } => {
                    Growth::Bounded(b + offset.abs())
                }
            },
        }
    }

    /// `sup |u|`, or `None` when unbounded.
    pub fn sup_bound(&self) -> Option<f64> {
        match self.growth() {
            Growth::Constant(v) => Some(v.abs()),
            Growth::Bounded(b) | Growth::Compact { sup: b, .. } | Growth::GaussianDecay { sup: b, .. } => Some(b),
            Growth::Polynomial { order, constant } if order == 0.0 => Some(constant),
            Growth::Polynomial { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_exponents() {
        let w = TestFunction::Weierstrass {
            base: 3.0,
            exponent: 0.6,
            terms: 12,
            direction: vec![1.0],
            amplitude: 1.0,
        };
        assert!((w.declared_beta() - 0.6).abs() < 1e-14);
        let r = TestFunction::RadialPower {
            center: vec![0.0],
            power: 2.25,
            cutoff: 1.0,
            scale: 1.0,
        };
        assert_eq!(r.declared_beta(), 2.25);
    }

    #[test]
    fn radial_power_near_and_far() {
        let r = TestFunction::RadialPower {
            center: vec![1.0, 0.0],
            power: 1.5,
            cutoff: 2.0,
            scale: 1.0,
        };
        assert!((r.eval(&[1.5, 0.0]) - 0.5f64.powf(1.5)).abs() < 1e-15);
        assert_eq!(r.eval(&[1.0, 0.0]), 0.0);
        assert_eq!(r.eval(&[6.0, 0.0]), 0.0);
        let sup = r.sup_bound().unwrap();
        for k in 0..1000 {
            let x = -5.0 + 10.0 * k as f64 / 1000.0;
            assert!(r.eval(&[x, 0.3]).abs() <= sup);
        }
    }

    #[test]
    fn cutoff_is_monotone_and_continuous() {
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = smooth_cutoff(1.0 + k as f64 / 1000.0);
            assert!(v <= prev + 1e-15);
            assert!((v - prev).abs() < 0.01);
            prev = v;
        }
        assert_eq!(prev, 0.0);
    }

    #[test]
    fn mixture_and_sup() {
        let g = TestFunction::SmoothGaussianMixture {
            components: vec![
                GaussianBump { weight: 2.0, center: vec![0.0], width: 1.0 },
                GaussianBump { weight: -1.0, center: vec![1.0], width: 0.5 },
            ],
        };
        let expected = 2.0 - (-2.0f64).exp();
        assert!((g.eval(&[0.0]) - expected).abs() < 1e-15);
        assert_eq!(g.sup_bound(), Some(3.0));
        assert!(g.validate(1).is_ok());
        assert!(g.validate(2).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let w = TestFunction::Weierstrass {
            base: 2.0,
            exponent: 0.5,
            terms: 12,
            direction: vec![1.0, 0.0],
            amplitude: 0.5,
        };
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"family\":\"weierstrass\""));
        let back: TestFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }
}
