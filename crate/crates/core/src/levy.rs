//! The subordinated driver `Z`: a finite-activity compound Poisson process
//! whose small jumps are compensated when the principal index α lies in
//! `(1, 2]`, and the moment conditions on its Lévy measure π.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_param, Error, Result};
use crate::quad::{self, SphereRule};

/// A weighted point of a discrete distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub prob: f64,
}

/// Law of a single jump (π normalised to a probability measure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpDistribution {
    Atoms {
        atoms: Vec<Atom>,
    },
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Radius with density `∝ r^{-1-tail_index}` on `[lower, upper]`; the
    /// direction is uniform on the sphere unless `directions` is given.
    BoundedPareto {
        dim: usize,
        tail_index: f64,
        lower: f64,
        upper: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        directions: Option<Vec<Atom>>,
    },
    /// Same radial law on `[lower, ∞)`: moments of order `>= tail_index`
    /// diverge.
    Pareto {
        dim: usize,
        tail_index: f64,
        lower: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        directions: Option<Vec<Atom>>,
    },
}

impl JumpDistribution {
    pub fn dim(&self) -> usize {
        match self {
            JumpDistribution::Atoms { atoms } => atoms.first().map_or(0, |a| a.point.len()),
            JumpDistribution::Gaussian { mean, .. } => mean.len(),
            JumpDistribution::BoundedPareto { dim, .. } | JumpDistribution::Pareto { dim, .. } => *dim,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.dim();
        if m == 0 {
            return Err(Error::Dimension("jump dimension must be positive".into()));
        }
        match self {
            JumpDistribution::Atoms { atoms } => {
                if atoms.iter().any(|a| a.point.len() != m) {
                    return Err(Error::Dimension("atoms of different dimensions".into()));
                }
                check_probabilities(atoms, "atom")?;
            }
            JumpDistribution::Gaussian { mean, covariance } => {
                if covariance.len() != m || covariance.iter().any(|r| r.len() != m) {
                    return Err(Error::Dimension(format!("covariance must be {m}x{m}")));
                }
                let c = to_matrix(covariance);
                if (&c - c.transpose()).abs().max() > 1e-12 * (1.0 + c.abs().max()) {
                    return Err(Error::InvalidParameter {
                        name: "covariance",
                        value: f64::NAN,
                        constraint: "must be symmetric".into(),
                    });
                }
                let min_eig = c.symmetric_eigenvalues().min();
                check_param("covariance", min_eig, min_eig >= -1e-12, "must be positive semidefinite")?;
                let _ = mean;
            }
            JumpDistribution::BoundedPareto {
                tail_index,
                lower,
                upper,
                directions,
                ..
            } => {
                check_param("tail_index", *tail_index, *tail_index > 0.0, "must be positive")?;
                check_param("lower", *lower, *lower > 0.0, "must be positive")?;
                check_param("upper", *upper, upper.is_finite() && upper > lower, "must be finite and exceed lower")?;
                check_directions(directions.as_deref(), m)?;
            }
            JumpDistribution::Pareto {
                tail_index,
                lower,
                directions,
                ..
            } => {
                check_param("tail_index", *tail_index, *tail_index > 0.0, "must be positive")?;
                check_param("lower", *lower, *lower > 0.0, "must be positive")?;
                check_directions(directions.as_deref(), m)?;
            }
        }
        Ok(())
    }
}

fn check_probabilities(atoms: &[Atom], what: &str) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidParameter {
            name: "atoms",
            value: 0.0,
            constraint: format!("{what} list must be non-empty"),
        });
    }
    if let Some(a) = atoms.iter().find(|a| !(a.prob >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "prob",
            value: a.prob,
            constraint: format!("{what} probabilities must be nonnegative"),
        });
    }
    let total: f64 = atoms.iter().map(|a| a.prob).sum();
    check_param("prob", total, (total - 1.0).abs() < 1e-9, &format!("{what} probabilities must sum to 1"))
}

fn check_directions(dirs: Option<&[Atom]>, m: usize) -> Result<()> {
    if let Some(dirs) = dirs {
        if dirs.iter().any(|a| a.point.len() != m) {
            return Err(Error::Dimension("direction of wrong dimension".into()));
        }
        if let Some(a) = dirs.iter().find(|a| (norm(&a.point) - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidParameter {
                name: "directions",
                value: norm(&a.point),
                constraint: "directions must be unit vectors".into(),
            });
        }
        check_probabilities(dirs, "direction")?;
    }
    Ok(())
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let m = rows.len();
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Finite-activity Lévy measure `π = rate · jump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    pub rate: f64,
    pub jump: JumpDistribution,
    /// Declared order μ of the finite tail moment.
    pub tail_moment_order: f64,
    /// Principal index α; selects the compensation regime.
    pub driver_alpha: f64,
}

impl LevyMeasureSpec {
    pub fn dim(&self) -> usize {
        self.jump.dim()
    }

    /// Whether jumps in the unit ball are compensated (α ∈ (1, 2]).
    pub fn compensated(&self) -> bool {
        self.driver_alpha > 1.0 && self.driver_alpha <= 2.0
    }

    /// Checks parameters and both moment conditions.
    pub fn validate(&self) -> Result<()> {
        check_param("rate", self.rate, self.rate >= 0.0 && self.rate.is_finite(), "must be finite and nonnegative")?;
        check_param(
            "driver_alpha",
            self.driver_alpha,
            self.driver_alpha > 0.0 && self.driver_alpha <= 2.0,
            "must lie in (0, 2]",
        )?;
        check_param("tail_moment_order", self.tail_moment_order, self.tail_moment_order > 0.0, "must be positive")?;
        self.jump.validate()?;
        moment_report(self, self.driver_alpha, self.tail_moment_order)?;
        Ok(())
    }
}

/// `∫_{|y|≤1} |y|^α π(dy)` and `∫_{|y|>1} |y|^μ π(dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub small_moment: f64,
    pub tail_moment: f64,
    pub quad_error: f64,
}

const MOMENT_TOL: f64 = 1e-9;

/// Computes the two moments of π, in closed form for atoms and by
/// quadrature otherwise.
pub fn moment_report(spec: &LevyMeasureSpec, alpha: f64, mu: f64) -> Result<MomentReport> {
    check_param("alpha", alpha, alpha > 0.0 && alpha <= 2.0, "must lie in (0, 2]")?;
    check_param("mu", mu, mu > 0.0, "must be positive")?;
    let lam = spec.rate;
    let (small, tail, err) = match &spec.jump {
        JumpDistribution::Atoms { atoms } => {
            let mut small = 0.0;
            let mut tail = 0.0;
            for a in atoms {
                let r = norm(&a.point);
                if r == 0.0 {
                    continue;
                } else if r <= 1.0 {
                    small += a.prob * r.powf(alpha);
                } else {
                    tail += a.prob * r.powf(mu);
                }
            }
            (small, tail, 0.0)
        }
        JumpDistribution::BoundedPareto {
            tail_index,
            lower,
            upper,
            ..
        } => {
            let (s, t) = pareto_moments(*tail_index, *lower, Some(*upper), alpha, mu)?;
            (s.value, t.value, s.error + t.error)
        }
        JumpDistribution::Pareto {
            tail_index, lower, ..
        } => {
            if mu >= *tail_index {
                return Err(Error::Divergent(format!(
                    "tail moment ∫_(|y|>1) |y|^{mu} π(dy) diverges: mu >= tail index {tail_index}"
                )));
            }
            let (s, t) = pareto_moments(*tail_index, *lower, None, alpha, mu)?;
            (s.value, t.value, s.error + t.error)
        }
        JumpDistribution::Gaussian { mean, covariance } => {
            let small = gaussian_radial(mean, covariance, |r| r.powf(alpha), true)?;
            let tail = gaussian_radial(mean, covariance, |r| r.powf(mu), false)?;
            (small.value, tail.value, small.error + tail.error)
        }
    };
    if err > MOMENT_TOL * (1.0 + small + tail) {
        return Err(Error::Quadrature {
            context: "moments of the jump law".into(),
            tolerance: MOMENT_TOL,
            achieved: err,
        });
    }
    Ok(MomentReport {
        small_moment: lam * small,
        tail_moment: lam * tail,
        quad_error: lam * err,
    })
}

fn pareto_norm(rho: f64, lower: f64, upper: Option<f64>) -> f64 {
    lower.powf(-rho) - upper.map_or(0.0, |u| u.powf(-rho))
}

// Small-ball and tail moments of the radial Pareto law, in closed form:
// ∫_a^b p r^{p-1-ρ} dr with p the moment order.
fn pareto_moments(
    rho: f64,
    lower: f64,
    upper: Option<f64>,
    alpha: f64,
    mu: f64,
) -> Result<(quad::Estimate, quad::Estimate)> {
    let c = rho / pareto_norm(rho, lower, upper);
    let power_integral = |p: f64, a: f64, b: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        let e = p - rho;
        if e.abs() < 1e-14 {
            (b / a).ln()
        } else if b.is_infinite() {
            // e < 0 guaranteed by the caller
            -a.powf(e) / e
        } else {
            (b.powf(e) - a.powf(e)) / e
        }
    };
    let hi = upper.unwrap_or(f64::INFINITY);
    let small = c * power_integral(alpha, lower, hi.min(1.0));
    let tail = c * power_integral(mu, lower.max(1.0), hi);
    let exact = |v: f64| quad::Estimate { value: v, error: 0.0 };
    Ok((exact(small), exact(tail)))
}

// ∫ h(|y|) N(mean, cov)(dy) over the unit ball (`inside`) or its complement,
// in polar coordinates so the indicator falls on a panel boundary.
fn gaussian_radial(
    mean: &[f64],
    cov: &[Vec<f64>],
    h: impl Fn(f64) -> f64 + Copy,
    inside: bool,
) -> Result<quad::Estimate> {
    let dens = GaussianDensity::new(mean, cov)?;
    let m = mean.len();
    let eval = |n: usize| -> Result<quad::Estimate> {
        let rule = SphereRule::full(m, n)?;
        let mut total = 0.0;
        let mut err = 0.0;
        for (theta, &w) in rule.nodes.iter().zip(&rule.weights) {
            let f = |r: f64| {
                let y: Vec<f64> = theta.iter().map(|t| r * t).collect();
                h(r) * r.powi(m as i32 - 1) * dens.eval(&y)
            };
            let e = if inside {
                quad::integrate(f, 0.0, 1.0, 1e-13, 500)?
            } else {
                quad::integrate_to_infinity(f, 1.0, 1e-13, 1000)?
            };
            total += w * e.value;
            err += w * e.error;
        }
        Ok(quad::Estimate { value: total, error: err })
    };
    let coarse = eval(48)?;
    let fine = eval(96)?;
    Ok(quad::Estimate {
        value: fine.value,
        error: fine.error + (fine.value - coarse.value).abs(),
    })
}

struct GaussianDensity {
    mean: DVector<f64>,
    prec: DMatrix<f64>,
    norm: f64,
}

impl GaussianDensity {
    fn new(mean: &[f64], cov: &[Vec<f64>]) -> Result<Self> {
        let m = mean.len();
        let c = to_matrix(cov);
        let det = c.determinant();
        let prec = c.try_inverse().filter(|_| det > 0.0).ok_or_else(|| {
            Error::Hypothesis("gaussian jump law needs a positive definite covariance for quadrature".into())
        })?;
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            prec,
            norm: ((2.0 * std::f64::consts::PI).powi(m as i32) * det).sqrt().recip(),
        })
    }

    fn eval(&self, y: &[f64]) -> f64 {
        let d = DVector::from_column_slice(y) - &self.mean;
        self.norm * (-0.5 * (d.transpose() * &self.prec * &d)[(0, 0)]).exp()
    }
}

/// `∫_{|y|≤1} y π(dy)` normalised by the rate (i.e. under the jump law).
pub(crate) fn small_jump_mean(jump: &JumpDistribution) -> Result<Vec<f64>> {
    let m = jump.dim();
    match jump {
        JumpDistribution::Atoms { atoms } => {
            let mut c = vec![0.0; m];
            for a in atoms.iter().filter(|a| norm(&a.point) <= 1.0) {
                for (ci, yi) in c.iter_mut().zip(&a.point) {
                    *ci += a.prob * yi;
                }
            }
            Ok(c)
        }
        JumpDistribution::BoundedPareto {
            tail_index,
            lower,
            upper,
            directions,
            ..
        } => pareto_small_mean(m, *tail_index, *lower, Some(*upper), directions.as_deref()),
        JumpDistribution::Pareto {
            tail_index,
            lower,
            directions,
            ..
        } => pareto_small_mean(m, *tail_index, *lower, None, directions.as_deref()),
        JumpDistribution::Gaussian { mean, covariance } => {
            let dens = GaussianDensity::new(mean, covariance)?;
            let rule = SphereRule::full(m, 96)?;
            let mut c = vec![0.0; m];
            for (theta, &w) in rule.nodes.iter().zip(&rule.weights) {
                let e = quad::integrate(
                    |r| {
                        let y: Vec<f64> = theta.iter().map(|t| r * t).collect();
                        r.powi(m as i32) * dens.eval(&y)
                    },
                    0.0,
                    1.0,
                    1e-13,
                    500,
                )?;
                for (ci, ti) in c.iter_mut().zip(theta) {
                    *ci += w * ti * e.value;
                }
            }
            Ok(c)
        }
    }
}

fn pareto_small_mean(
    m: usize,
    rho: f64,
    lower: f64,
    upper: Option<f64>,
    directions: Option<&[Atom]>,
) -> Result<Vec<f64>> {
    let Some(dirs) = directions else {
        return Ok(vec![0.0; m]);
    };
    if lower >= 1.0 {
        return Ok(vec![0.0; m]);
    }
    let c = rho / pareto_norm(rho, lower, upper);
    let hi = upper.unwrap_or(f64::INFINITY).min(1.0);
    // E[r 1{r <= 1}]
    let er = if (1.0 - rho).abs() < 1e-14 {
        c * (hi / lower).ln()
    } else {
        c * (hi.powf(1.0 - rho) - lower.powf(1.0 - rho)) / (1.0 - rho)
    };
    let mut out = vec![0.0; m];
    for a in dirs {
        for (o, u) in out.iter_mut().zip(&a.point) {
            *o += a.prob * u * er;
        }
    }
    Ok(out)
}

enum JumpDraw {
    Atoms { cumulative: Vec<f64>, points: Vec<Vec<f64>> },
    Gaussian { mean: Vec<f64>, chol: DMatrix<f64> },
    Radial {
        rho: f64,
        lower_pow: f64,
        span: f64,
        directions: Option<(Vec<f64>, Vec<Vec<f64>>)>,
    },
}

/// Sampler for increments of `Z` with the compensator precomputed.
pub struct LevySampler {
    spec: LevyMeasureSpec,
    compensator: Vec<f64>,
    draw: JumpDraw,
}

impl std::fmt::Debug for LevySampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevySampler")
            .field("spec", &self.spec)
            .field("compensator", &self.compensator)
            .finish()
    }
}

impl LevySampler {
    pub fn new(spec: &LevyMeasureSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.dim();
        let compensator = if spec.compensated() && spec.rate > 0.0 {
            small_jump_mean(&spec.jump)?.into_iter().map(|c| c * spec.rate).collect()
        } else {
            vec![0.0; m]
        };
        let draw = match &spec.jump {
            JumpDistribution::Atoms { atoms } => {
                let mut acc = 0.0;
                let cumulative = atoms
                    .iter()
                    .map(|a| {
                        acc += a.prob;
                        acc
                    })
                    .collect();
                JumpDraw::Atoms {
                    cumulative,
                    points: atoms.iter().map(|a| a.point.clone()).collect(),
                }
            }
            JumpDistribution::Gaussian { mean, covariance } => {
                let c = to_matrix(covariance);
                // PSD square root through the eigendecomposition tolerates singular covariance
                let eig = c.symmetric_eigen();
                let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                let chol = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
                JumpDraw::Gaussian {
                    mean: mean.clone(),
                    chol,
                }
            }
            JumpDistribution::BoundedPareto {
                tail_index,
                lower,
                upper,
                directions,
                ..
            } => radial_draw(*tail_index, *lower, Some(*upper), directions.as_deref()),
            JumpDistribution::Pareto {
                tail_index,
                lower,
                directions,
                ..
            } => radial_draw(*tail_index, *lower, None, directions.as_deref()),
        };
        Ok(Self {
            spec: spec.clone(),
            compensator,
            draw,
        })
    }

    pub fn spec(&self) -> &LevyMeasureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `C = rate · ∫_{|y|≤1} y jump(dy)` in the compensated regime, else 0.
    pub fn compensator(&self) -> &[f64] {
        &self.compensator
    }

    /// Precomputes what depends on the step length.
    pub fn step(&self, dt: f64) -> LevyStep<'_> {
        let mean = self.spec.rate * dt;
        LevyStep {
            sampler: self,
            dt,
            mean,
            p0: (-mean).exp(),
            poisson: if mean > 30.0 { Poisson::new(mean).ok() } else { None },
        }
    }

    fn draw_jump(&self, rng: &mut impl Rng, acc: &mut [f64]) {
        match &self.draw {
            JumpDraw::Atoms { cumulative, points } => {
                let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                let k = cumulative.partition_point(|&c| c <= u).min(points.len() - 1);
                for (a, y) in acc.iter_mut().zip(&points[k]) {
                    *a += y;
                }
            }
            JumpDraw::Gaussian { mean, chol } => {
                let m = mean.len();
                let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..m {
                    let mut v = mean[i];
                    for (j, zj) in z.iter().enumerate() {
                        v += chol[(i, j)] * zj;
                    }
                    acc[i] += v;
                }
            }
            JumpDraw::Radial {
                rho,
                lower_pow,
                span,
                directions,
            } => {
                // inverse CDF of the truncated Pareto radius
                let u: f64 = rng.random();
                let r = (lower_pow - u * span).powf(-1.0 / rho);
                match directions {
                    Some((cum, dirs)) => {
                        let v: f64 = rng.random::<f64>() * cum[cum.len() - 1];
                        let k = cum.partition_point(|&c| c <= v).min(dirs.len() - 1);
                        for (a, d) in acc.iter_mut().zip(&dirs[k]) {
                            *a += r * d;
                        }
                    }
                    None => {
                        let m = acc.len();
                        let mut dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                        let n = norm(&dir);
                        for d in dir.iter_mut() {
                            *d /= n;
                        }
                        for (a, d) in acc.iter_mut().zip(&dir) {
                            *a += r * d;
                        }
                    }
                }
            }
        }
    }
}

fn radial_draw(rho: f64, lower: f64, upper: Option<f64>, dirs: Option<&[Atom]>) -> JumpDraw {
    let lower_pow = lower.powf(-rho);
    let span = pareto_norm(rho, lower, upper);
    let directions = dirs.map(|d| {
        let mut acc = 0.0;
        let cum = d
            .iter()
            .map(|a| {
                acc += a.prob;
                acc
            })
            .collect();
        (cum, d.iter().map(|a| a.point.clone()).collect())
    });
    JumpDraw::Radial {
        rho,
        lower_pow,
        span,
        directions,
    }
}

/// Step-length specific view of a [`LevySampler`].
pub struct LevyStep<'a> {
    sampler: &'a LevySampler,
    dt: f64,
    mean: f64,
    p0: f64,
    poisson: Option<Poisson<f64>>,
}

impl LevyStep<'_> {
    fn jump_count(&self, rng: &mut impl Rng) -> u64 {
        if self.mean == 0.0 {
            return 0;
        }
        if let Some(p) = &self.poisson {
            return p.sample(rng) as u64;
        }
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = self.p0;
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= self.mean / k as f64;
            cdf += p;
        }
        k
    }

    /// Writes `ΔZ = J - dt·C` into `out`; returns the number of jumps.
    #[inline]
    pub fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) -> u64 {
        for (o, c) in out.iter_mut().zip(&self.sampler.compensator) {
            *o = -self.dt * c;
        }
        let n = self.jump_count(rng);
        for _ in 0..n {
            self.sampler.draw_jump(rng, out);
        }
        n
    }
}

/// One increment of `Z` over a step of length `dt`.
pub fn levy_increment(spec: &LevyMeasureSpec, dt: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    check_param("dt", dt, dt > 0.0, "must be positive")?;
    let s = LevySampler::new(spec)?;
    let mut out = vec![0.0; s.dim()];
    s.step(dt).sample(rng, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use crate::stats::Moments;

    fn atoms(list: &[(f64, f64)]) -> JumpDistribution {
        JumpDistribution::Atoms {
            atoms: list
                .iter()
                .map(|&(y, p)| Atom {
                    point: vec![y],
                    prob: p,
                })
                .collect(),
        }
    }

    fn spec(rate: f64, jump: JumpDistribution, mu: f64, alpha: f64) -> LevyMeasureSpec {
        LevyMeasureSpec {
            rate,
            jump,
            tail_moment_order: mu,
            driver_alpha: alpha,
        }
    }

    fn stream(i: u64) -> crate::rng::Stream {
        StreamKey::new(99, Purpose::Diagnostic).stream(i)
    }

    #[test]
    fn zero_rate_gives_zero() {
        let s = spec(0.0, atoms(&[(0.3, 1.0)]), 1.0, 0.5);
        let mut r = stream(0);
        for _ in 0..100 {
            assert_eq!(levy_increment(&s, 1.0, &mut r).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn symmetric_atoms_moments() {
        let s = spec(3.0, atoms(&[(1.0, 0.5), (-1.0, 0.5)]), 1.0, 0.5);
        let sampler = LevySampler::new(&s).unwrap();
        let step = sampler.step(1.0);
        let mut r = stream(1);
        let mut m = Moments::default();
        let mut out = [0.0];
        for _ in 0..100_000 {
            step.sample(&mut r, &mut out);
            m.push(out[0]);
        }
        assert!(m.mean.abs() < 4.0 * m.stderr());
        // Var of the sample variance needs the fourth moment: E X^4 = λ + 3λ^2 = 30
        let se_var = ((30.0 - 9.0) / 100_000.0f64).sqrt();
        assert!((m.variance() - 3.0).abs() < 4.0 * se_var, "{}", m.variance());
    }

    #[test]
    fn small_atom_fully_compensated() {
        let s = spec(2.0, atoms(&[(0.5, 1.0)]), 1.0, 1.5);
        let sampler = LevySampler::new(&s).unwrap();
        assert_eq!(sampler.compensator(), &[1.0]);
        let step = sampler.step(1.0);
        let mut r = stream(2);
        let mut m = Moments::default();
        let mut out = [0.0];
        for _ in 0..100_000 {
            step.sample(&mut r, &mut out);
            m.push(out[0]);
        }
        assert!(m.mean.abs() < 4.0 * m.stderr());
    }

    #[test]
    fn alpha_one_is_not_compensated() {
        let s = spec(2.0, atoms(&[(0.5, 1.0)]), 1.0, 1.0);
        assert_eq!(LevySampler::new(&s).unwrap().compensator(), &[0.0]);
    }

    #[test]
    fn moment_report_atoms() {
        let r = moment_report(&spec(1.0, atoms(&[(2.0, 1.0)]), 1.0, 1.0), 1.0, 1.0).unwrap();
        assert_eq!(r.small_moment, 0.0);
        assert_eq!(r.tail_moment, 2.0);
        let r = moment_report(&spec(4.0, atoms(&[(0.5, 1.0)]), 2.0, 1.5), 1.5, 2.0).unwrap();
        assert!((r.small_moment - 4.0 * 0.5f64.powf(1.5)).abs() < 1e-14);
        assert!((r.small_moment - 1.41421).abs() < 1e-5);
        assert_eq!(r.tail_moment, 0.0);
    }

    #[test]
    fn bounded_pareto_inside_ball_has_no_tail() {
        let jump = JumpDistribution::BoundedPareto {
            dim: 2,
            tail_index: 0.8,
            lower: 0.1,
            upper: 0.9,
            directions: None,
        };
        for mu in [0.5, 2.0, 7.0] {
            let r = moment_report(&spec(1.0, jump.clone(), mu, 1.5), 1.5, mu).unwrap();
            assert_eq!(r.tail_moment, 0.0);
            // closed form: ρ/(a^-ρ - b^-ρ) · (b^{α-ρ} - a^{α-ρ})/(α-ρ)
            let (rho, a, b, al): (f64, f64, f64, f64) = (0.8, 0.1, 0.9, 1.5);
            let exact = rho / (a.powf(-rho) - b.powf(-rho)) * (b.powf(al - rho) - a.powf(al - rho)) / (al - rho);
            assert!((r.small_moment - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn pareto_tail_divergence_names_integral() {
        let jump = JumpDistribution::Pareto {
            dim: 1,
            tail_index: 0.9,
            lower: 2.0,
            directions: None,
        };
        let s = spec(1.0, jump, 1.2, 1.5);
        let err = moment_report(&s, 1.5, 1.2).unwrap_err();
        assert!(matches!(err, Error::Divergent(ref m) if m.contains("|y|>1")), "{err}");
        assert!(s.validate().is_err());
        assert!(moment_report(&s, 1.5, 0.8).is_ok());
    }

    #[test]
    fn gaussian_moments_by_quadrature() {
        // 1-D N(0, 1): E|y|^2 1{|y|>1} = 2(φ(1) + (1 - Φ(1)))
        let jump = JumpDistribution::Gaussian {
            mean: vec![0.0],
            covariance: vec![vec![1.0]],
        };
        let r = moment_report(&spec(1.0, jump, 2.0, 2.0), 2.0, 2.0).unwrap();
        let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tail_cdf = 0.5 * statrs::function::erf::erfc(1.0 / 2f64.sqrt());
        assert!((r.tail_moment - 2.0 * (phi1 + tail_cdf)).abs() < 1e-9);
        assert!((r.small_moment + r.tail_moment - 1.0).abs() < 1e-9);
    }

    #[test]
    fn validation_errors() {
        assert!(spec(1.0, atoms(&[(1.0, 0.4)]), 1.0, 1.0).validate().is_err());
        assert!(spec(-1.0, atoms(&[(1.0, 1.0)]), 1.0, 1.0).validate().is_err());
        let bad_cov = JumpDistribution::Gaussian {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert!(spec(1.0, bad_cov, 1.0, 1.0).validate().is_err());
        let bad_pareto = JumpDistribution::BoundedPareto {
            dim: 1,
            tail_index: 1.0,
            lower: 2.0,
            upper: 1.0,
            directions: None,
        };
        assert!(spec(1.0, bad_pareto, 1.0, 1.0).validate().is_err());
        let s = spec(1.0, atoms(&[(1.0, 1.0)]), 1.0, 1.0);
        assert!(levy_increment(&s, 0.0, &mut stream(3)).is_err());
    }

    #[test]
    fn atom_moment_homogeneity() {
        // scaling atoms outside the ball by c multiplies the tail moment by c^μ
        let mu = 1.7;
        let base = moment_report(&spec(2.0, atoms(&[(1.5, 0.3), (-3.0, 0.7)]), mu, 1.0), 1.0, mu).unwrap();
        let c: f64 = 2.5;
        let scaled = moment_report(&spec(2.0, atoms(&[(1.5 * c, 0.3), (-3.0 * c, 0.7)]), mu, 1.0), 1.0, mu).unwrap();
        assert!((scaled.tail_moment - c.powf(mu) * base.tail_moment).abs() < 1e-12 * scaled.tail_moment);
    }
}
