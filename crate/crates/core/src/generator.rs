//! The operators `A_z`, `B_z`, the fractional Laplacian `∂^α` and the
//! mollifier `f^ε`, realised by quadrature.
//!
//! Jump integrals are computed in symmetrised form
//! `∫ [u(x+y) + u(x−y) − 2u(x)]/2 · m(y) |y|^{-d-α} dy`, which equals the
//! compensated definition whenever the weight `m` is even.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{norm, small_jump_mean, JumpDistribution, LevyMeasureSpec};
use crate::model::{CoefficientField, Growth, TestFunction};
use crate::quad::{self, GaussHermite, GaussLegendre, SphereRule};
use crate::stable::StableDriverSpec;
use crate::stats::fit_line;

/// A scalar function with declared growth, as consumed by the operators.
pub trait ScalarFn: Sync {
    fn eval(&self, x: &[f64]) -> f64;
    fn growth(&self) -> Growth;
}

impl ScalarFn for TestFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        TestFunction::eval(self, x)
    }
    fn growth(&self) -> Growth {
        TestFunction::growth(self)
    }
}

/// A closure paired with a caller-declared growth class.
pub struct Declared<F> {
    pub f: F,
    pub growth: Growth,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Declared<F> {
    pub fn new(growth: Growth, f: F) -> Self {
        Self { f, growth }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarFn for Declared<F> {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn growth(&self) -> Growth {
        self.growth.clone()
    }
}

/// Discretisation of the jump integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Radius where geometric radial panels give way to width-capped ones.
    pub inner_radius: f64,
    /// Below this radius the integrand is replaced by its quadratic model.
    pub core_radius: f64,
    /// Gauss–Legendre nodes per radial panel.
    pub radial_nodes: usize,
    /// Largest radial panel beyond `inner_radius`.
    pub max_panel_width: f64,
    /// Angular resolution of the sphere rule.
    pub angular_nodes: usize,
    /// `R_max`; chosen from `tolerance` when absent.
    pub outer_cutoff: Option<f64>,
    /// Bound required of the truncated tail.
    pub tolerance: f64,
    /// Refuses cutoffs that need more radial panels than this.
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            inner_radius: 1.0,
            core_radius: 1e-4,
            radial_nodes: 16,
            max_panel_width: 2.0,
            angular_nodes: 64,
            outer_cutoff: None,
            tolerance: 1e-6,
            max_panels: 1_000_000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    constraint: "must be positive and finite".into(),
                })
            }
        };
        pos("inner_radius", self.inner_radius)?;
        pos("core_radius", self.core_radius)?;
        pos("max_panel_width", self.max_panel_width)?;
        pos("tolerance", self.tolerance)?;
        if let Some(r) = self.outer_cutoff {
            pos("outer_cutoff", r)?;
        }
        if self.core_radius >= self.inner_radius {
            return Err(Error::InvalidParameter {
                name: "core_radius",
                value: self.core_radius,
                constraint: "must be below inner_radius".into(),
            });
        }
        if self.radial_nodes == 0 || self.angular_nodes == 0 {
            return Err(Error::InvalidParameter {
                name: "radial_nodes",
                value: 0.0,
                constraint: "node counts must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Quadrature value with the bound on the truncated tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Radial nodes on `[core, R]` with weights that include `r^{-1-α}`.
struct RadialRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    core: f64,
    core_factor: f64,
}

impl RadialRule {
    fn new(alpha: f64, outer: f64, q: &QuadratureSpec) -> Result<Self> {
        let gl = gauss_legendre(q.radial_nodes);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut push_panel = |a: f64, b: f64| {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let r = mid + half * x;
                nodes.push(r);
                weights.push(w * half * r.powf(-1.0 - alpha));
            }
        };
        let inner = q.inner_radius.min(outer);
        let mut a = q.core_radius;
        while a < inner {
            let b = (2.0 * a).min(inner);
            push_panel(a, b);
            a = b;
        }
        let far_panels = ((outer - inner) / q.max_panel_width).ceil();
        if far_panels > q.max_panels as f64 {
            return Err(Error::Quadrature {
                context: format!(
                    "outer cutoff {outer:e} needs {far_panels:e} radial panels (limit {}); loosen the tolerance",
                    q.max_panels
                ),
                tolerance: q.tolerance,
                achieved: f64::INFINITY,
            });
        }
        while a < outer {
            let b = (a + q.max_panel_width.min(a)).min(outer);
            push_panel(a, b);
            a = b;
        }
        let eps = q.core_radius;
        Ok(Self {
            nodes,
            weights,
            core: eps,
            core_factor: eps.powf(-alpha) / (2.0 - alpha),
        })
    }

    /// `∫_0^R s(r) r^{-1-α} dr` for `s(r) = O(r²)` at 0.
    fn integrate(&self, mut s: impl FnMut(f64) -> f64) -> f64 {
        // ∫_0^ε (s(ε)/ε²) r^{1-α} dr
        let core = s(self.core) * self.core_factor;
        core + self.nodes.iter().zip(&self.weights).map(|(&r, w)| w * s(r)).sum::<f64>()
    }
}

fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
}

fn check_alpha_open(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            constraint: "jump operators need alpha in (0, 2)".into(),
        })
    }
}

/// Outer cutoff and the bound on `∫_{|y|>R} |u(x±y)| m |y|^{-d-α} dy`,
/// given `angular_mass = ∫ m dσ`.
fn outer_cutoff(growth: &Growth, x: &[f64], alpha: f64, angular_mass: f64, q: &QuadratureSpec) -> Result<(f64, f64)> {
    let target = 0.5 * q.tolerance;
    let xnorm = norm(x);
    let min_r = q.inner_radius;
    let bounded = |sup: f64| -> (Box<dyn Fn(f64) -> f64>, f64) {
        let c = sup * angular_mass / alpha;
        let auto = if c == 0.0 { min_r } else { (c / target).powf(1.0 / alpha).max(min_r) };
        (Box::new(move |r: f64| c * r.powf(-alpha)), auto)
    };
    let dist = |c: &[f64]| c.iter().zip(x).map(|(c, xi)| (c - xi).powi(2)).sum::<f64>().sqrt();
    let (bound, auto): (Box<dyn Fn(f64) -> f64>, f64) = match growth {
        // u(x±y) − u(x) vanishes identically
        Growth::Constant(_) => (Box::new(|_| 0.0), min_r),
        Growth::Bounded(sup) => bounded(*sup),
        Growth::Compact { sup, center, radius } => {
            let reach = dist(center) + radius;
            let c = sup * angular_mass / alpha;
            (
                Box::new(move |r: f64| if r >= reach { 0.0 } else { c * r.powf(-alpha) }),
                reach.max(min_r),
            )
        }
        Growth::GaussianDecay { sup, centers, width } => {
            let reach = centers.iter().map(|c| dist(c)).fold(0.0, f64::max);
            let c = sup * angular_mass / alpha;
            let w = *width;
            let bound = move |r: f64| {
                let gap = (r - reach).max(0.0);
                c * r.powf(-alpha) * (-0.5 * gap * gap / (w * w)).exp()
            };
            let auto = if c == 0.0 {
                min_r
            } else {
                (reach + w * (2.0 * (c / target).max(1.0).ln()).sqrt()).max(min_r)
            };
            (Box::new(bound), auto)
        }
        Growth::Polynomial { order, constant } => {
            let p = *order;
            if p >= alpha {
                return Err(Error::Divergent(format!(
                    "tail integrand on |y| > {min_r} grows like |y|^({p}-d-{alpha}) and is not integrable"
                )));
            }
            let c = constant * 2f64.powf(p) * angular_mass / (alpha - p);
            let start = (1.0 + xnorm).max(min_r);
            let auto = if c == 0.0 {
                start
            } else {
                (c / target).powf(1.0 / (alpha - p)).max(start)
            };
            (
                Box::new(move |r: f64| if r < 1.0 + xnorm { f64::INFINITY } else { c * r.powf(p - alpha) }),
                auto,
            )
        }
    };
    let r = q.outer_cutoff.unwrap_or(auto);
    let tail = bound(r);
    if tail > q.tolerance {
        return Err(Error::Quadrature {
            context: format!("tail beyond R_max = {r:e} exceeds the tolerance"),
            tolerance: q.tolerance,
            achieved: tail,
        });
    }
    Ok((r, tail))
}

/// `∫ [u(x+y) + u(x−y) − 2u(x)]/2 · weight(ŷ) |y|^{-d-α} dy`.
fn symmetrized_integral(
    u: &dyn ScalarFn,
    x: &[f64],
    alpha: f64,
    q: &QuadratureSpec,
    weight: &dyn Fn(&[f64]) -> f64,
) -> Result<OperatorValue> {
    check_alpha_open(alpha)?;
    q.validate()?;
    if let Growth::Constant(_) = u.growth() {
        return Ok(OperatorValue { value: 0.0, tail_bound: 0.0 });
    }
    let d = x.len();
    let sphere = SphereRule::half(d, q.angular_nodes)?;
    let weights: Vec<f64> = sphere.nodes.iter().map(|t| weight(t)).collect();
    let angular_mass: f64 = sphere.weights.iter().zip(&weights).map(|(a, b)| a * b).sum();
    let (outer, tail_bound) = outer_cutoff(&u.growth(), x, alpha, angular_mass, q)?;
    let radial = RadialRule::new(alpha, outer, q)?;
    let ux = u.eval(x);
    let beyond = -ux * outer.powf(-alpha) / alpha;
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let mut total = 0.0;
    for ((theta, w_sphere), w_m) in sphere.nodes.iter().zip(&sphere.weights).zip(&weights) {
        let line = radial.integrate(|r| {
            for k in 0..d {
                plus[k] = x[k] + r * theta[k];
                minus[k] = x[k] - r * theta[k];
            }
            0.5 * (u.eval(&plus) + u.eval(&minus)) - ux
        });
        total += w_sphere * w_m * (line + beyond);
    }
    if !total.is_finite() {
        return Err(Error::Divergent("jump integral is not finite".into()));
    }
    Ok(OperatorValue {
        value: total,
        tail_bound,
    })
}

/// `∂^α u(x)` by symmetrised quadrature.
pub fn frac_laplacian(u: &dyn ScalarFn, x: &[f64], alpha: f64, q: &QuadratureSpec) -> Result<OperatorValue> {
    symmetrized_integral(u, x, alpha, q, &|_| 1.0)
}

/// `∂^α u(x)` from the compensated definition
/// `∫ [u(x+y) − u(x) − (∇u(x), y) χ_α(y)] |y|^{-d-α} dy`, with
/// `χ_α = 1` for α ∈ (1,2), `1_{|y|≤1}` for α = 1 and 0 below.
pub fn frac_laplacian_compensated(u: &dyn ScalarFn, x: &[f64], alpha: f64, q: &QuadratureSpec) -> Result<OperatorValue> {
    check_alpha_open(alpha)?;
    q.validate()?;
    if let Growth::Constant(_) = u.growth() {
        return Ok(OperatorValue { value: 0.0, tail_bound: 0.0 });
    }
    let d = x.len();
    let sphere = SphereRule::full(d, q.angular_nodes)?;
    let angular_mass: f64 = sphere.weights.iter().sum::<f64>() / 2.0;
    let (outer, tail_bound) = outer_cutoff(&u.growth(), x, alpha, angular_mass, q)?;
    let radial = RadialRule::new(alpha, outer, q)?;
    let f = |y: &[f64]| u.eval(y);
    let grad = gradient(&f, x);
    let ux = u.eval(x);
    let eps = radial.core;
    let mut y = vec![0.0; d];
    let mut total = 0.0;
    for (theta, w) in sphere.nodes.iter().zip(&sphere.weights) {
        let g = grad.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        let chi = |r: f64| {
            if alpha > 1.0 || (alpha == 1.0 && r <= 1.0) {
                1.0
            } else {
                0.0
            }
        };
        let mut diff = |r: f64| {
            for k in 0..d {
                y[k] = x[k] + r * theta[k];
            }
            u.eval(&y) - ux
        };
        // first-order term exact, second-order term from the residual at ε
        let mut core = (diff(eps) - eps * g) / (eps * eps) * eps.powf(2.0 - alpha) / (2.0 - alpha);
        if alpha < 1.0 {
            core += g * eps.powf(1.0 - alpha) / (1.0 - alpha);
        }
        let body: f64 = radial
            .nodes
            .iter()
            .zip(&radial.weights)
            .map(|(&r, w)| w * (diff(r) - chi(r) * r * g))
            .sum();
        let mut beyond = -ux * outer.powf(-alpha) / alpha;
        if alpha > 1.0 {
            beyond -= g * outer.powf(1.0 - alpha) / (alpha - 1.0);
        }
        total += w * (core + body + beyond);
    }
    Ok(OperatorValue {
        value: total,
        tail_bound,
    })
}

/// Central-difference gradient with step `ε^{1/3}·max(1, |x_k|)`.
pub fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = f64::EPSILON.cbrt() * x[k].abs().max(1.0);
            y[k] = x[k] + h;
            let fp = f(&y);
            y[k] = x[k] - h;
            let fm = f(&y);
            y[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with step `ε^{1/4}·max(1, |x_k|)`.
pub fn hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let h: Vec<f64> = x.iter().map(|v| f64::EPSILON.powf(0.25) * v.abs().max(1.0)).collect();
    let fx = f(x);
    let mut y = x.to_vec();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        y[i] = x[i] + h[i];
        let fp = f(&y);
        y[i] = x[i] - h[i];
        let fm = f(&y);
        y[i] = x[i];
        out[(i, i)] = (fp - 2.0 * fx + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                y[i] = x[i] + si * h[i];
                y[j] = x[j] + sj * h[j];
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Angular density `m(z, θ) = |det b|^{-1} |b^{-1} θ|^{-d-α}` of the
/// principal jump measure after the change of variables `y ↦ b(z) y`.
pub struct DiffusionWeight {
    inverse: DMatrix<f64>,
    inv_det: f64,
    exponent: f64,
}

impl DiffusionWeight {
    pub fn new(b: &DMatrix<f64>, alpha: f64) -> Result<Self> {
        let det = b.determinant();
        let inverse = b.clone().try_inverse().filter(|_| det != 0.0 && det.is_finite()).ok_or_else(|| {
            Error::Degenerate {
                point: vec![],
                det: det.abs(),
                floor: 0.0,
            }
        })?;
        Ok(Self {
            inverse,
            inv_det: 1.0 / det.abs(),
            exponent: -(b.nrows() as f64) - alpha,
        })
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        let d = theta.len();
        let mut s = 0.0;
        for i in 0..d {
            let mut v = 0.0;
            for j in 0..d {
                v += self.inverse[(i, j)] * theta[j];
            }
            s += v * v;
        }
        self.inv_det * s.sqrt().powf(self.exponent)
    }
}

/// `∫_{S^{d-1}} θ m(z, θ) dσ(θ)` on the full sphere rule.
pub fn weighted_sphere_mean(b: &DMatrix<f64>, alpha: f64, angular_nodes: usize) -> Result<Vec<f64>> {
    let m = DiffusionWeight::new(b, alpha)?;
    let sphere = SphereRule::full(b.nrows(), angular_nodes)?;
    let mut out = vec![0.0; b.nrows()];
    for (t, w) in sphere.nodes.iter().zip(&sphere.weights) {
        let v = w * m.eval(t);
        for (o, ti) in out.iter_mut().zip(t) {
            *o += v * ti;
        }
    }
    Ok(out)
}

/// Principal part `A_z u(x)`.
///
/// For α = 2 this is `k · Σ D^{ij}(z) ∂²_{ij} u(x)` with `D = b bᵀ` and
/// `k` half the per-unit-time variance of the Wiener branch, so that `A_z` is
/// the generator of `b(z) U` under either normalisation.
pub fn apply_a(
    z: &[f64],
    field: &CoefficientField,
    u: &dyn ScalarFn,
    x: &[f64],
    driver: &StableDriverSpec,
    q: &QuadratureSpec,
) -> Result<OperatorValue> {
    let d = field.dim;
    if z.len() != d || x.len() != d || driver.dim != d {
        return Err(Error::Dimension("z, x, driver and field must share the dimension".into()));
    }
    let b = field.diffusion_matrix(z);
    let f = |y: &[f64]| u.eval(y);
    if driver.is_wiener() {
        let diff = &b * b.transpose();
        let hess = hessian(&f, x);
        let k = 0.5 * driver.wiener_normalization.variance();
        let value = k * diff.component_mul(&hess).sum();
        return Ok(OperatorValue { value, tail_bound: 0.0 });
    }
    let alpha = driver.alpha;
    let weight = DiffusionWeight::new(&b, alpha).map_err(|_| Error::Degenerate {
        point: z.to_vec(),
        det: b.determinant().abs(),
        floor: field.nondegeneracy_floor,
    })?;
    let mut out = symmetrized_integral(u, x, alpha, q, &|t| weight.eval(t))?;
    if alpha == 1.0 {
        let a = field.drift.eval_vec(z);
        out.value += a.iter().zip(gradient(&f, x)).map(|(ai, gi)| ai * gi).sum::<f64>();
    }
    Ok(out)
}

fn gauss_hermite(n: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n).or_insert_with(|| Arc::new(GaussHermite::new(n))).clone()
}

const B_TOLERANCE: f64 = 1e-10;

/// `E_jump[h(y)]` for the normalised jump law.
fn jump_expectation(jump: &JumpDistribution, h: &mut dyn FnMut(&[f64]) -> f64) -> Result<f64> {
    match jump {
        JumpDistribution::Atoms { atoms } => Ok(atoms.iter().map(|a| a.prob * h(&a.point)).sum()),
        JumpDistribution::Gaussian { mean, covariance } => {
            let m = mean.len();
            let c = DMatrix::from_fn(m, m, |i, j| covariance[i][j]);
            let eig = c.symmetric_eigen();
            let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
            let gh = gauss_hermite(match m {
                1 => 64,
                2 => 32,
                _ => 16,
            });
            let n = gh.nodes.len();
            let mut idx = vec![0usize; m];
            let mut y = vec![0.0; m];
            let mut total = 0.0;
            for _ in 0..n.pow(m as u32) {
                let mut w = 1.0;
                for i in 0..m {
                    y[i] = mean[i];
                    w *= gh.weights[idx[i]];
                }
                for i in 0..m {
                    for j in 0..m {
                        y[i] += root[(i, j)] * gh.nodes[idx[j]];
                    }
                }
                total += w * h(&y);
                for i in idx.iter_mut() {
                    *i += 1;
                    if *i < n {
                        break;
                    }
                    *i = 0;
                }
            }
            Ok(total)
        }
        JumpDistribution::BoundedPareto {
            dim,
            tail_index,
            lower,
            upper,
            directions,
        } => radial_expectation(*dim, *tail_index, *lower, Some(*upper), directions.as_deref(), h),
        JumpDistribution::Pareto {
            dim,
            tail_index,
            lower,
            directions,
        } => radial_expectation(*dim, *tail_index, *lower, None, directions.as_deref(), h),
    }
}

fn radial_expectation(
    dim: usize,
    rho: f64,
    lower: f64,
    upper: Option<f64>,
    directions: Option<&[crate::levy::Atom]>,
    h: &mut dyn FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let norm_const = lower.powf(-rho) - upper.map_or(0.0, |u| u.powf(-rho));
    let dirs: Vec<(Vec<f64>, f64)> = match directions {
        Some(atoms) => atoms.iter().map(|a| (a.point.clone(), a.prob)).collect(),
        None => {
            let s = SphereRule::full(dim, 32)?;
            let area = quad::sphere_area(dim);
            s.nodes.into_iter().zip(s.weights.into_iter().map(|w| w / area)).collect()
        }
    };
    let mut total = 0.0;
    let mut y = vec![0.0; dim];
    for (theta, p) in dirs {
        let mut radial = |r: f64| {
            for k in 0..dim {
                y[k] = r * theta[k];
            }
            h(&y) * rho * r.powf(-1.0 - rho) / norm_const
        };
        let e = match upper {
            Some(u) => quad::integrate(&mut radial, lower, u, B_TOLERANCE, 2000)?,
            None => quad::integrate_to_infinity(&mut radial, lower, B_TOLERANCE, 2000)?,
        };
        total += p * e.value;
    }
    Ok(total)
}

/// Subordinated part `B_z u(x)`.
pub fn apply_b(
    z: &[f64],
    field: &CoefficientField,
    zspec: &LevyMeasureSpec,
    u: &dyn ScalarFn,
    x: &[f64],
    alpha: f64,
) -> Result<f64> {
    let d = field.dim;
    let m = field.jump_dim;
    if z.len() != d || x.len() != d || zspec.dim() != m {
        return Err(Error::Dimension("z, x, jump law and field must have matching dimensions".into()));
    }
    let compensated = alpha > 1.0 && alpha <= 2.0;
    let f = |y: &[f64]| u.eval(y);
    let grad = if compensated { gradient(&f, x) } else { vec![0.0; d] };
    let mut total = 0.0;
    if compensated {
        let a = field.drift.eval_vec(z);
        total += a.iter().zip(&grad).map(|(ai, gi)| ai * gi).sum::<f64>();
    }
    if zspec.rate == 0.0 {
        return Ok(total);
    }
    let g = field.jump.eval_vec(z);
    let ux = u.eval(x);
    let mut shifted = vec![0.0; d];
    let mut jump = |y: &[f64]| {
        for r in 0..d {
            shifted[r] = x[r] + (0..m).map(|k| g[r * m + k] * y[k]).sum::<f64>();
        }
        u.eval(&shifted) - ux
    };
    let mut expectation = jump_expectation(&zspec.jump, &mut jump)?;
    if compensated {
        // (∇u(x), G(z) E[y 1_{|y|≤1}])
        let small = small_jump_mean(&zspec.jump)?;
        for r in 0..d {
            let gy: f64 = (0..m).map(|k| g[r * m + k] * small[k]).sum();
            expectation -= grad[r] * gy;
        }
    }
    if !expectation.is_finite() {
        return Err(Error::Divergent("jump expectation is not finite".into()));
    }
    Ok(total + zspec.rate * expectation)
}

// The fixed bump exp(−1/(1−|x|²)) on the unit ball.
fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn bump_normalisation(d: usize) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&d) {
        return Ok(*v);
    }
    let e = quad::integrate(|r| bump(r * r) * r.powi(d as i32 - 1), 0.0, 1.0, 1e-15, 500)?;
    let c = 1.0 / (quad::sphere_area(d) * e.value);
    cache.lock().unwrap_or_else(|e| e.into_inner()).insert(d, c);
    Ok(c)
}

/// Normalised radial bump `w` supported in the unit ball.
pub fn mollifier_kernel(y: &[f64]) -> Result<f64> {
    Ok(bump_normalisation(y.len())? * bump(y.iter().map(|v| v * v).sum()))
}

/// Mollification scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
}

impl MollifierSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon < 1.0 {
            Ok(Self { epsilon })
        } else {
            Err(Error::InvalidParameter {
                name: "epsilon",
                value: epsilon,
                constraint: "must lie in (0, 1)".into(),
            })
        }
    }
}

/// Product rule on the unit ball with the kernel `w` folded into the
/// weights: `∫ h(y) w(y) dy ≈ Σ c_i h(y_i)`.
#[derive(Debug, Clone)]
pub struct BallRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

const BALL_PANELS: usize = 64;
const BALL_GAUSS: usize = 8;

impl BallRule {
    pub fn kernel(d: usize) -> Result<Self> {
        let c = bump_normalisation(d)?;
        Self::radial(d, BALL_PANELS, |r| c * bump(r * r))
    }

    fn radial(d: usize, panels: usize, radial_weight: impl Fn(f64) -> f64) -> Result<Self> {
        let sphere = SphereRule::full(d, if d == 1 { 1 } else { 48 })?;
        let gl = gauss_legendre(BALL_GAUSS);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in 0..panels {
            let (a, b) = (p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
            let half = 0.5 * (b - a);
            for (xg, wg) in gl.nodes.iter().zip(&gl.weights) {
                let r = 0.5 * (a + b) + half * xg;
                let wr = wg * half * r.powi(d as i32 - 1) * radial_weight(r);
                for (t, wt) in sphere.nodes.iter().zip(&sphere.weights) {
                    nodes.push(t.iter().map(|v| r * v).collect());
                    weights.push(wr * wt);
                }
            }
        }
        Ok(Self { nodes, weights })
    }
}

/// Mollifier of a fixed scale with its quadrature rule.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub spec: MollifierSpec,
    rule: BallRule,
}

impl Mollifier {
    pub fn new(d: usize, spec: MollifierSpec) -> Result<Self> {
        MollifierSpec::new(spec.epsilon)?;
        Ok(Self {
            spec,
            rule: BallRule::kernel(d)?,
        })
    }

    /// `f^ε(x) = ∫ f(x − εy) w(y) dy`.
    pub fn apply(&self, f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
        let eps = self.spec.epsilon;
        let mut y = vec![0.0; x.len()];
        self.rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(|(v, w)| {
                for k in 0..x.len() {
                    y[k] = x[k] - eps * v[k];
                }
                w * f(&y)
            })
            .sum()
    }
}

/// `f^ε(x)`.
pub fn mollify(f: &dyn Fn(&[f64]) -> f64, spec: MollifierSpec, x: &[f64]) -> Result<f64> {
    Ok(Mollifier::new(x.len(), spec)?.apply(f, x))
}

/// Precomputed `K = ∂^α w`, so that
/// `∂^α f^ε(x) = ε^{-α} ∫ [f(x − εy) − f(x)] K(y) dy`.
#[derive(Debug, Clone)]
pub struct MollifiedFracLaplacian {
    dim: usize,
    alpha: f64,
    directions: Vec<(Vec<f64>, f64)>,
    radii: Vec<f64>,
    // quadrature weight · K(r) · r^{d-1}
    coefficients: Vec<f64>,
    outer: f64,
}

const KERNEL_DIRECT_RADIUS: f64 = 1.25;

impl MollifiedFracLaplacian {
    pub fn new(d: usize, alpha: f64) -> Result<Self> {
        check_alpha_open(alpha)?;
        let c = bump_normalisation(d)?;
        let w = Declared::new(
            Growth::Compact {
                sup: c * (-1.0f64).exp(),
                center: vec![0.0; d],
                radius: 1.0,
            },
            move |y: &[f64]| c * bump(y.iter().map(|v| v * v).sum()),
        );
        let q = QuadratureSpec {
            angular_nodes: 48,
            radial_nodes: 16,
            core_radius: 1e-3,
            ..QuadratureSpec::default()
        };
        let ball = BallRule::kernel(d)?;
        let kernel = |r: f64| -> Result<f64> {
            let mut y = vec![0.0; d];
            y[0] = r;
            if r < KERNEL_DIRECT_RADIUS {
                Ok(frac_laplacian(&w, &y, alpha, &q)?.value)
            } else {
                // outside the support: ∫ w(v) |y − v|^{-d-α} dv
                Ok(ball
                    .nodes
                    .iter()
                    .zip(&ball.weights)
                    .map(|(v, wt)| {
                        let dist = y.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        wt * dist.powf(-(d as f64) - alpha)
                    })
                    .sum())
            }
        };
        let gl = gauss_legendre(8);
        let mut radii = Vec::new();
        let mut coefficients = Vec::new();
        let mut panel = |a: f64, b: f64| -> Result<()> {
            let half = 0.5 * (b - a);
            for (xg, wg) in gl.nodes.iter().zip(&gl.weights) {
                let r = 0.5 * (a + b) + half * xg;
                radii.push(r);
                coefficients.push(wg * half * kernel(r)? * r.powi(d as i32 - 1));
            }
            Ok(())
        };
        let near = 4.0;
        let n_near = 128;
        for p in 0..n_near {
            panel(near * p as f64 / n_near as f64, near * (p + 1) as f64 / n_near as f64)?;
        }
        let outer = 1.0e4;
        let mut a = near;
        while a < outer {
            let b = (a * 1.25).min(outer);
            panel(a, b)?;
            a = b;
        }
        let sphere = SphereRule::full(d, if d == 1 { 1 } else { 64 })?;
        Ok(Self {
            dim: d,
            alpha,
            directions: sphere.nodes.into_iter().zip(sphere.weights).collect(),
            radii,
            coefficients,
            outer,
        })
    }

    /// `∂^α f^ε(x)`.
    pub fn apply(&self, f: &dyn Fn(&[f64]) -> f64, epsilon: f64, x: &[f64]) -> f64 {
        let d = self.dim;
        let fx = f(x);
        let mut y = vec![0.0; d];
        let mut total = 0.0;
        for (theta, wt) in &self.directions {
            let line: f64 = self
                .radii
                .iter()
                .zip(&self.coefficients)
                .map(|(&r, c)| {
                    for k in 0..d {
                        y[k] = x[k] - epsilon * r * theta[k];
                    }
                    c * (f(&y) - fx)
                })
                .sum();
            total += wt * line;
        }
        // K(y) ≈ |y|^{-d-α} beyond the outer radius
        total -= fx * quad::sphere_area(d) * self.outer.powf(-self.alpha) / self.alpha;
        total * epsilon.powf(-self.alpha)
    }
}

/// Outcome of [`mollifier_scaling_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingProbe {
    pub epsilons: Vec<f64>,
    pub sup_error: Vec<f64>,
    pub sup_frac_laplacian: Vec<f64>,
    /// Log–log slope of `sup|f^ε − f|`.
    pub slope_sup_error: f64,
    /// Log–log slope of `sup|∂^α f^ε|`.
    pub slope_frac_laplacian: f64,
    /// Residuals (in log space) of the power and `a + b(−ln ε)` fits to
    /// `sup|∂^α f^ε|`.
    pub power_fit_residual: f64,
    pub log_fit_residual: f64,
    /// Whether β = α, where a logarithmic growth is expected.
    pub log_branch: bool,
}

fn singular_point(f: &TestFunction, d: usize) -> Vec<f64> {
    match f {
        TestFunction::RadialPower { center, .. } => center.clone(),
        TestFunction::SmoothGaussianMixture { components } => components[0].center.clone(),
        _ => vec![0.0; d],
    }
}

/// Sweeps `ε` and fits the log–log slopes of `sup_x |f^ε − f|` and
/// `sup_x |∂^α f^ε|`. The supremum runs over a fixed grid on
/// `[c − 2, c + 2]^d` and an `ε`-scaled grid around the function's
/// singular point `c`.
pub fn mollifier_scaling_probe(f: &TestFunction, alpha: f64, epsilons: &[f64]) -> Result<ScalingProbe> {
    if epsilons.len() < 3 {
        return Err(Error::Insufficient(format!(
            "need at least 3 sweep points, got {}",
            epsilons.len()
        )));
    }
    let beta = f.declared_beta();
    if beta > alpha && beta.is_finite() {
        return Err(Error::Hypothesis(format!(
            "probe needs β ≤ α (got β = {beta}, α = {alpha})"
        )));
    }
    let d = f.dim().unwrap_or(1);
    f.validate(d)?;
    let c = singular_point(f, d);
    let frac = MollifiedFracLaplacian::new(d, alpha)?;
    let offsets: Vec<f64> = (-12..=12).map(|k| k as f64 / 4.0).collect();
    let coarse: Vec<f64> = (-16..=16).map(|k| k as f64 / 8.0).collect();
    let eval = |x: &[f64]| f.eval(x);
    let mut sup_error = Vec::new();
    let mut sup_frac = Vec::new();
    for &eps in epsilons {
        let moll = Mollifier::new(d, MollifierSpec::new(eps)?)?;
        let mut points: Vec<Vec<f64>> = Vec::new();
        for &t in offsets.iter() {
            let mut p = c.clone();
            p[0] += eps * t;
            points.push(p);
        }
        for &t in coarse.iter() {
            let mut p = c.clone();
            p[0] += t;
            points.push(p);
        }
        let (mut e_max, mut l_max) = (0.0f64, 0.0f64);
        for p in &points {
            e_max = e_max.max((moll.apply(&eval, p) - f.eval(p)).abs());
            l_max = l_max.max(frac.apply(&eval, eps, p).abs());
        }
        sup_error.push(e_max);
        sup_frac.push(l_max);
    }
    let log_eps: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let logs = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x.ln()).collect() };
    let fit_e = fit_line(&log_eps, &logs(&sup_error))
        .ok_or_else(|| Error::Insufficient("degenerate ε sweep".into()))?;
    let fit_l = fit_line(&log_eps, &logs(&sup_frac))
        .ok_or_else(|| Error::Insufficient("degenerate ε sweep".into()))?;
    let neg_log: Vec<f64> = log_eps.iter().map(|l| -l).collect();
    let lin = fit_line(&neg_log, &sup_frac).ok_or_else(|| Error::Insufficient("degenerate ε sweep".into()))?;
    let log_fit_residual = neg_log
        .iter()
        .zip(&sup_frac)
        .map(|(x, v)| {
            let pred = lin.intercept + lin.slope * x;
            if pred > 0.0 {
                (v.ln() - pred.ln()).powi(2)
            } else {
                f64::INFINITY
            }
        })
        .sum();
    Ok(ScalingProbe {
        epsilons: epsilons.to_vec(),
        sup_error,
        sup_frac_laplacian: sup_frac,
        slope_sup_error: fit_e.slope,
        slope_frac_laplacian: fit_l.slope,
        power_fit_residual: fit_l.rss,
        log_fit_residual,
        log_branch: beta == alpha,
    })
}
