//! Quadrature building blocks: Gauss–Legendre tables, adaptive
//! Gauss–Kronrod integration and fixed rules on the unit sphere.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

// Kronrod 15-point nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Result of a numerical integration: value and an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss–Kronrod (7–15) integration over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `tol` or `max_intervals` is reached.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<Estimate> {
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        if !total.is_finite() {
            return Err(Error::Divergent(format!(
                "integrand not finite on [{a}, {b}]"
            )));
        }
        if total_err <= tol {
            return Ok(Estimate {
                value: total,
                error: total_err,
            });
        }
        if intervals.len() >= max_intervals {
            return Err(Error::Quadrature {
                context: format!("adaptive integration on [{a}, {b}]"),
                tolerance: tol,
                achieved: total_err,
            });
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Adaptive integration over `[a, ∞)` through `t = a + s / (1 - s)`.
pub fn integrate_to_infinity(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<Estimate> {
    integrate(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - s;
            let t = a + s / one_minus;
            let v = f(t) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
        max_intervals,
    )
}

/// Surface area of the unit sphere `S^{d-1}` in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * PI.powf(half) / statrs::function::gamma::gamma(half)
}

/// A weighted node set on the unit sphere `S^{d-1}`.
///
/// Weights sum to the sphere area. A `half` rule keeps one node of each
/// antipodal pair with doubled weight; it integrates even functions exactly
/// as the full rule does.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// Full rule. `n` is the resolution: trapezoid nodes on the circle in
    /// `d = 2`, Gauss nodes in the polar direction for `d = 3`.
    pub fn full(dim: usize, n: usize) -> Result<Self> {
        Self::build(dim, n, false)
    }

    /// Antipodally reduced rule for even integrands.
    pub fn half(dim: usize, n: usize) -> Result<Self> {
        Self::build(dim, n, true)
    }

    fn build(dim: usize, n: usize, half: bool) -> Result<Self> {
        let n = n.max(2);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        match dim {
            1 => {
                nodes.push(vec![1.0]);
                weights.push(1.0);
                nodes.push(vec![-1.0]);
                weights.push(1.0);
            }
            2 => {
                // offset trapezoid with 2n nodes; antipodes are k and k + n
                let m = 2 * n;
                let w = 2.0 * PI / m as f64;
                for k in 0..m {
                    let phi = (k as f64 + 0.5) * w;
                    nodes.push(vec![phi.cos(), phi.sin()]);
                    weights.push(w);
                }
            }
            3 => {
                let nz = if n % 2 == 0 { n } else { n + 1 };
                let nphi = 2 * nz;
                let gl = GaussLegendre::new(nz);
                let wphi = 2.0 * PI / nphi as f64;
                for (&z, &wz) in gl.nodes.iter().zip(&gl.weights) {
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    for k in 0..nphi {
                        let phi = (k as f64 + 0.5) * wphi;
                        nodes.push(vec![rho * phi.cos(), rho * phi.sin(), z]);
                        weights.push(wz * wphi);
                    }
                }
            }
            _ => {
                return Err(Error::Dimension(format!(
                    "sphere rules are available for d <= 3, got d = {dim}"
                )))
            }
        }
        if half {
            let mut hn = Vec::new();
            let mut hw = Vec::new();
            for (x, w) in nodes.into_iter().zip(weights) {
                if is_upper(&x) {
                    hn.push(x);
                    hw.push(2.0 * w);
                }
            }
            nodes = hn;
            weights = hw;
        }
        Ok(Self {
            dim,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Hermite rule for the standard normal weight `e^{-x²/2}/√(2π)`,
/// from the eigen-decomposition of the Jacobi matrix (Golub–Welsch).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite order must be positive");
        let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }
}

// Picks one representative of each antipodal pair: the last nonzero
// coordinate is positive.
fn is_upper(x: &[f64]) -> bool {
    for &c in x.iter().rev() {
        if c.abs() > 1e-14 {
            return c > 0.0;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        for n in [1, 2, 5, 8, 16, 33] {
            let gl = GaussLegendre::new(n);
            let wsum: f64 = gl.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let v = gl.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn gauss_hermite_normal_moments() {
        let gh = GaussHermite::new(20);
        let moment = |k: i32| gh.nodes.iter().zip(&gh.weights).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let e = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10, 500).unwrap();
        assert!((e.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn infinite_range() {
        let e = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-12, 200).unwrap();
        assert!((e.value - 1.0).abs() < 1e-11);
        let e = integrate_to_infinity(|x| x.powf(-2.5), 1.0, 1e-12, 200).unwrap();
        assert!((e.value - 1.0 / 1.5).abs() < 1e-10);
    }

    #[test]
    fn max_intervals_reports_achieved_error() {
        let err = integrate(|x| (1.0 / x).sin(), 1e-8, 1.0, 1e-14, 4).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }

    #[test]
    fn sphere_weights_sum_to_area() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        for d in 1..=3 {
            for rule in [SphereRule::full(d, 8).unwrap(), SphereRule::half(d, 8).unwrap()] {
                let s: f64 = rule.weights.iter().sum();
                assert!((s - sphere_area(d)).abs() < 1e-12, "d={d}");
            }
        }
    }

    #[test]
    fn sphere_rule_second_moments() {
        // ∫ x_1^2 dσ = |S| / d
        for d in 1..=3 {
            let rule = SphereRule::half(d, 12).unwrap();
            let v = rule.integrate(|x| x[0] * x[0]);
            assert!((v - sphere_area(d) / d as f64).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn sphere_rules_reject_high_dimension() {
        assert!(SphereRule::full(4, 8).is_err());
    }
}
