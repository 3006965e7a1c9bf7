use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Domain;

/// A matrix-valued map `R^d → R^{rows × cols}`, written row-major.
pub trait MatrixMap: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);

    fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows() * self.cols()];
        self.eval(x, &mut out);
        out
    }
}

/// Adapts a closure to [`MatrixMap`].
pub struct FnMap<F> {
    rows: usize,
    cols: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> FnMap<F> {
    pub fn new(rows: usize, cols: usize, f: F) -> Self {
        Self { rows, cols, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> MatrixMap for FnMap<F> {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// A number, a vector or a matrix; shaped on use.
///
/// A scalar becomes `s·I` for square targets and a constant fill otherwise;
/// a vector becomes a column for single-column targets and a diagonal for
/// square ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl MatrixValue {
    pub fn shaped(&self, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; rows * cols];
        match self {
            MatrixValue::Scalar(s) => {
                if rows == cols {
                    for i in 0..rows {
                        out[i * cols + i] = *s;
                    }
                } else {
                    out.fill(*s);
                }
            }
            MatrixValue::Vector(v) => {
                if cols == 1 && v.len() == rows {
                    out.copy_from_slice(v);
                } else if rows == cols && v.len() == rows {
                    for i in 0..rows {
                        out[i * cols + i] = v[i];
                    }
                } else {
                    return Err(Error::Dimension(format!(
                        "vector of length {} cannot shape a {rows}x{cols} matrix",
                        v.len()
                    )));
                }
            }
            MatrixValue::Matrix(m) => {
                if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                    return Err(Error::Dimension(format!("expected a {rows}x{cols} matrix")));
                }
                for (i, r) in m.iter().enumerate() {
                    out[i * cols..(i + 1) * cols].copy_from_slice(r);
                }
            }
        }
        Ok(out)
    }
}

fn default_terms() -> usize {
    12
}

fn default_lacunarity() -> f64 {
    2.0
}

/// Catalog of coefficient maps. Each is `offset + amplitude · φ(⟨wave, x⟩ + phase)`
/// for a scalar profile φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Constant {
        value: MatrixValue,
    },
    /// `offset + slope · tanh(⟨wave, x⟩)`: affine near the origin, smoothly
    /// clamped far away.
    AffineBounded {
        offset: MatrixValue,
        slope: MatrixValue,
        wave: Vec<f64>,
    },
    Sinusoidal {
        offset: MatrixValue,
        amplitude: MatrixValue,
        wave: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `base + amplitude · W_β(⟨wave, x⟩)` with a Weierstrass sum normalised
    /// to sup-norm 1.
    HoelderPerturbed {
        base: Box<FieldSpec>,
        amplitude: MatrixValue,
        beta: f64,
        wave: Vec<f64>,
        #[serde(default = "default_terms")]
        terms: usize,
        #[serde(default = "default_lacunarity")]
        lacunarity: f64,
    },
}

impl FieldSpec {
    pub fn zero() -> Self {
        FieldSpec::Constant {
            value: MatrixValue::Scalar(0.0),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FieldSpec::Constant { .. } => "constant",
            FieldSpec::AffineBounded { .. } => "affine-bounded",
            FieldSpec::Sinusoidal { .. } => "sinusoidal",
            FieldSpec::HoelderPerturbed { .. } => "hoelder-perturbed",
        }
    }

    /// Declared Hölder regularity (∞ for smooth maps).
    pub fn regularity(&self) -> f64 {
        match self {
            FieldSpec::HoelderPerturbed { base, beta, .. } => beta.min(base.regularity()),
            _ => f64::INFINITY,
        }
    }

    /// Compiles the spec into an evaluable map of the given shape.
    pub fn build(&self, dim: usize, rows: usize, cols: usize) -> Result<CatalogMap> {
        let mut terms = Vec::new();
        let offset = self.collect(dim, rows, cols, &mut terms)?;
        Ok(CatalogMap {
            rows,
            cols,
            offset,
            terms,
        })
    }

    fn collect(&self, dim: usize, rows: usize, cols: usize, terms: &mut Vec<Term>) -> Result<Vec<f64>> {
        let check_wave = |wave: &[f64]| -> Result<Vec<f64>> {
            if wave.len() != dim {
                return Err(Error::Dimension(format!(
                    "wave vector has length {}, state dimension is {dim}",
                    wave.len()
                )));
            }
            Ok(wave.to_vec())
        };
        match self {
            FieldSpec::Constant { value } => value.shaped(rows, cols),
            FieldSpec::AffineBounded { offset, slope, wave } => {
                terms.push(Term {
                    amplitude: slope.shaped(rows, cols)?,
                    wave: check_wave(wave)?,
                    phase: 0.0,
                    profile: Profile::Tanh,
                });
                offset.shaped(rows, cols)
            }
            FieldSpec::Sinusoidal {
                offset,
                amplitude,
                wave,
                phase,
            } => {
                terms.push(Term {
                    amplitude: amplitude.shaped(rows, cols)?,
                    wave: check_wave(wave)?,
                    phase: *phase,
                    profile: Profile::Sin,
                });
                offset.shaped(rows, cols)
            }
            FieldSpec::HoelderPerturbed {
                base,
                amplitude,
                beta,
                wave,
                terms: n,
                lacunarity,
            } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(Error::InvalidParameter {
                        name: "beta",
                        value: *beta,
                        constraint: "Weierstrass perturbation needs beta in (0, 1)".into(),
                    });
                }
                if !(*lacunarity > 1.0) || *n == 0 {
                    return Err(Error::InvalidParameter {
                        name: "lacunarity",
                        value: *lacunarity,
                        constraint: "needs lacunarity > 1 and at least one term".into(),
                    });
                }
                let offset = base.collect(dim, rows, cols, terms)?;
                terms.push(Term {
                    amplitude: amplitude.shaped(rows, cols)?,
                    wave: check_wave(wave)?,
                    phase: 0.0,
                    profile: Profile::Weierstrass(Weierstrass::new(*lacunarity, *beta, *n)),
                });
                Ok(offset)
            }
        }
    }
}

/// Normalised lacunary cosine sum `Σ_n b^{-nβ} cos(b^n s) / Σ_n b^{-nβ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weierstrass {
    freqs: Vec<f64>,
    weights: Vec<f64>,
}

impl Weierstrass {
    pub fn new(lacunarity: f64, beta: f64, terms: usize) -> Self {
        let raw: Vec<f64> = (0..terms).map(|n| lacunarity.powf(-(n as f64) * beta)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            freqs: (0..terms).map(|n| lacunarity.powi(n as i32)).collect(),
            weights: raw.into_iter().map(|w| w / total).collect(),
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        if self.freqs.get(1) == Some(&2.0) {
            // dyadic frequencies: rotate by angle doubling from one sin_cos
            let (mut sn, mut cs) = s.sin_cos();
            let mut sum = 0.0;
            for w in &self.weights {
                sum += w * cs;
                (sn, cs) = (2.0 * sn * cs, (cs - sn) * (cs + sn));
            }
            return sum;
        }
        self.freqs
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| w * (f * s).cos())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Sin,
    Tanh,
    Weierstrass(Weierstrass),
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    amplitude: Vec<f64>,
    wave: Vec<f64>,
    phase: f64,
    profile: Profile,
}

/// Compiled catalog map.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogMap {
    rows: usize,
    cols: usize,
    offset: Vec<f64>,
    terms: Vec<Term>,
}

impl CatalogMap {
    /// Entrywise sup-norm bound `max |offset| + Σ max |amplitude|`.
    pub fn sup_bound(&self) -> f64 {
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        max_abs(&self.offset) + self.terms.iter().map(|t| max_abs(&t.amplitude)).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude.iter().all(|&a| a == 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.offset.iter().all(|&v| v == 0.0)
    }
}

impl MatrixMap for CatalogMap {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.offset);
        for t in &self.terms {
            let s = t.phase + t.wave.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>();
            let v = match &t.profile {
                Profile::Sin => s.sin(),
                Profile::Tanh => s.tanh(),
                Profile::Weierstrass(w) => w.eval(s),
            };
            for (o, a) in out.iter_mut().zip(&t.amplitude) {
                *o += a * v;
            }
        }
    }
}

/// Coefficients `(a, b, G)` of the SDE with declared regularity, bounds and
/// a nondegeneracy floor `c₁ ≤ inf |det b|`.
#[derive(Clone)]
pub struct CoefficientField {
    pub dim: usize,
    pub jump_dim: usize,
    pub drift: Arc<dyn MatrixMap>,
    pub diffusion: Arc<dyn MatrixMap>,
    pub jump: Arc<dyn MatrixMap>,
    pub beta_a: f64,
    pub beta_b: f64,
    pub beta_g: f64,
    /// Sup-norm bounds for `a`, `b`, `G` (entrywise).
    pub bounds: [f64; 3],
    pub nondegeneracy_floor: f64,
    /// Whether each of `a`, `b`, `G` is constant in `x`.
    pub constant: [bool; 3],
    pub drift_is_zero: bool,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("jump_dim", &self.jump_dim)
            .field("beta", &[self.beta_a, self.beta_b, self.beta_g])
            .field("bounds", &self.bounds)
            .field("nondegeneracy_floor", &self.nondegeneracy_floor)
            .finish()
    }
}

/// Serializable description of a [`CoefficientField`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFieldSpec {
    #[serde(default = "FieldSpec::zero")]
    pub drift: FieldSpec,
    pub diffusion: FieldSpec,
    #[serde(default = "FieldSpec::zero")]
    pub jump: FieldSpec,
    /// Declared `c₁`; defaults to half the probed minimum of `|det b|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nondegeneracy_floor: Option<f64>,
}

/// Box on which nondegeneracy and bounds are probed by default.
pub fn default_probe_domain(dim: usize) -> Domain {
    Domain::cube(dim, -std::f64::consts::PI, std::f64::consts::PI)
}

const DEFAULT_PROBE_POINTS: usize = 17;
const DEFAULT_PROBE_POINTS_LOW_DIM: usize = 129;

impl CoefficientFieldSpec {
    pub fn build(&self, dim: usize, jump_dim: usize) -> Result<CoefficientField> {
        let a = self.drift.build(dim, dim, 1)?;
        let b = self.diffusion.build(dim, dim, dim)?;
        let g = self.jump.build(dim, dim, jump_dim)?;
        let mut field = CoefficientField {
            dim,
            jump_dim,
            bounds: [a.sup_bound(), b.sup_bound(), g.sup_bound()],
            constant: [a.is_constant(), b.is_constant(), g.is_constant()],
            drift_is_zero: a.is_zero(),
            drift: Arc::new(a),
            diffusion: Arc::new(b),
            jump: Arc::new(g),
            beta_a: self.drift.regularity(),
            beta_b: self.diffusion.regularity(),
            beta_g: self.jump.regularity(),
            nondegeneracy_floor: 0.0,
        };
        let points = if dim <= 2 { DEFAULT_PROBE_POINTS_LOW_DIM } else { DEFAULT_PROBE_POINTS };
        let domain = default_probe_domain(dim);
        let floor = match self.nondegeneracy_floor {
            Some(c) => {
                if !(c > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "nondegeneracy_floor",
                        value: c,
                        constraint: "must be positive".into(),
                    });
                }
                c
            }
            None => 0.5 * min_abs_det(&field, &domain, points)?.0,
        };
        field.nondegeneracy_floor = floor;
        nondegeneracy_check(&field, &domain, points)?;
        check_bounds(&field, &domain, points)?;
        Ok(field)
    }
}

impl CoefficientField {
    /// Field from closures; used for custom (non-catalog) coefficients.
    pub fn from_maps(
        drift: Arc<dyn MatrixMap>,
        diffusion: Arc<dyn MatrixMap>,
        jump: Arc<dyn MatrixMap>,
        nondegeneracy_floor: f64,
    ) -> Result<Self> {
        let dim = diffusion.rows();
        if diffusion.cols() != dim || drift.rows() != dim || drift.cols() != 1 || jump.rows() != dim {
            return Err(Error::Dimension("need a: d x 1, b: d x d, G: d x m".into()));
        }
        Ok(Self {
            dim,
            jump_dim: jump.cols(),
            drift,
            diffusion,
            jump,
            beta_a: f64::INFINITY,
            beta_b: f64::INFINITY,
            beta_g: f64::INFINITY,
            bounds: [f64::INFINITY; 3],
            nondegeneracy_floor,
            constant: [false; 3],
            drift_is_zero: false,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.constant.iter().all(|&c| c)
    }

    pub fn diffusion_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_row_slice(d, d, &self.diffusion.eval_vec(x))
    }
}

/// Builds a catalog field with the diffusion `b` of kind `name`.
///
/// `params` holds the fields of that catalog kind plus optional `dim`
/// (default 1), `jump_dim` (default 1), `drift` and `jump` field specs and
/// `nondegeneracy_floor`.
pub fn builtin_field(name: &str, params: &serde_json::Value) -> Result<CoefficientField> {
    const KINDS: [&str; 4] = ["constant", "affine-bounded", "sinusoidal", "hoelder-perturbed"];
    if !KINDS.contains(&name) {
        return Err(Error::UnknownCatalog(name.to_string()));
    }
    let mut obj = params
        .as_object()
        .cloned()
        .ok_or_else(|| Error::Config(vec!["builtin_field params must be an object".into()]))?;
    let take_usize = |obj: &mut serde_json::Map<String, serde_json::Value>, key: &str| -> Result<usize> {
        match obj.remove(key) {
            None => Ok(1),
            Some(v) => v
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Config(vec![format!("`{key}` must be a positive integer")])),
        }
    };
    let dim = take_usize(&mut obj, "dim")?;
    let jump_dim = take_usize(&mut obj, "jump_dim")?;
    let drift = match obj.remove("drift") {
        Some(v) => serde_json::from_value(v)?,
        None => FieldSpec::zero(),
    };
    let jump = match obj.remove("jump") {
        Some(v) => serde_json::from_value(v)?,
        None => FieldSpec::zero(),
    };
    let floor = match obj.remove("nondegeneracy_floor") {
        Some(v) => Some(serde_json::from_value(v)?),
        None => None,
    };
    obj.insert("kind".into(), serde_json::Value::String(name.into()));
    let diffusion: FieldSpec = serde_json::from_value(serde_json::Value::Object(obj))?;
    CoefficientFieldSpec {
        drift,
        diffusion,
        jump,
        nondegeneracy_floor: floor,
    }
    .build(dim, jump_dim)
}

fn min_abs_det(field: &CoefficientField, domain: &Domain, points: usize) -> Result<(f64, Vec<f64>)> {
    let mut best = (f64::INFINITY, Vec::new());
    for x in domain.grid(points)? {
        let det = field.diffusion_matrix(&x).determinant().abs();
        if det < best.0 {
            best = (det, x);
        }
    }
    Ok(best)
}

/// Minimum of `|det b|` over a `grid_points`-per-axis grid of `domain`;
/// fails if it falls below the field's declared floor.
pub fn nondegeneracy_check(field: &CoefficientField, domain: &Domain, grid_points: usize) -> Result<f64> {
    if grid_points < 2 {
        return Err(Error::InvalidParameter {
            name: "grid_points",
            value: grid_points as f64,
            constraint: "need at least 2 points per axis".into(),
        });
    }
    if domain.dim() != field.dim {
        return Err(Error::Dimension("probe domain and field dimensions differ".into()));
    }
    let (det, point) = min_abs_det(field, domain, grid_points)?;
    if !(det >= field.nondegeneracy_floor) || det == 0.0 {
        return Err(Error::Degenerate {
            point,
            det,
            floor: field.nondegeneracy_floor,
        });
    }
    Ok(det)
}

fn check_bounds(field: &CoefficientField, domain: &Domain, points: usize) -> Result<()> {
    let maps: [(&dyn MatrixMap, &str); 3] = [
        (field.drift.as_ref(), "a"),
        (field.diffusion.as_ref(), "b"),
        (field.jump.as_ref(), "G"),
    ];
    for x in domain.grid(points)? {
        for ((map, name), bound) in maps.iter().zip(field.bounds) {
            let v = map.eval_vec(&x);
            if let Some(e) = v.iter().find(|e| !(e.abs() <= bound * (1.0 + 1e-12))) {
                return Err(Error::Bound {
                    point: x.clone(),
                    what: format!("|{name}| entry {e} exceeds declared bound {bound}"),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dyadic_weierstrass_matches_direct_sum() {
        let w = Weierstrass::new(2.0, 0.75, 12);
        for k in 0..200 {
            let s = -7.0 + 0.07 * k as f64;
            let direct: f64 = w.freqs.iter().zip(&w.weights).map(|(f, c)| c * (f * s).cos()).sum();
            assert!((w.eval(s) - direct).abs() < 1e-11, "s = {s}");
        }
    }

    #[test]
    fn constant_diffusion_determinant() {
        let f = builtin_field("constant", &json!({"value": 2.0})).unwrap();
        let det = nondegeneracy_check(&f, &Domain::cube(1, -5.0, 5.0), 11).unwrap();
        assert_eq!(det, 2.0);
    }

    #[test]
    fn sinusoidal_minimum() {
        let f = builtin_field("sinusoidal", &json!({"offset": 1.5, "amplitude": 0.25, "wave": [1.0]})).unwrap();
        // grid through -π/2 where sin attains -1
        let det = nondegeneracy_check(&f, &Domain::cube(1, -std::f64::consts::PI, std::f64::consts::PI), 129).unwrap();
        assert!((det - 1.25).abs() < 1e-12, "{det}");
    }

    #[test]
    fn identity_has_unit_determinant() {
        let f = builtin_field("constant", &json!({"value": 1.0, "dim": 3})).unwrap();
        assert_eq!(nondegeneracy_check(&f, &Domain::cube(3, -1.0, 1.0), 3).unwrap(), 1.0);
    }

    #[test]
    fn diagonal_sinusoid_in_two_dimensions() {
        let f = builtin_field(
            "sinusoidal",
            &json!({"dim": 2, "offset": 1.0, "amplitude": [[0.0, 0.0], [0.0, 0.5]], "wave": [1.0, 0.0]}),
        )
        .unwrap();
        let pi = std::f64::consts::PI;
        // explicit minimiser: x₁ = -π/2 is on the 129-point grid of [-π, π]
        let det = nondegeneracy_check(&f, &Domain::cube(2, -pi, pi), 129).unwrap();
        assert!((det - 0.5).abs() < 1e-12, "{det}");
    }

    #[test]
    fn degenerate_at_origin_is_reported() {
        let b = Arc::new(FnMap::new(1, 1, |x: &[f64], out: &mut [f64]| out[0] = x[0]));
        let zero = Arc::new(FnMap::new(1, 1, |_: &[f64], out: &mut [f64]| out[0] = 0.0));
        let f = CoefficientField::from_maps(zero.clone(), b, zero, 1e-3).unwrap();
        let err = nondegeneracy_check(&f, &Domain::cube(1, -1.0, 1.0), 21).unwrap_err();
        match err {
            Error::Degenerate { point, .. } => assert!(point[0].abs() < 1e-12),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_catalog_name() {
        assert!(matches!(builtin_field("spline", &json!({})), Err(Error::UnknownCatalog(_))));
    }

    #[test]
    fn perturbation_violating_nondegeneracy_is_rejected() {
        let r = builtin_field(
            "hoelder-perturbed",
            &json!({"base": {"kind": "constant", "value": 0.5}, "amplitude": -0.5, "beta": 0.5, "wave": [1.0],
                    "nondegeneracy_floor": 0.1}),
        );
        assert!(matches!(r, Err(Error::Degenerate { .. })), "{r:?}");
    }

    #[test]
    fn catalog_fields_respect_bounds() {
        let specs = [
            json!({"kind": "affine-bounded", "offset": 1.0, "slope": 0.5, "wave": [2.0]}),
            json!({"kind": "sinusoidal", "offset": 2.0, "amplitude": 0.3, "wave": [1.0], "phase": 0.2}),
            json!({"kind": "hoelder-perturbed", "base": {"kind": "sinusoidal", "offset": 2.0, "amplitude": 0.3, "wave": [1.0]},
                   "amplitude": 0.4, "beta": 0.6, "wave": [3.0]}),
        ];
        for s in specs {
            let spec: FieldSpec = serde_json::from_value(s).unwrap();
            let map = spec.build(1, 1, 1).unwrap();
            let bound = map.sup_bound();
            for k in 0..=4000 {
                let x = -20.0 + 40.0 * k as f64 / 4000.0;
                assert!(map.eval_vec(&[x])[0].abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn declared_regularity() {
        let spec: FieldSpec = serde_json::from_value(json!({"kind": "hoelder-perturbed",
            "base": {"kind": "constant", "value": 2.0}, "amplitude": 0.1, "beta": 0.75, "wave": [1.0]}))
        .unwrap();
        assert_eq!(spec.regularity(), 0.75);
        assert_eq!(FieldSpec::zero().regularity(), f64::INFINITY);
    }
}
