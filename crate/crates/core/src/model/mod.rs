//! Coefficient fields, test functions and regularity probes.

mod field;
mod function;
mod holder;

pub use field::{
    builtin_field, default_probe_domain, nondegeneracy_check, CatalogMap, CoefficientField, CoefficientFieldSpec,
    FieldSpec, FnMap, MatrixMap, MatrixValue, Weierstrass,
};
pub use function::{GaussianBump, Growth, TestFunction};
pub use holder::{holder_quotients_by_level, holder_seminorm_estimate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo₁, hi₁] × … × [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension("domain corners must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidParameter {
                name: "domain",
                value: f64::NAN,
                constraint: "need lo < hi on every axis".into(),
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Tensor grid with `points` nodes per axis, endpoints included.
    pub fn grid(&self, points: usize) -> Result<Vec<Vec<f64>>> {
        if points < 2 {
            return Err(Error::InvalidParameter {
                name: "points",
                value: points as f64,
                constraint: "need at least 2 points per axis".into(),
            });
        }
        let d = self.dim();
        let total = points.checked_pow(d as u32).filter(|&t| t <= 50_000_000).ok_or_else(|| {
            Error::Insufficient(format!("{points}^{d} probe points is too many"))
        })?;
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            out.push(
                (0..d)
                    .map(|k| self.lo[k] + (self.hi[k] - self.lo[k]) * idx[k] as f64 / (points - 1) as f64)
                    .collect(),
            );
            for i in idx.iter_mut() {
                *i += 1;
                if *i < points {
                    break;
                }
                *i = 0;
            }
        }
        Ok(out)
    }
}
