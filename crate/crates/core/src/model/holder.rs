use crate::error::{Error, Result};
use crate::model::Domain;

const MAX_PROBE_POINTS: usize = 50_000_000;

/// Largest Hölder (β < 1) or Zygmund (β = 1) difference quotient at each
/// dyadic level `j = 1..=levels`, with steps `h = 2^{-j}·side` along each
/// axis and base points on the level-`j` grid.
pub fn holder_quotients_by_level(
    f: &dyn Fn(&[f64]) -> f64,
    beta: f64,
    domain: &Domain,
    levels: u32,
) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::InvalidParameter {
            name: "levels",
            value: levels as f64,
            constraint: "need at least 2 levels".into(),
        });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
            constraint: "must lie in (0, 1]".into(),
        });
    }
    let d = domain.dim();
    let zygmund = beta == 1.0;
    let mut out = Vec::with_capacity(levels as usize);
    for j in 1..=levels {
        let cells = 1usize << j;
        let per_axis = cells + 1;
        let total = per_axis
            .checked_pow(d as u32)
            .filter(|&t| t <= MAX_PROBE_POINTS)
            .ok_or_else(|| Error::Insufficient(format!("level {j} needs more than {MAX_PROBE_POINTS} probe points")))?;
        let steps: Vec<f64> = (0..d).map(|k| (domain.hi[k] - domain.lo[k]) / cells as f64).collect();
        let point = |idx: &[usize], out: &mut [f64]| {
            for k in 0..d {
                out[k] = domain.lo[k] + steps[k] * idx[k] as f64;
            }
        };
        let mut idx = vec![0usize; d];
        let (mut x, mut y, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut best: f64 = 0.0;
        for _ in 0..total {
            point(&idx, &mut x);
            let fx = f(&x);
            for k in 0..d {
                let h = steps[k];
                if idx[k] + 1 >= per_axis || (zygmund && idx[k] == 0) {
                    continue;
                }
                y.copy_from_slice(&x);
                y[k] += h;
                let q = if zygmund {
                    z.copy_from_slice(&x);
                    z[k] -= h;
                    (f(&y) - 2.0 * fx + f(&z)).abs() / h
                } else {
                    (f(&y) - fx).abs() / h.powf(beta)
                };
                best = best.max(q);
            }
            for i in idx.iter_mut() {
                *i += 1;
                if *i < per_axis {
                    break;
                }
                *i = 0;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Running maximum of [`holder_quotients_by_level`] up to `levels`.
pub fn holder_seminorm_estimate(f: &dyn Fn(&[f64]) -> f64, beta: f64, domain: &Domain, levels: u32) -> Result<f64> {
    Ok(holder_quotients_by_level(f, beta, domain, levels)?
        .into_iter()
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_field, TestFunction};
    use crate::stats::fit_line;
    use serde_json::json;

    fn interval() -> Domain {
        Domain::cube(1, -1.0, 1.0)
    }

    #[test]
    fn constant_has_zero_seminorm() {
        for beta in [0.3, 0.7, 1.0] {
            assert_eq!(holder_seminorm_estimate(&|_| 3.5, beta, &interval(), 8).unwrap(), 0.0);
        }
    }

    #[test]
    fn affine_is_zygmund_null() {
        let v = holder_seminorm_estimate(&|x| 2.0 * x[0] - 1.0, 1.0, &interval(), 10).unwrap();
        assert!(v < 1e-12, "{v}");
    }

    #[test]
    fn square_root_matches_brute_force() {
        let f = |x: &[f64]| x[0].abs().sqrt();
        // brute-force oracle over all pairs of a fine uniform grid
        let n = 801;
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let mut oracle: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                oracle = oracle.max((f(&[xs[j]]) - f(&[xs[i]])).abs() / (xs[j] - xs[i]).sqrt());
            }
        }
        assert!((1.0..=2f64.sqrt() + 1e-12).contains(&oracle));
        let coarse = holder_seminorm_estimate(&f, 0.5, &interval(), 6).unwrap();
        let fine = holder_seminorm_estimate(&f, 0.5, &interval(), 14).unwrap();
        assert!((1.0..=2f64.sqrt()).contains(&fine));
        assert!((fine - coarse).abs() <= 0.05 * coarse);
        assert!(fine <= oracle + 1e-12);
    }

    #[test]
    fn monotone_and_shift_invariant() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() + x[0].abs().powf(0.4);
        let g = |x: &[f64]| f(x) + 10.0;
        let mut prev = 0.0;
        for levels in 2..12 {
            let v = holder_seminorm_estimate(&f, 0.6, &interval(), levels).unwrap();
            assert!(v >= prev);
            let shifted = holder_seminorm_estimate(&g, 0.6, &interval(), levels).unwrap();
            assert!((v - shifted).abs() <= 1e-9 * v);
            prev = v;
        }
    }

    #[test]
    fn radial_power_divergence_rate() {
        let beta = 0.4;
        let g = TestFunction::RadialPower {
            center: vec![0.0],
            power: beta,
            cutoff: 0.5,
            scale: 1.0,
        };
        let f = |x: &[f64]| g.eval(x);
        let at_beta = holder_quotients_by_level(&f, beta, &interval(), 14).unwrap();
        assert!((at_beta[13] - at_beta[8]).abs() < 1e-9 * at_beta[8]);
        let prime = 0.7;
        let q = holder_quotients_by_level(&f, prime, &interval(), 14).unwrap();
        let js: Vec<f64> = (6..=14).map(|j| j as f64).collect();
        let logs: Vec<f64> = (6..=14).map(|j| q[j - 1].log2()).collect();
        let slope = fit_line(&js, &logs).unwrap().slope;
        assert!((slope - (prime - beta)).abs() < 0.1, "{slope}");
    }

    #[test]
    fn hoelder_perturbed_field_regularity() {
        let field = builtin_field(
            "hoelder-perturbed",
            &json!({"base": {"kind": "constant", "value": 2.0}, "amplitude": 0.1, "beta": 0.75, "wave": [1.0]}),
        )
        .unwrap();
        let b = |x: &[f64]| field.diffusion.eval_vec(x)[0];
        let domain = interval();
        let at: Vec<f64> = (2..=18)
            .map(|levels| holder_seminorm_estimate(&b, 0.75, &domain, levels).unwrap())
            .collect();
        // stable once the grid resolves the truncation scale
        assert!(at[16] <= 1.05 * at[12], "{at:?}");
        let above = holder_quotients_by_level(&b, 0.9, &domain, 11).unwrap();
        let js: Vec<f64> = (4..=11).map(|j| j as f64).collect();
        let logs: Vec<f64> = (4..=11).map(|j| above[j - 1].log2()).collect();
        let slope = fit_line(&js, &logs).unwrap().slope;
        assert!(slope > 0.1, "{slope}");
        assert!(above[10] > 2.0 * above[3]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(holder_seminorm_estimate(&|_| 0.0, 0.5, &interval(), 1).is_err());
        assert!(holder_seminorm_estimate(&|_| 0.0, 1.5, &interval(), 4).is_err());
    }
}
