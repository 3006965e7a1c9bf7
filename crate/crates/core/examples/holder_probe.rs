//! Dyadic Hölder quotients of a Weierstrass-perturbed coefficient: bounded
//! at the declared exponent, growing above it.

use levy_euler::model::{holder_quotients_by_level, CoefficientFieldSpec, Domain};

fn main() -> levy_euler::Result<()> {
    let beta = 0.75;
    let spec: CoefficientFieldSpec = serde_json::from_value(serde_json::json!({
        "diffusion": {"kind": "hoelder-perturbed", "base": {"kind": "constant", "value": 1.0},
                      "amplitude": 0.5, "beta": beta, "wave": [1.0]}
    }))
    .map_err(|e| levy_euler::Error::Io(e.to_string()))?;
    let field = spec.build(1, 1)?;
    let b = |x: &[f64]| {
        let mut out = [0.0];
        field.diffusion.eval(x, &mut out);
        out[0]
    };
    let domain = Domain::cube(1, -1.0, 1.0);
    for exponent in [0.5, beta, 0.95] {
        let q = holder_quotients_by_level(&b, exponent, &domain, 12)?;
        let shown: Vec<String> = q.iter().step_by(2).map(|v| format!("{v:.3}")).collect();
        println!("exponent {exponent:.2}: {}", shown.join(" "));
    }
    Ok(())
}
