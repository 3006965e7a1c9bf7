//! A few Euler paths of an SDE with Hölder coefficients and compound-Poisson
//! jumps, then a Monte Carlo mean of the terminal value.

use levy_euler::engine::{make_uniform_grid, monte_carlo, EulerScheme};
use levy_euler::levy::{Atom, JumpDistribution, LevyMeasureSpec};
use levy_euler::model::CoefficientFieldSpec;
use levy_euler::rng::{Purpose, StreamKey};
use levy_euler::stable::StableDriverSpec;

fn main() -> levy_euler::Result<()> {
    let alpha = 1.5;
    let spec: CoefficientFieldSpec = serde_json::from_value(serde_json::json!({
        "drift": {"kind": "sinusoidal", "offset": 0.5, "amplitude": 1.0, "wave": [1.0]},
        "diffusion": {"kind": "hoelder-perturbed", "base": {"kind": "constant", "value": 1.0},
                      "amplitude": 0.3, "beta": 0.75, "wave": [1.0]},
        "jump": {"kind": "constant", "value": 0.5}
    }))
    .map_err(|e| levy_euler::Error::Io(e.to_string()))?;
    let z = LevyMeasureSpec {
        rate: 2.0,
        jump: JumpDistribution::Atoms {
            atoms: vec![
                Atom { point: vec![1.0], prob: 0.5 },
                Atom { point: vec![-1.0], prob: 0.5 },
            ],
        },
        tail_moment_order: 1.5,
        driver_alpha: alpha,
    };
    let scheme = EulerScheme::new(spec.build(1, 1)?, StableDriverSpec::new(alpha, 1)?, Some(&z))?;
    let grid = make_uniform_grid(1.0, 64)?;
    let key = StreamKey::new(42, Purpose::Diagnostic);
    for i in 0..5 {
        let path = scheme.simulate(&[0.0], &grid, None, &mut key.stream(i))?;
        println!("path {i}: Y_T = {:+.5}, jumps = {}", path.terminal[0], path.jump_count);
    }
    let summary = monte_carlo(key, 100_000, 4, |_, rng| {
        let path = scheme.simulate(&[0.0], &grid, None, rng)?;
        Ok((path.terminal[0].sin(), path.jump_count))
    })?;
    println!(
        "E[sin Y_T] ≈ {:.5} ± {:.5} over {} paths ({} jumps in total)",
        summary.mean(),
        summary.stderr(),
        summary.moments.n,
        summary.jumps
    );
    Ok(())
}
