//! Compound-Poisson increments of `Z` against closed-form moments.

use levy_euler::levy::{levy_increment, moment_report, Atom, JumpDistribution, LevyMeasureSpec};
use levy_euler::rng::{Purpose, StreamKey};
use levy_euler::stats::Moments;

fn main() -> levy_euler::Result<()> {
    let spec = LevyMeasureSpec {
        rate: 3.0,
        jump: JumpDistribution::Atoms {
            atoms: vec![
                Atom { point: vec![1.0], prob: 0.5 },
                Atom { point: vec![-1.0], prob: 0.5 },
            ],
        },
        tail_moment_order: 1.0,
        driver_alpha: 0.5,
    };
    let report = moment_report(&spec, 0.5, 1.0)?;
    println!("∫_{{|y|≤1}} |y|^α π(dy) = {}, ∫_{{|y|>1}} |y|^μ π(dy) = {}", report.small_moment, report.tail_moment);
    let key = StreamKey::new(9, Purpose::Diagnostic);
    let mut m = Moments::default();
    for i in 0..100_000 {
        m.push(levy_increment(&spec, 1.0, &mut key.stream(i))?[0]);
    }
    println!("mean {:+.4} (exact 0), variance {:.4} (exact λ·E[y²] = 3)", m.mean, m.variance());
    Ok(())
}
