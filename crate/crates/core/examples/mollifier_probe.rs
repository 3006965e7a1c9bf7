//! Mollification of a C^β function: `sup|f^ε − f| ~ ε^β` and
//! `sup|∂^α f^ε| ~ ε^{β−α}`.

use levy_euler::generator::mollifier_scaling_probe;
use levy_euler::model::TestFunction;

fn main() -> levy_euler::Result<()> {
    let (beta, alpha) = (0.5, 1.5);
    let f = TestFunction::RadialPower {
        center: vec![0.0],
        power: beta,
        cutoff: 1.0,
        scale: 1.0,
    };
    let epsilons: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
    let probe = mollifier_scaling_probe(&f, alpha, &epsilons)?;
    println!("{:>10} {:>14} {:>14}", "epsilon", "sup|f^e - f|", "sup|d^a f^e|");
    for ((e, s), l) in probe.epsilons.iter().zip(&probe.sup_error).zip(&probe.sup_frac_laplacian) {
        println!("{e:>10.5} {s:>14.6e} {l:>14.6e}");
    }
    println!("slope of sup|f^e - f|: {:.3} (expected {beta})", probe.slope_sup_error);
    println!("slope of sup|d^a f^e|: {:.3} (expected {})", probe.slope_frac_laplacian, beta - alpha);
    Ok(())
}
