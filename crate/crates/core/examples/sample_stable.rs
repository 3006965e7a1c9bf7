//! Isotropic α-stable increments: empirical characteristic function against
//! `exp(−t c_{d,α} |ξ|^α)`.

use levy_euler::rng::{Purpose, StreamKey};
use levy_euler::stable::{char_exponent_constant, IsotropicSampler, StableDriverSpec};

fn main() -> levy_euler::Result<()> {
    let (d, alpha, dt, n) = (2, 1.5, 0.5, 100_000u64);
    let sampler = IsotropicSampler::new(StableDriverSpec::new(alpha, d)?)?;
    let key = StreamKey::new(1, Purpose::Diagnostic);
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|i| sampler.increment(dt, &mut key.stream(i)))
        .collect::<levy_euler::Result<_>>()?;
    let c = char_exponent_constant(d, alpha)?.value;
    println!("d = {d}, α = {alpha}, t = {dt}, c = {c:.6}");
    println!("{:>10} {:>10} {:>10} {:>10}", "|ξ|", "empirical", "exact", "stderr");
    for r in [0.25, 0.5, 1.0, 1.5, 2.0] {
        let xi = [r / 2f64.sqrt(), r / 2f64.sqrt()];
        let vals: Vec<f64> = samples.iter().map(|x| (xi[0] * x[0] + xi[1] * x[1]).cos()).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = (-dt * c * r.powf(alpha)).exp();
        println!("{r:>10} {mean:>10.5} {exact:>10.5} {:>10.5}", (var / n as f64).sqrt());
    }
    Ok(())
}
