//! Fractional Laplacian of a plane wave by quadrature against the closed form
//! `−c_{d,α} |ξ|^α cos⟨ξ, x⟩`.

use levy_euler::generator::{frac_laplacian, QuadratureSpec};
use levy_euler::model::TestFunction;
use levy_euler::stable::char_exponent_constant;

fn main() -> levy_euler::Result<()> {
    let c11 = char_exponent_constant(1, 1.0)?;
    println!("c_(1,1) = {:.12} (π = {:.12})", c11.value, std::f64::consts::PI);
    println!("{:>3} {:>5} {:>14} {:>14} {:>10}", "d", "alpha", "quadrature", "closed form", "rel err");
    for d in [1, 2] {
        for alpha in [0.5, 1.0, 1.5] {
            let mut freq = vec![0.0; d];
            freq[0] = 1.0;
            let u = TestFunction::PlaneWave { freq, phase: 0.0 };
            let x = vec![0.3; d];
            // The tail bound is a sup-norm bound; for oscillatory u the true
            // truncation error is far smaller, so a loose bound suffices. The
            // bound decays like R^{-α}, hence the looser setting at α = 0.5.
            // The angular integrand |θ₁|^α has a kink, so d = 2 gets more
            // nodes; 16 Gauss nodes resolve a unit-frequency wave on panels of
            // width 8.
            let q = QuadratureSpec {
                angular_nodes: if d == 1 { 64 } else { 256 },
                max_panel_width: 8.0,
                ..QuadratureSpec::with_tolerance(if alpha < 1.0 { 5e-2 } else { 1e-2 })
            };
            let v = frac_laplacian(&u, &x, alpha, &q)?;
            let exact = -char_exponent_constant(d, alpha)?.value * u.eval(&x);
            println!(
                "{d:>3} {alpha:>5} {:>14.9} {:>14.9} {:>10.2e}",
                v.value,
                exact,
                (v.value - exact).abs() / exact.abs()
            );
        }
    }
    Ok(())
}
