//! Generator `A + B` of the SDE at `x0` by quadrature against
//! `(E u(Y_h) − u(x0)) / h` from one Euler step.

use std::path::PathBuf;

use levy_euler::config::parse_config;
use levy_euler::harness::generator_consistency_check;

fn main() -> levy_euler::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/generator_check.json");
    let config = parse_config(&path)?;
    let exp = config.experiment()?;
    let g = &config.generator;
    let u = g.u.clone().or(config.test.g.clone()).expect("config names a test function");
    let check = generator_consistency_check(&u, &exp, &[1e-2, 5e-3, 1e-3], 200_000, 3, &g.quadrature)?;
    for p in &check.panel {
        println!("h = {:.0e}: {:+.5} ± {:.5}", p.h, p.value, p.stderr);
    }
    println!("quadrature     {:+.6} (error bound {:.1e})", check.quadrature, check.quadrature_error);
    println!("extrapolated   {:+.6} ± {:.6}", check.monte_carlo, check.monte_carlo_stderr);
    println!("relative error {:.3e}", check.relative_error);
    Ok(())
}
