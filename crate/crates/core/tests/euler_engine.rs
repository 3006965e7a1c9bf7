use levy_euler::engine::{make_uniform_grid, monte_carlo, EulerScheme, TimeGrid};
use levy_euler::levy::{Atom, JumpDistribution, LevyMeasureSpec};
use levy_euler::model::CoefficientFieldSpec;
use levy_euler::rng::{Purpose, StreamKey};
use levy_euler::stable::StableDriverSpec;
use levy_euler::stats::ks_two_sample;
use proptest::prelude::*;

fn field(json: serde_json::Value) -> levy_euler::model::CoefficientField {
    serde_json::from_value::<CoefficientFieldSpec>(json).unwrap().build(1, 1).unwrap()
}

fn atoms(alpha: f64) -> LevyMeasureSpec {
    LevyMeasureSpec {
        rate: 1.5,
        jump: JumpDistribution::Atoms {
            atoms: vec![Atom { point: vec![0.8], prob: 0.4 }, Atom { point: vec![-0.3], prob: 0.6 }],
        },
        tail_moment_order: alpha,
        driver_alpha: alpha,
    }
}

fn terminal_sample(scheme: &EulerScheme, grid: &TimeGrid, level: u64) -> Vec<f64> {
    let key = StreamKey::new(5, Purpose::Diagnostic).level(level);
    (0..40_000)
        .map(|i| scheme.simulate(&[0.2], grid, None, &mut key.stream(i)).unwrap().terminal[0])
        .collect()
}

#[test]
fn constant_coefficients_are_exact_in_law() {
    for alpha in [0.8, 1.5, 2.0] {
        let drift = if alpha < 1.0 { 0.0 } else { 0.7 };
        let f = field(serde_json::json!({
            "drift": {"kind": "constant", "value": drift},
            "diffusion": {"kind": "constant", "value": 0.6},
            "jump": {"kind": "constant", "value": 1.2}
        }));
        let scheme = EulerScheme::new(f, StableDriverSpec::new(alpha, 1).unwrap(), Some(&atoms(alpha))).unwrap();
        let one = terminal_sample(&scheme, &make_uniform_grid(1.0, 1).unwrap(), 1);
        let many = terminal_sample(&scheme, &make_uniform_grid(1.0, 64).unwrap(), 2);
        let (_, p) = ks_two_sample(&one, &many);
        assert!(p > 0.01, "α = {alpha}: p = {p}");
    }
}

#[test]
fn monte_carlo_is_independent_of_worker_count() {
    let f = field(serde_json::json!({
        "drift": {"kind": "sinusoidal", "offset": 0.5, "amplitude": 1.0, "wave": [1.0]},
        "diffusion": {"kind": "hoelder-perturbed", "base": {"kind": "constant", "value": 1.0},
                      "amplitude": 0.3, "beta": 0.75, "wave": [1.0]},
        "jump": {"kind": "constant", "value": 0.5}
    }));
    let scheme = EulerScheme::new(f, StableDriverSpec::new(1.5, 1).unwrap(), Some(&atoms(1.5))).unwrap();
    let grid = make_uniform_grid(1.0, 16).unwrap();
    let run = |workers| {
        monte_carlo(StreamKey::new(9, Purpose::Terminal), 30_000, workers, |_, rng| {
            let r = scheme.simulate(&[0.0], &grid, None, rng)?;
            Ok((r.terminal[0].cos(), r.jump_count))
        })
        .unwrap()
    };
    let base = run(1);
    for w in [2, 3, 8] {
        let s = run(w);
        assert_eq!(s.mean().to_bits(), base.mean().to_bits());
        assert_eq!(s.stderr().to_bits(), base.stderr().to_bits());
        assert_eq!(s.jumps, base.jumps);
    }
}

#[test]
fn nonuniform_grid_with_constant_coefficients_matches_one_step() {
    let f = field(serde_json::json!({
        "drift": {"kind": "constant", "value": -0.4},
        "diffusion": {"kind": "constant", "value": 1.0}
    }));
    let z = LevyMeasureSpec { rate: 0.0, ..atoms(1.5) };
    let scheme = EulerScheme::new(f, StableDriverSpec::new(1.5, 1).unwrap(), Some(&z)).unwrap();
    let uneven = TimeGrid::new(vec![0.0, 0.1, 0.15, 0.6, 1.0]).unwrap();
    let a = terminal_sample(&scheme, &uneven, 3);
    let b = terminal_sample(&scheme, &make_uniform_grid(1.0, 1).unwrap(), 4);
    let (_, p) = ks_two_sample(&a, &b);
    assert!(p > 0.01, "p = {p}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noiseless_constant_drift_is_exact(a in -3.0f64..3.0, x0 in -5.0f64..5.0, n in 1usize..50) {
        // b = 0 is degenerate for the catalog, so the diffusion is made
        // negligible instead: 1e-300 · increment underflows against x0 + a t.
        let f = field(serde_json::json!({
            "drift": {"kind": "constant", "value": a},
            "diffusion": {"kind": "constant", "value": 1e-300},
            "nondegeneracy_floor": 1e-301
        }));
        let z = LevyMeasureSpec { rate: 0.0, ..atoms(1.5) };
        let scheme = EulerScheme::new(f, StableDriverSpec::new(1.5, 1).unwrap(), Some(&z)).unwrap();
        let grid = make_uniform_grid(2.0, n).unwrap();
        let r = scheme.simulate(&[x0], &grid, None, &mut StreamKey::new(1, Purpose::Diagnostic).stream(0)).unwrap();
        prop_assert!((r.terminal[0] - (x0 + 2.0 * a)).abs() <= 1e-12 * (1.0 + x0.abs() + a.abs()) * n as f64);
    }
}
