//! Randomized invariants of the short cycle and the invariant measure on a
//! coarse grid.

use std::sync::{Arc, OnceLock};

use epp_core::ergodic::MeasureSolver;
use epp_core::grid::{build_grid, Grid, GridConfig};
use epp_core::model::{catalogue, Functional, OscillatorParams};
use proptest::prelude::*;

const NONNEGATIVE: &[&str] = &["one", "y2", "z2", "abs_y", "plastic_plus"];
const ANY: &[&str] = &["one", "y", "z", "y2", "z2", "abs_y", "yz", "plastic_plus", "y_plus_z2"];

fn solver() -> &'static (Arc<Grid>, MeasureSolver) {
    static S: OnceLock<(Arc<Grid>, MeasureSolver)> = OnceLock::new();
    S.get_or_init(|| {
        let g = build_grid(
            &OscillatorParams::default(),
            &GridConfig {
                half_width: 4.0,
                ny: 41,
                nz: 15,
                tol: 1e-11,
            },
        )
        .unwrap();
        let s = MeasureSolver::new(&g, 0.0).unwrap();
        (g, s)
    })
}

fn f(name: &str) -> Functional {
    catalogue(name, &OscillatorParams::default(), 4.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn short_cycle_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, i in 0..ANY.len(), j in 0..ANY.len()) {
        let (_, s) = solver();
        let (fi, fj) = (f(ANY[i]), f(ANY[j]));
        let combo = Functional::linear_combination(a, &fi, b, &fj);
        let lhs = s.short_cycle(&combo).unwrap();
        let rhs = s.short_cycle(&fi).unwrap().combine(a, &s.short_cycle(&fj).unwrap(), b).unwrap();
        let scale = 1.0 + lhs.sup_norm();
        prop_assert!(lhs.max_diff(&rhs).unwrap() <= 1e-9 * scale);
    }

    #[test]
    fn nonnegative_sources_give_nonnegative_cycles(a in 0.0f64..2.0, b in 0.0f64..2.0, i in 0..NONNEGATIVE.len(), j in 0..NONNEGATIVE.len()) {
        let (_, s) = solver();
        let combo = Functional::linear_combination(a, &f(NONNEGATIVE[i]), b, &f(NONNEGATIVE[j]));
        let v = s.short_cycle(&combo).unwrap();
        prop_assert!(v.values().iter().all(|&x| x >= -1e-12));
        prop_assert!(s.measure_from(&v).unwrap().nu >= -1e-12);
    }

    #[test]
    fn measure_is_linear_and_normalized(c in -5.0f64..5.0, a in -2.0f64..2.0, i in 0..ANY.len()) {
        let (_, s) = solver();
        let fi = f(ANY[i]);
        let nu = s.measure(&fi).unwrap().nu;
        let shifted = s.measure(&fi.shifted(c)).unwrap().nu;
        prop_assert!((shifted - (nu - c)).abs() <= 1e-9 * (1.0 + c.abs() + nu.abs()));
        let scaled = s.measure(&Functional::linear_combination(a, &fi, 0.0, &fi)).unwrap().nu;
        prop_assert!((scaled - a * nu).abs() <= 1e-9 * (1.0 + nu.abs()));
    }
}

#[test]
fn measure_is_a_probability_on_indicators() {
    // ν(1{D⁺}) + ν(1{D⁻}) + ν(1{D}) = 1 with each part in [0, 1].
    let (_, s) = solver();
    let p = OscillatorParams::default();
    let plus = catalogue("plastic_plus", &p, 4.0).unwrap();
    let minus = Functional::new("plastic_minus", plus.symmetry(), 1.0, |_, _, r| {
        f64::from(u8::from(r == epp_core::model::Region::MinusRay))
    });
    let (a, b) = (s.measure(&plus).unwrap().nu, s.measure(&minus).unwrap().nu);
    assert!(a > 0.0 && b > 0.0 && a + b < 1.0);
    assert!((a - b).abs() < 1e-10, "plastic phases balance by symmetry: {a} vs {b}");
}
