use std::f64::consts::TAU;
use std::sync::Arc;

use ccf::basedyn::*;
use ccf::cocycle::RealFn;
use ccf::cohomology::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn circle() -> BaseSystem {
    BaseSystem::circle(GOLDEN).unwrap()
}

/// Closed-form solution of w∘f − w = cos 2πx on the golden rotation.
fn fourier_w(x: f64) -> f64 {
    let e = |t: f64| Complex64::from_polar(1.0, TAU * t);
    (e(x) / (e(GOLDEN) - 1.0)).re
}

#[test]
fn circle_solution_against_fourier_oracle() {
    let base = circle();
    let phi = RealFn::cos(1.0, 1, 0);
    let delta = 0.05;
    let sol = solve_circle(&phi, delta, &base).unwrap();
    let chk = sol.verify(10_000);
    assert!(chk.residual < 1e-8, "{chk:?}");
    assert!(chk.distance < 7.0 * delta, "{chk:?}");
    assert!(sol.a0.abs() < delta);
    // d = w − w* solves d∘f − d = φ̃ − φ − a₀, with w* the Fourier solution.
    let mut worst = 0.0f64;
    for x in base.grid(2_000) {
        let BasePoint::Circle(t) = x else { unreachable!() };
        let fx = base.step(&x, 1);
        let BasePoint::Circle(ft) = fx else { unreachable!() };
        let d0 = sol.w(&x) - fourier_w(t);
        let d1 = sol.w(&fx) - fourier_w(ft);
        let lhs = d1 - d0;
        let rhs = sol.phi_tilde(&x) - phi.value(&base, &x) - sol.a0;
        worst = worst.max((lhs - rhs).abs());
    }
    assert!(worst < 1e-6, "coboundary mismatch {worst}");
}

#[test]
fn skew_shift_solution() {
    let base = BaseSystem::skew_shift(GOLDEN).unwrap();
    let phi = RealFn::cos(1.0, 0, 1);
    let delta = 0.1;
    let sol = solve_circle(&phi, delta, &base).unwrap();
    let chk = sol.verify(10_000);
    assert!(chk.residual < 1e-8, "{chk:?}");
    assert!(chk.distance < 7.0 * delta, "{chk:?} {sol:?}");
}

#[test]
fn seven_delta_bound_on_trig_polynomials() {
    let base = BaseSystem::circle(SILVER).unwrap();
    let phi = RealFn::cos(0.8, 1, 0)
        .plus(&RealFn::sin(0.5, 3, 0), base)
        .plus(&RealFn::constant(0.25), base);
    for delta in [0.2, 0.05] {
        let sol = solve_circle(&phi, delta, &base).unwrap();
        let chk = sol.verify(10_000);
        assert!(chk.residual < 1e-8 && chk.distance < 7.0 * delta, "δ = {delta}: {chk:?}");
        assert!((sol.a0 - 0.25).abs() < delta);
    }
}

#[test]
fn cantor_leading_digit_exhaustive() {
    let base = BaseSystem::odometer(2, 12).unwrap();
    let phi = RealFn::custom(move |x| if base.digit(x, 0) == Some(0) { 1.0 } else { -1.0 });
    let delta = 0.3;
    let sol = solve_cantor(&phi, delta, &base).unwrap();
    let chk = sol.verify(1 << 12);
    assert_eq!(chk.points, 1 << 12);
    assert!(chk.residual < 1e-10, "{chk:?}");
    assert!(chk.distance < delta, "{chk:?}");
}

#[test]
fn cantor_deep_level_reports_needed_depth() {
    let base = BaseSystem::odometer(2, 3).unwrap();
    let phi = RealFn::custom(move |x| if base.digit(x, 2) == Some(0) { 1.0 } else { -1.0 });
    match solve_cantor(&phi, 0.01, &base) {
        Err(ccf::Error::Budget(msg)) => assert!(msg.contains("depth"), "{msg}"),
        other => panic!("expected a depth error, got {other:?}"),
    }
}

#[test]
fn translation_section_matches_brute_force() {
    let base = circle();
    let castle = Castle::new(GOLDEN, 6).unwrap();
    let phi = RealFn::cos(1.0, 1, 0).plus(&RealFn::sin(0.3, 2, 0), base);
    let skew = Translation { base, phi: phi.clone(), shift: 0.0 };
    // Any y₀ that satisfies compatibility: the restriction of a genuine
    // solution of the translation equation.
    let exact = move |t: f64| {
        let e = |s: f64| Complex64::from_polar(1.0, TAU * s);
        let a = (e(t) / (e(GOLDEN) - 1.0)).re;
        let b = 0.3 * (e(2.0 * t) * Complex64::new(0.0, -1.0) / (e(2.0 * GOLDEN) - 1.0)).re;
        a + b
    };
    let y0 = Arc::new(move |p: &BasePoint| Ok(exact(base.coords(p)[0])));
    let sec = almost_invariant_section(skew, &castle, y0).unwrap();
    for j in 0..3_000 {
        let x = BasePoint::Circle((j as f64 + 0.37) / 3_000.0);
        let tau = return_time(&base, &x, &castle).unwrap();
        let mut brute = exact(base.coords(&base.step(&x, tau as i64))[0]);
        for k in 0..tau {
            brute -= phi.value(&base, &base.step(&x, k as i64));
        }
        assert!((sec.value(&x).unwrap() - brute).abs() < 1e-9);
        // The genuine solution is reproduced everywhere.
        assert!((sec.value(&x).unwrap() - exact(base.coords(&x)[0])).abs() < 1e-9);
    }
}

#[test]
fn coboundary_means_telescope() {
    let base = circle();
    let phi = RealFn::cos(1.0, 1, 0).plus(&RealFn::cos(0.4, 2, 0), base);
    let sol = solve_circle(&phi, 0.05, &base).unwrap();
    let chk = sol.verify(2_000);
    // Sample φ̃ on a fine grid and sum along an orbit of length 10⁵.
    let n = 100_000u64;
    let x = BasePoint::Circle(0.123);
    let mut total = 0.0;
    for k in 0..n {
        total += sol.phi_tilde(&base.step(&x, k as i64)) - sol.a0;
    }
    assert!((total / n as f64).abs() < 10.0 * chk.sup_w.max(1e-12) / n as f64 + 1e-12);
}

#[test]
fn almost_invariant_section_is_continuous_across_floors() {
    let base = circle();
    let sol = solve_circle(&RealFn::cos(1.0, 1, 0), 0.05, &base).unwrap();
    let castle = sol.castle().unwrap().clone();
    let eps = 1e-9;
    // Modulus of continuity of w on a cell of width eps, bounded through
    // the Lipschitz constant of φ summed along the longest return.
    let modulus = TAU * (castle.q_i + castle.q_next) as f64 * eps;
    for tower in [Tower::Main, Tower::Side] {
        for n in 0..castle.tower_height(tower) {
            let edge = castle.floor_point(tower, n, 0.0);
            let (a, b) = (BasePoint::Circle(frac(edge - eps)), BasePoint::Circle(frac(edge + eps)));
            let jump_w1 = (sol.w1(&a).unwrap() - sol.w1(&b).unwrap()).abs();
            let jump_w = (sol.w(&a) - sol.w(&b)).abs();
            let jump_phi = (sol.phi_tilde(&a) - sol.phi_tilde(&b)).abs();
            assert!(jump_w1 < 10.0 * modulus, "w₁ jump {jump_w1} at {tower:?} {n}");
            assert!(jump_w < 10.0 * modulus, "w jump {jump_w} at {tower:?} {n}");
            assert!(jump_phi < 10.0 * modulus, "φ̃ jump {jump_phi} at {tower:?} {n}");
        }
    }
}

#[test]
fn report_round_trips() {
    let base = circle();
    let sol = solve_circle(&RealFn::sin(0.7, 1, 0), 0.1, &base).unwrap();
    let rep = sol.report(500);
    let json = serde_json::to_string(&rep).unwrap();
    let back: CohomologyReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
    assert_eq!(back.recheck(), rep.check);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solutions_satisfy_the_equation(a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, c in -2.0f64..2.0, delta in 0.05f64..0.3) {
        let base = circle();
        let phi = RealFn::cos(a1, 1, 0)
            .plus(&RealFn::sin(a2, 2, 0), base)
            .plus(&RealFn::constant(c), base);
        let sol = solve_circle(&phi, delta, &base).unwrap();
        let chk = sol.verify(1_000);
        prop_assert!(chk.residual < 1e-8);
        prop_assert!(chk.distance < 7.0 * delta);
    }

    #[test]
    fn cantor_solutions_are_exact(amps in prop::collection::vec(-1.0f64..1.0, 4), delta in 0.05f64..0.5) {
        let base = BaseSystem::odometer(3, 8).unwrap();
        let table: Vec<f64> = (0..81).map(|k| amps[k % 4] * ((k / 4) as f64).cos()).collect();
        let phi = RealFn::Table { values: table };
        let sol = solve_cantor(&phi, delta, &base).unwrap();
        let chk = sol.verify(2_000);
        prop_assert!(chk.residual < 1e-10);
        prop_assert!(chk.distance < delta);
    }
}
