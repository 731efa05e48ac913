use std::f64::consts::{PI, TAU};

use ccf::basedyn::*;
use ccf::cocycle::*;
use ccf::hypgeom::*;
use ccf::rigidity::*;
use proptest::prelude::*;

fn circle() -> BaseSystem {
    BaseSystem::circle(GOLDEN).unwrap()
}

fn params() -> RigidityParams {
    RigidityParams {
        verify_grid: 2_000,
        ..RigidityParams::default()
    }
}

fn frame() -> Mat2 {
    Mat2::new(1.2, 0.5, 0.1, 0.875)
}

/// (1/n)·log‖Ã^n(x)‖ maximized over a few points.
fn growth_rate(a: &Cocycle, n: i64) -> f64 {
    let base = *a.base();
    base.grid(16)
        .iter()
        .map(|x| a.iterate(x, n).unwrap().log_norm() / n as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn rotation_input_is_left_alone() {
    let base = circle();
    let a = Cocycle::constant(base, Mat2::rotation(0.7));
    let rc = rotate_conjugate(&a, 0.1, &params()).unwrap();
    assert!(rc.report.check.distance < 1e-12, "{:?}", rc.report.check);
    assert!(rc.report.failures().is_empty(), "{:?}", rc.report.failures());
    for x in base.grid(50) {
        assert!(rc.section(&x).unwrap().0.norm() < 1e-12);
    }
}

#[test]
fn conjugated_rotation_cocycle() {
    let base = circle();
    let c = frame();
    let r = Cocycle::winding_rotation(base, RealFn::constant(0.0), [1, 0]);
    let a = Cocycle::from_fn(base, "C·R·C⁻¹", move |x| c * r.eval(x) * c.inv());
    let rc = rotate_conjugate(&a, 0.1, &params()).unwrap();
    let rep = &rc.report;
    assert!(rep.failures().is_empty(), "{:?} {:?}", rep.failures(), rep.check);
    assert_eq!(rep.recheck(), rep.check);
    assert!(growth_rate(&rc.perturbed, 20_000) < 1e-3);
}

#[test]
fn subcritical_schrodinger() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 0.0, RealFn::cos(0.3, 1, 0));
    let rc = rotate_conjugate(&a, 0.05, &params()).unwrap();
    let rep = &rc.report;
    assert!(rep.failures().is_empty(), "{:?} {:?}", rep.failures(), rep.check);
    // The perturbation is exactly conjugate to rotations, so B(f(x))ÃB(x)⁻¹
    // has unit determinant and orthonormal columns.
    for s in rep.samples.iter().step_by(97) {
        let r = s.b_next * s.a_tilde * s.b.inv();
        assert!((r.det() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn step_bound_and_conjugacy_agree() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 0.0, RealFn::cos(0.3, 1, 0));
    let rc = rotate_conjugate(&a, 0.05, &params()).unwrap();
    for x in base.grid(300) {
        let s = rc.sample(&x).unwrap();
        assert_eq!(rc.perturbed.eval(&x), s.a_tilde);
        assert_eq!(rc.conjugacy.eval(&x), s.b);
        assert!((s.a_tilde * s.a.inv()).dist(&Mat2::IDENTITY) < rc.report.step_limit());
    }
}

#[test]
fn uniformly_hyperbolic_input_is_rejected_by_rotation_stage() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 3.0, RealFn::constant(0.0));
    match rotate_conjugate(&a, 0.1, &params()) {
        Err(ccf::Error::Precondition(msg)) => assert!(msg.contains("reduce_uh")),
        other => panic!("expected precondition error, got {other:?}"),
    }
}

#[test]
fn cantor_rotation_conjugacy() {
    let base = BaseSystem::odometer(2, 14).unwrap();
    let c = frame();
    let a = Cocycle::from_fn(base, "odometer rotations", move |x| {
        let t = if base.digit(x, 0) == Some(0) { 0.3 } else { 1.1 };
        c * Mat2::rotation(t) * c.inv()
    });
    let rc = rotate_conjugate(&a, 0.1, &params()).unwrap();
    assert!(rc.report.failures().is_empty(), "{:?}", rc.report.check);
    let q = rc.report.column.unwrap();
    assert_eq!(q, 1 << rc.report.level.unwrap());
}

#[test]
fn uh_reduction_of_constant_schrodinger() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 3.0, RealFn::constant(0.0));
    let red = reduce_uh(&a, 0.1, &params()).unwrap();
    assert!((red.a0 - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-6, "{}", red.a0);
    let chk = red.report.check;
    assert!(chk.distance < 0.1 && chk.residual < 1e-8, "{chk:?}");
}

#[test]
fn uh_reduction_frame_is_balanced() {
    let base = circle();
    let c = frame();
    let a = Cocycle::constant(base, c * Mat2::diag_exp(2f64.ln()) * c.inv());
    let red = reduce_uh(&a, 0.1, &params()).unwrap();
    assert!((red.a0 - 2f64.ln()).abs() < 1e-9);
    assert!(red.report.frame_distortion <= c.norm() + 1e-9);
    assert!(red.report.check.residual < 1e-9);
}

#[test]
fn uh_reduction_of_varying_cocycle() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 3.5, RealFn::cos(0.4, 1, 0));
    let red = reduce_uh(&a, 0.1, &params()).unwrap();
    let chk = red.report.check;
    assert!(chk.distance < 0.1, "{chk:?}");
    assert!(chk.residual < 1e-7, "{chk:?}");
    assert_eq!(red.report.recheck(), chk);
}

#[test]
fn reduce_uh_needs_uniform_hyperbolicity() {
    let a = Cocycle::constant(circle(), Mat2::rotation(0.4));
    assert!(reduce_uh(&a, 0.1, &params()).is_err());
}

#[test]
fn constant_rotation_passes_through() {
    let base = circle();
    let a = Cocycle::constant(base, Mat2::rotation(1.3));
    let r = reduce_to_constant_rotation(&a, 0.1, &params()).unwrap();
    assert!((r.angle - 1.3).abs() < 1e-12);
    assert_eq!(r.report.check.distance, 0.0);
}

#[test]
fn winding_blocks_reduction() {
    let base = circle();
    let a = Cocycle::winding_rotation(base, RealFn::constant(0.0), [1, 0]);
    match reduce_to_constant_rotation(&a, 0.1, &params()) {
        Err(ccf::Error::Obstruction { windings }) => assert_eq!(windings[0], 1),
        other => panic!("expected obstruction, got {other:?}"),
    }
    assert!(matches!(approximate_by_uh(&a, 0.1, &params()), Err(ccf::Error::Obstruction { .. })));
}

#[test]
fn reduction_to_constant_rotation_is_consistent() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 0.0, RealFn::cos(0.3, 1, 0));
    let delta0 = 0.1;
    let r = reduce_to_constant_rotation(&a, delta0, &params()).unwrap();
    let chk = r.report.check;
    assert!(chk.distance < delta0, "{chk:?}");
    assert!(chk.residual < 1e-7, "{chk:?}");
    // ρ(Ã) − angle/π ∈ ℤα mod 1 (rotation numbers count half-turns), and
    // ρ(A) is close to ρ(Ã).
    let near_lattice = |rho: f64| {
        (-50..=50)
            .map(|k| centered(rho - r.angle / PI - k as f64 * GOLDEN).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let x0 = BasePoint::Circle(0.1);
    let rho_tilde = rotation_number(&r.perturbed, &x0, 200_000).unwrap();
    let rho_a = rotation_number(&a, &x0, 200_000).unwrap();
    assert!(near_lattice(rho_tilde) < 1e-4, "{rho_tilde} vs {}", r.angle);
    assert!(near_lattice(rho_a) < 2e-3, "{rho_a} vs {}", r.angle);
}

#[test]
fn drag_matches_brute_force() {
    let base = circle();
    let target = Mat2::rotation(PI / 2.0);
    let eps = 1e-3;
    let d = drag_to_constant(0.0, &target, &base, eps, 10_000).unwrap();
    let brute = (0..=10_000i64)
        .flat_map(|m| [m, -m])
        .find(|&k| centered(k as f64 * GOLDEN - 0.25).abs() * TAU < eps)
        .unwrap();
    assert_eq!(d.k.abs(), brute.abs());
    assert!(d.residual.abs() < eps);
    assert!(d.perturbed.eval(&BasePoint::Circle(0.0)).dist(&Mat2::rotation(0.0)) <= eps);
    for x in base.grid(200) {
        let b = d.conjugacy.eval(&x);
        let bn = d.conjugacy.eval(&base.step(&x, 1));
        let m = bn * d.perturbed.eval(&x) * b.inv();
        assert!(m.dist(&target) < 1e-9, "{m:?}");
    }
}

#[test]
fn drag_onto_elliptic_and_parabolic_targets() {
    let base = circle();
    let c = frame();
    let elliptic = c * Mat2::rotation(0.8) * c.inv();
    let parabolic = c * Mat2::new(1.0, 0.6, 0.0, 1.0) * c.inv();
    for target in [elliptic, parabolic, Mat2::IDENTITY.scale(-1.0)] {
        let d = drag_to_constant(0.4, &target, &base, 1e-3, 10_000).unwrap();
        for x in base.grid(100) {
            let b = d.conjugacy.eval(&x);
            let bn = d.conjugacy.eval(&base.step(&x, 1));
            let m = bn * d.perturbed.eval(&x) * b.inv();
            assert!(m.dist(&target) < 1e-8, "{:?}: {m:?}", d.kind);
            let moved = d.perturbed.eval(&x).dist(&Mat2::rotation(0.4));
            assert!(moved <= 1e-3 + d.extra + 1e-12, "{:?}: moved {moved}", d.kind);
        }
    }
    let hyperbolic = Mat2::hyperbolic(2.0);
    assert!(matches!(drag_to_constant(0.4, &hyperbolic, &base, 1e-3, 10), Err(ccf::Error::Input(_))));
}

#[test]
fn cantor_drag_granularity() {
    let base = BaseSystem::odometer(2, 10).unwrap();
    let q = 1u64 << 10;
    let d = drag_to_constant(0.0, &Mat2::rotation(PI / 2.0), &base, TAU / q as f64, 10_000).unwrap();
    assert!(d.level.unwrap() <= 10);
    let level = d.level.unwrap();
    let shifted = d.theta + TAU * d.k as f64 / (1u64 << level) as f64 - d.beta;
    assert!((centered(shifted / TAU) * TAU - d.residual).abs() < 1e-12);
    // No coarser level meets the tolerance.
    for coarse in 1..level {
        let m = 1i64 << coarse;
        let hit = (-m..=m).any(|k| (centered(k as f64 / m as f64 - 0.25) * TAU).abs() < TAU / q as f64);
        assert!(!hit, "level {coarse} already suffices");
    }
    for k in 0..q {
        let x = BasePoint::Odometer(k);
        let b = d.conjugacy.eval(&x);
        let bn = d.conjugacy.eval(&base.step(&x, 1));
        let m = bn * d.perturbed.eval(&x) * b.inv();
        assert!(m.dist(&Mat2::rotation(PI / 2.0)) < 1e-9);
    }
}

#[test]
fn uh_approximation_of_rotation() {
    let base = circle();
    let a = Cocycle::constant(base, Mat2::rotation(1.0));
    let delta0 = 0.2;
    let ap = approximate_by_uh(&a, delta0, &params()).unwrap();
    let rep = &ap.report;
    assert!(rep.within_budget, "{ap:?}");
    assert!(rep.achieved < delta0);
    assert!(rep.certificate.is_uh());
    // Still certified with a doubled iterate budget.
    let mut uh = params().uh;
    uh.n_max *= 2;
    assert!(uh_test(&ap.perturbed, &uh).unwrap().is_uh());
    let chk = rep.check.unwrap();
    assert!(chk.residual < 1e-8, "{chk:?}");
}

#[test]
fn uh_input_returned_unchanged() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 3.0, RealFn::cos(0.2, 1, 0));
    let ap = approximate_by_uh(&a, 0.1, &params()).unwrap();
    assert_eq!(ap.report.achieved, 0.0);
    assert!(ap.report.chain.is_empty());
    for x in base.grid(20) {
        assert_eq!(ap.perturbed.eval(&x), a.eval(&x));
    }
}

#[test]
fn reports_round_trip() {
    let base = circle();
    let a = Cocycle::schrodinger(base, 3.0, RealFn::constant(0.0));
    let red = reduce_uh(&a, 0.1, &RigidityParams { verify_grid: 50, ..params() }).unwrap();
    let json = serde_json::to_string(&red.report).unwrap();
    let back: ReductionReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, red.report);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn drag_conjugates_for_any_angle(theta in -PI..PI, beta in -PI..PI) {
        let base = BaseSystem::circle(SILVER).unwrap();
        let target = Mat2::rotation(beta);
        let d = drag_to_constant(theta, &target, &base, 1e-2, 10_000).unwrap();
        prop_assert!(d.residual.abs() < 1e-2);
        for x in base.grid(20) {
            let b = d.conjugacy.eval(&x);
            let bn = d.conjugacy.eval(&base.step(&x, 1));
            prop_assert!((bn * d.perturbed.eval(&x) * b.inv()).dist(&target) < 1e-9);
        }
    }

    #[test]
    fn constant_uh_reduction_exact(t in 2.1f64..6.0, angle in 0.0f64..PI) {
        let base = circle();
        let c = Mat2::rotation(angle) * Mat2::hyperbolic(1.3);
        let a = Cocycle::constant(base, c * Mat2::schrodinger(t) * c.inv());
        let red = reduce_uh(&a, 0.1, &RigidityParams { verify_grid: 64, ..params() }).unwrap();
        let rate = ((t + (t * t - 4.0).sqrt()) / 2.0).ln();
        prop_assert!((red.a0 - rate).abs() < 1e-6);
        prop_assert!(red.report.check.residual < 1e-8);
    }
}
