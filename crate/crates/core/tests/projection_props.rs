use ccf::basedyn::*;
use ccf::cocycle::*;
use ccf::hypgeom::*;
use ccf::projection::*;
use ccf::schrodinger::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn circle() -> BaseSystem {
    BaseSystem::circle(GOLDEN).unwrap()
}

fn schrodinger_a(base: BaseSystem, v: &Potential) -> Cocycle {
    schrodinger_cocycle(base, v, 0.0)
}

/// A·R_ε everywhere: a perturbation that is nowhere equal to A.
fn rotated(a: &Cocycle, eps: f64) -> Cocycle {
    let a = a.clone();
    let base = *a.base();
    Cocycle::from_fn(base, "A·R_ε", move |x| a.eval(x) * Mat2::rotation(eps))
}

fn window(base: BaseSystem) -> LocalizedWindow {
    let h = max_half_width(&base, 0.8).unwrap();
    LocalizedWindow::new(base, BoxWindow::interval(0.0, h), 0.6, 10_000).unwrap()
}

#[test]
fn pi_normalize_examples() {
    assert_eq!(pi_normalize(&Mat2::IDENTITY.scale(2.0)).unwrap(), Mat2::IDENTITY);
    assert_eq!(pi_normalize(&Mat2::new(4.0, 0.0, 0.0, 1.0)).unwrap(), Mat2::new(2.0, 0.0, 0.0, 0.5));
    assert!(pi_normalize(&Mat2::new(1.0, 0.0, 0.0, -1.0)).is_err());
    assert!(pi_normalize(&Mat2::new(1.0, 2.0, 2.0, 4.0)).is_err());
}

#[test]
fn pi_normalized_blend_stays_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let b = Mat2::rotation(rng.gen_range(0.0..6.3)) * Mat2::hyperbolic(rng.gen_range(1.0..2.0));
        let a = b * Mat2::rotation(rng.gen_range(-0.01..0.01)) * Mat2::hyperbolic(rng.gen_range(1.0..1.01));
        let phi: f64 = rng.gen_range(0.0..1.0);
        let m = pi_normalize(&b.add(&a.sub(&b).scale(phi))).unwrap();
        assert!((m.det() - 1.0).abs() < 1e-12);
        assert!(m.dist(&b) <= 2.0 * a.dist(&b) + 1e-15, "{m:?} {a:?} {b:?}");
    }
}

#[test]
fn eta_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        // Matrices in L: det 1 and d bounded away from zero.
        let (b, c) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let d = rng.gen_range(0.2..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let m = Mat2::new((1.0 + b * c) / d, b, c, d);
        let t = eta(&m).unwrap();
        worst = worst.max(t.product().max_abs_diff(&m));
        // And the other way round, starting from a triple.
        let s = STriple {
            t1: rng.gen_range(-3.0..3.0),
            t2: rng.gen_range(0.2..3.0),
            t3: rng.gen_range(-3.0..3.0),
        };
        let back = eta(&s.product()).unwrap();
        worst = worst.max((back.t1 - s.t1).abs()).max((back.t2 - s.t2).abs()).max((back.t3 - s.t3).abs());
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn eta_worked_example_and_domain() {
    let t = eta(&Mat2::new(2.0, -5.0, 1.0, -2.0)).unwrap();
    assert_eq!((t.t1, t.t2, t.t3), (1.0, 2.0, 3.0));
    assert_eq!(
        (Mat2::schrodinger(3.0) * Mat2::schrodinger(2.0) * Mat2::schrodinger(1.0)),
        Mat2::new(2.0, -5.0, 1.0, -2.0)
    );
    assert!(matches!(eta(&Mat2::schrodinger(0.4)), Err(ccf::Error::Degenerate(_))));
}

#[test]
fn windows_respect_box_arithmetic() {
    let base = circle();
    let h = max_half_width(&base, 0.8).unwrap();
    let w = BoxWindow::interval(0.3, h);
    assert!(w.separated(&base).unwrap());
    for x in base.grid(20_000) {
        if w.contains_closed(&base, &x) {
            assert!(!w.contains_closed(&base, &base.step(&x, 1)));
            assert!(!w.contains_closed(&base, &base.step(&x, 2)));
        }
    }
    let odo = BaseSystem::odometer(2, 12).unwrap();
    assert!(w.separated(&odo).is_err());
}

#[test]
fn localize_leaves_a_fixed_exactly() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let lw = window(base);
    let loc = localize(&a, &lw, &a, 10_000).unwrap();
    for x in base.grid(10_000) {
        assert_eq!(loc.phi.eval(&x), a.eval(&x));
        assert_eq!(loc.psi.eval(&x), Mat2::IDENTITY);
    }
    assert_eq!(loc.report.check.identity_residual, 0.0);
}

#[test]
fn localize_tiny_rotation() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let b = rotated(&a, 1e-3);
    let lw = window(base);
    let loc = localize(&a, &lw, &b, 10_000).unwrap();
    let c = &loc.report.check;
    assert_eq!(c.points, 10_000);
    assert!(c.identity_residual < 1e-9, "{c:?}");
    assert!(c.off_support_exact, "{c:?}");
    assert!(c.support_points > 0 && c.support_points < c.points);
    // Off the window Φ(B) = A bitwise, although B ≠ A everywhere.
    for x in base.grid(2_000) {
        if !lw.contains(&x) {
            assert_eq!(loc.phi.eval(&x), a.eval(&x));
        }
    }
    assert!(c.output_distance > 0.0 && c.output_distance < 0.1, "{c:?}");
}

#[test]
fn localize_is_continuous_in_b() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let lw = window(base);
    let dist = |eps: f64| localize(&a, &lw, &rotated(&a, eps), 4_000).unwrap().report.check.output_distance;
    for eps in [4e-3, 1e-3, 2.5e-4] {
        let ratio = dist(eps) / dist(0.5 * eps);
        assert!((0.5..=4.0).contains(&(ratio / 2.0)), "eps {eps}: ratio {ratio}");
    }
}

#[test]
fn localize_rejects_far_perturbations() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let lw = window(base);
    let err = localize(&a, &lw, &rotated(&a, 1.0), 2_000).err().expect("far perturbation accepted");
    assert!(matches!(err, ccf::Error::Budget(_)), "{err}");
}

#[test]
fn localize_on_the_skew_shift_box() {
    let base = BaseSystem::skew_shift(GOLDEN).unwrap();
    let a = schrodinger_a(base, &Potential::cos(0.3, 0, 1));
    let h = max_half_width(&base, 0.8).unwrap();
    let lw = LocalizedWindow::new(
        base,
        BoxWindow {
            center: [0.0, 0.0],
            half: [h, 0.15],
        },
        0.6,
        10_000,
    )
    .unwrap();
    // Backward orbits take long to enter a box on 𝕋², and A's products along
    // them amplify B − A; hence the much smaller perturbation.
    let loc = localize(&a, &lw, &rotated(&a, 1e-9), 10_000).unwrap();
    assert!(loc.report.check.identity_residual < 1e-9, "{:?}", loc.report);
    assert!(loc.report.check.off_support_exact);
}

/// B = A·(Id + s·bump·M), normalized, supported in the closed window.
fn bump_perturbation(a: &Cocycle, w: BoxWindow, s: f64) -> Cocycle {
    let (a, base) = (a.clone(), *a.base());
    let m = Mat2::new(0.3, 1.0, -0.7, -0.3);
    Cocycle::from_fn(base, "bump perturbation", move |x| {
        let p = w.profile(&base, x, 0.5);
        if p == 0.0 {
            a.eval(x)
        } else {
            pi_normalize(&(a.eval(x) * Mat2::IDENTITY.add(&m.scale(s * p)))).unwrap()
        }
    })
}

#[test]
fn projection_of_a_is_a() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let (w, _) = choose_window(&a, 0.8).unwrap();
    let p = schrodinger_project(&a, &w, &a, 10_000).unwrap();
    for x in base.grid(10_000) {
        assert_eq!(p.phi.eval(&x), a.eval(&x));
        assert_eq!(p.psi.eval(&x), Mat2::IDENTITY);
    }
}

#[test]
fn projection_of_local_perturbation() {
    let base = circle();
    let v = Potential::cos(0.3, 1, 0);
    let a = schrodinger_a(base, &v);
    let (w, min_trace) = choose_window(&a, 0.8).unwrap();
    assert!(min_trace > 0.2);
    let b = bump_perturbation(&a, w, 0.01);
    let p = schrodinger_project(&a, &w, &b, 10_000).unwrap();
    let r = &p.report;
    assert!(r.s_form);
    assert!(r.check.identity_residual < 1e-9, "{r:?}");
    assert!(r.check.off_support_exact, "{r:?}");
    assert!(r.check.output_distance > 0.0 && r.check.output_distance < 0.1);
    // Read back V′ = E − t: the Schrödinger cocycle of V′ is Φ(B) itself.
    let t = p.t.clone();
    let vprime = Potential::new("V′", RealFn::custom(move |x| -t.value(&base, x)));
    let back = schrodinger_cocycle(base, &vprime, 0.0);
    for x in base.grid(10_000) {
        assert!(back.eval(&x).max_abs_diff(&p.phi.eval(&x)) < 1e-15);
    }
}

#[test]
fn projection_needs_trace() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::zero());
    let w = BoxWindow::interval(0.0, 0.05);
    assert!(matches!(
        schrodinger_project(&a, &w, &a, 1_000),
        Err(ccf::Error::Precondition(_))
    ));
}

#[test]
fn projection_rejects_perturbations_outside_the_window() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let (w, _) = choose_window(&a, 0.8).unwrap();
    assert!(schrodinger_project(&a, &w, &rotated(&a, 1e-3), 1_000).is_err());
}

#[test]
fn localize_then_project_composes() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let (w, _) = choose_window(&a, 0.8).unwrap();
    let lw = LocalizedWindow::new(base, w, 0.6, 10_000).unwrap();
    let b = rotated(&a, 1e-3);
    let loc = localize(&a, &lw, &b, 10_000).unwrap();
    let p = schrodinger_project(&a, &w, &loc.phi, 10_000).unwrap();
    // Ψ = (Ψ_K ∘ Φ_V)·Ψ_V conjugates B to the S-valued Φ_K(Φ_V(B)).
    let total = p.psi.then(&loc.psi).unwrap();
    let mut worst: f64 = 0.0;
    for x in base.grid(10_000) {
        let lhs = total.eval(&base.step(&x, 1)) * b.eval(&x) * total.eval(&x).inv();
        let out = p.phi.eval(&x);
        assert!(is_schrodinger_form(&out));
        worst = worst.max(lhs.dist(&out));
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn trace_zero_fix_on_free_cocycle() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::zero());
    let h = max_half_width(&base, 0.8).unwrap();
    let w = BoxWindow::interval(0.0, h);
    let fix = trace_zero_fix(&a, &w, 0.05, 0.6, 10_000).unwrap();
    let r = &fix.report;
    assert!(r.changed);
    assert!(r.residual < 1e-10, "{r:?}");
    assert!((r.distance - 0.05).abs() < 1e-12, "{r:?}");
    // f²∘f⁻² is the identity up to one rounding of the coordinates.
    assert!(r.balance < 1e-15, "{r:?}");
    let mut nonzero = 0;
    for x in base.grid(10_000) {
        let m = fix.perturbed.eval(&x);
        assert!(is_schrodinger_form(&m));
        if w.contains(&base, &x) {
            assert!((m.trace() + fix.perturbed.eval(&base.step(&x, 2)).trace()).abs() < 1e-15);
            nonzero += usize::from(m.trace() != 0.0);
        }
    }
    assert!(nonzero > 0);
}

#[test]
fn trace_zero_fix_leaves_traceful_cocycles() {
    let base = circle();
    let a = schrodinger_a(base, &Potential::cos(0.3, 1, 0));
    let fix = trace_zero_fix(&a, &BoxWindow::interval(0.0, 0.05), 0.05, 0.6, 1_000).unwrap();
    assert!(!fix.report.changed);
    for x in base.grid(100) {
        assert_eq!(fix.perturbed.eval(&x), a.eval(&x));
    }
}

#[test]
fn open_gap_in_a_gap_is_a_no_op() {
    let base = circle();
    let v = Potential::zero();
    let g = open_gap(base, &v, 3.0, 0.1, &GapParams::default()).unwrap();
    assert!(g.report.already_in_gap);
    assert_eq!(g.report.achieved, 0.0);
    assert!(g.report.certificate.is_uh() && g.report.doubled.is_uh());
    assert_eq!(g.potential.value(&base, &BasePoint::Circle(0.3)), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn eta_inverts_products(t1 in -5.0f64..5.0, t2 in 0.05f64..5.0, t3 in -5.0f64..5.0, sign in proptest::bool::ANY) {
        let t2 = if sign { t2 } else { -t2 };
        let s = STriple { t1, t2, t3 };
        let back = eta(&s.product()).unwrap();
        let scale = 1.0 + t1.abs().max(t3.abs()) / t2.abs();
        prop_assert!((back.t1 - t1).abs() < 1e-12 * scale * 10.0);
        prop_assert!((back.t2 - t2).abs() < 1e-12);
        prop_assert!((back.t3 - t3).abs() < 1e-12 * scale * 10.0);
    }

    #[test]
    fn pi_normalize_gives_unit_determinant(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
        let m = Mat2::new(a, b, c, d);
        prop_assume!(m.det().abs() > 1e-3);
        match pi_normalize(&m) {
            Ok(p) => prop_assert!((p.det() - 1.0).abs() < 1e-12),
            Err(_) => prop_assert!(m.det() <= 0.0),
        }
    }
}
