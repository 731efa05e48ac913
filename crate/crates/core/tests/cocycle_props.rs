use std::f64::consts::PI;

use ccf::basedyn::*;
use ccf::cocycle::*;
use ccf::hypgeom::Mat2;
use proptest::prelude::*;

fn circle() -> BaseSystem {
    BaseSystem::circle(GOLDEN).unwrap()
}

fn amo(base: BaseSystem, energy: f64, coupling: f64) -> Cocycle {
    Cocycle::schrodinger(base, energy, RealFn::cos(2.0 * coupling, 1, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cocycle_identity(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 0i64..400, m in -400i64..400, e in -3.0f64..3.0) {
        for base in [circle(), BaseSystem::skew_shift(SILVER).unwrap()] {
            let v = RealFn::cos(0.8, 1, 0).plus(&RealFn::sin(0.5, 0, 1), base);
            let a = Cocycle::schrodinger(base, e, v);
            let p = base.point(x, y);
            let lhs = a.iterate(&p, n + m).unwrap();
            let rhs_a = a.iterate(&base.step(&p, m), n).unwrap();
            let rhs_b = a.iterate(&p, m).unwrap();
            let rhs = rhs_a.mat * rhs_b.mat;
            let scale = (rhs_a.log_scale + rhs_b.log_scale - lhs.log_scale).exp();
            let rhs = rhs.scale(scale);
            // Rounding in a product is relative to the factor norms, not the
            // (possibly much smaller) norm of the result.
            let size = rhs_a.mat.norm() * rhs_b.mat.norm() * scale;
            prop_assert!(lhs.mat.max_abs_diff(&rhs) <= 1e-8 * size.max(1.0),
                "{:?} vs {:?}", lhs.mat, rhs);
        }
    }

    #[test]
    fn conjugation_is_inverted(x in 0.0f64..1.0, s in -1.0f64..1.0, t in 1.0f64..3.0) {
        let base = circle();
        let a = amo(base, 0.4, 0.7);
        let b = Conjugacy::genuine(base, "test", move |p: &BasePoint| {
            let c = base.coords(p)[0];
            Mat2::rotation(s * (2.0 * PI * c).sin()) * Mat2::hyperbolic(t) * Mat2::rotation(2.0 * PI * c)
        });
        let back = conjugate(&conjugate(&a, &b).unwrap(), &b.inverse()).unwrap();
        let p = BasePoint::Circle(x);
        prop_assert!(back.eval(&p).max_abs_diff(&a.eval(&p)) < 1e-9);
        let id = conjugate(&a, &Conjugacy::identity(base)).unwrap();
        prop_assert!(id.eval(&p).max_abs_diff(&a.eval(&p)) == 0.0);
    }

    #[test]
    fn winding_is_homotopy_invariant(k in -3i64..=3, eps in -1.0f64..1.0) {
        let base = BaseSystem::torus([GOLDEN, SILVER]).unwrap();
        let a = Cocycle::winding_rotation(base, RealFn::constant(0.3), [k, 2]);
        let bump = RealFn::sin(eps, 1, 0);
        let b = Cocycle::winding_rotation(base, bump, [k, 2]);
        prop_assert_eq!(windings(&a).unwrap(), vec![k, 2]);
        prop_assert_eq!(windings(&b).unwrap(), vec![k, 2]);
    }
}

#[test]
fn uh_verdict_survives_bounded_conjugation() {
    let base = circle();
    let params = UhParams::default();
    let conj = Conjugacy::genuine(base, "shear", move |p: &BasePoint| {
        let c = base.coords(p)[0];
        Mat2::rotation(2.0 * PI * c) * Mat2::hyperbolic(2.5) * Mat2::rotation(-(2.0 * PI * c).cos())
    });
    let distortion = conj.distortion(512);
    assert!(distortion <= 10.0);
    // Thresholds stay fixed; the doubling schedule absorbs the distortion².
    for (a, expect) in [
        (amo(base, 3.5, 0.5), Verdict::Uh),
        (Cocycle::constant(base, Mat2::rotation(0.7)), Verdict::NotUh),
        (Cocycle::constant(base, Mat2::hyperbolic(1.5)), Verdict::Uh),
    ] {
        let plain = uh_test(&a, &params).unwrap();
        let conjugated = uh_test(&conjugate(&a, &conj).unwrap(), &params).unwrap();
        assert_eq!(plain.verdict, expect);
        assert_eq!(conjugated.verdict, expect);
    }
}

#[test]
fn rotation_number_shift_under_half_turn_conjugacy() {
    let base = circle();
    let a = amo(base, 0.35, 0.4);
    let x = BasePoint::Circle(0.1);
    let n = 200_000;
    let rho = rotation_number(&a, &x, n).unwrap();
    for k in [1i64, 2, -3] {
        let b = Conjugacy::lifted(base, "half turns", move |c| Mat2::rotation(PI * k as f64 * c[0]));
        let a2 = conjugate(&a, &b).unwrap();
        let rho2 = rotation_number(&a2, &x, n).unwrap();
        let shift = centered(rho2 - rho - k as f64 * GOLDEN);
        assert!(shift.abs() < 1e-3, "k = {k}: {rho} → {rho2}");
    }
}

#[test]
fn rotation_number_is_continuous() {
    let base = circle();
    let x = BasePoint::Circle(0.0);
    let n = 100_000;
    for theta in [0.2, 0.55] {
        let a = Cocycle::rotation(base, RealFn::constant(PI * theta).plus(&RealFn::cos(0.3, 1, 0), base));
        let b = Cocycle::rotation(
            base,
            RealFn::constant(PI * theta + 1e-3).plus(&RealFn::cos(0.3, 1, 0), base),
        );
        let (ra, rb) = (rotation_number(&a, &x, n).unwrap(), rotation_number(&b, &x, n).unwrap());
        // A rotation cocycle moves every direction by exactly its angle.
        assert!(centered(rb - ra).abs() <= 1e-3 / PI + 1e-4);
    }
}

#[test]
fn rotation_number_rejects_winding() {
    let a = Cocycle::winding_rotation(circle(), RealFn::constant(0.0), [1, 0]);
    let err = rotation_number(&a, &BasePoint::Circle(0.0), 10_000).unwrap_err();
    assert!(matches!(err, ccf::Error::Obstruction { .. }));
}

#[test]
fn splitting_is_invariant() {
    let base = circle();
    let a = amo(base, 3.2, 0.6);
    let cert = uh_test(&a, &UhParams::default()).unwrap();
    assert!(cert.is_uh());
    let sp = splitting_conjugacy(&a, &cert).unwrap();
    assert!(sp.b.is_projective());
    for x in base.grid(200) {
        let fx = base.step(&x, 1);
        let (u, s) = splitting_directions(&a, &x, sp.n);
        let (u1, s1) = splitting_directions(&a, &fx, sp.n);
        let m = a.eval(&x);
        let push = |t: f64| {
            let v = m.apply([t.cos(), t.sin()]);
            v[1].atan2(v[0])
        };
        let gap = |p: f64, q: f64| (centered((p - q) / PI) * PI).abs();
        assert!(gap(push(u), u1) < 1e-6);
        assert!(gap(push(s), s1) < 1e-6);
        let d = sp.b.eval(&fx).inv() * m * sp.b.eval(&x);
        assert!(d.b.abs() < 1e-6 && d.c.abs() < 1e-6, "{d:?}");
        assert!((sp.b.eval(&x).det() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn splitting_of_conjugated_constant() {
    let base = circle();
    let c = Mat2::new(1.0, 0.7, 0.2, 1.14);
    let m = c * Mat2::hyperbolic(2.0) * c.inv();
    let a = Cocycle::constant(base, m);
    let sp = splitting_conjugacy(&a, &uh_test(&a, &UhParams::default()).unwrap()).unwrap();
    let d = sp.d.eval(&BasePoint::Circle(0.3));
    assert!(d.max_abs_diff(&Mat2::hyperbolic(2.0)) < 1e-9, "{d:?}");
}

#[test]
fn bounded_test_on_conjugated_rotation() {
    let base = circle();
    let r = Cocycle::rotation(base, RealFn::constant(0.9));
    let b = Conjugacy::genuine(base, "bump", move |p: &BasePoint| {
        let c = base.coords(p)[0];
        Mat2::hyperbolic(1.0 + 0.5 * (2.0 * PI * c).cos().powi(2)) * Mat2::rotation(c)
    });
    let dist = b.distortion(4096);
    let a = conjugate(&r, &b).unwrap();
    let rep = bounded_test(&a, &BasePoint::Circle(0.2), 100_000).unwrap();
    assert!(rep.sup_norm <= dist * dist * (1.0 + 1e-9));
    assert!(rep.growth_exponent < 1e-3, "{rep:?}");
}
