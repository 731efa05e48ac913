use ccf::hypgeom::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn unimodular() -> impl Strategy<Value = Mat2> {
    (-3.0f64..3.0, 1.0f64..6.0, -3.0f64..3.0).prop_map(|(b, l, a)| {
        Mat2::rotation(b) * Mat2::hyperbolic(l) * Mat2::rotation(a)
    })
}

fn disk_point(radius: f64) -> impl Strategy<Value = DiskPoint> {
    (0.0f64..radius, -3.2f64..3.2)
        .prop_map(|(r, t)| DiskPoint::new(Complex64::from_polar(r, t)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn norm_equals_half_distance_exponent(m in unimodular()) {
        let z = mobius_disk(&m, DiskPoint::ORIGIN).unwrap();
        let d = hyp_dist(z, DiskPoint::ORIGIN);
        prop_assert!((2.0 * m.norm().ln() - d).abs() < 1e-9);
    }

    #[test]
    fn action_is_isometric(m in unimodular(), z1 in disk_point(0.9), z2 in disk_point(0.9)) {
        let d0 = hyp_dist(z1, z2);
        let d1 = hyp_dist(mobius_disk(&m, z1).unwrap(), mobius_disk(&m, z2).unwrap());
        prop_assert!((d0 - d1).abs() < 1e-9 * (1.0 + d0));
    }

    #[test]
    fn action_is_a_group_action(a in unimodular(), b in unimodular(), z in disk_point(0.8)) {
        let lhs = mobius_disk(&(a * b), z).unwrap();
        let rhs = mobius_disk(&a, mobius_disk(&b, z).unwrap()).unwrap();
        prop_assert!((lhs.z() - rhs.z()).norm() < 1e-10);
    }

    #[test]
    fn polar_reconstructs(m in unimodular()) {
        let p = polar_decompose(&m);
        prop_assert!(p.matrix().max_abs_diff(&m) < 1e-10 * m.norm());
        prop_assert!((p.lambda - m.norm()).abs() < 1e-10 * m.norm());
        // Singular values from the eigenvalues of MᵀM.
        let g = m.transpose() * m;
        let tr = g.trace();
        let top = (0.5 * (tr + (tr * tr - 4.0 * g.det()).max(0.0).sqrt())).sqrt();
        prop_assert!((top - p.lambda).abs() < 1e-9 * top);
    }

    #[test]
    fn retract_is_a_rotation_along_a_path(m in unimodular(), t in 0.0f64..1.0) {
        let r = retract_so2(&m);
        prop_assert!(r.orthogonality_defect() < 1e-12);
        prop_assert!((r.det() - 1.0).abs() < 1e-12);
        let p = polar_decompose(&m);
        let path = Mat2::rotation(p.beta) * Mat2::hyperbolic(1.0 + t * (p.lambda - 1.0)) * Mat2::rotation(p.alpha);
        prop_assert!(retract_so2(&path).max_abs_diff(&r) < 1e-9);
    }

    #[test]
    fn phi_moves_p1_to_p2_with_bound(p1 in disk_point(0.95), p2 in disk_point(0.95)) {
        let phi = phi_adjust(p1, p2).unwrap();
        let image = mobius_disk(&phi, p1).unwrap();
        prop_assert!((image.z() - p2.z()).norm() < 1e-10);
        let d = hyp_dist(p1, p2);
        prop_assert!(phi.dist(&Mat2::IDENTITY) <= (0.5 * d).exp() - 1.0 + 1e-9);
    }

    #[test]
    fn summit_exceeds_base(p1 in disk_point(0.9), p2 in disk_point(0.9)) {
        let d = hyp_dist(p1, p2);
        prop_assume!(d > 1e-6);
        let phi = phi_adjust(p1, p2).unwrap();
        // The translation length of Φ is d(q1, q2).
        let base = 2.0 * phi.norm().ln();
        prop_assert!(base <= d + 1e-12);
    }

    #[test]
    fn geodesic_point_splits_distance(z1 in disk_point(0.9), z2 in disk_point(0.9), t in 0.0f64..=1.0) {
        let w = geodesic_point(z1, z2, t).unwrap();
        let d = hyp_dist(z1, z2);
        prop_assert!((hyp_dist(z1, w) - t * d).abs() < 1e-9);
        prop_assert!((hyp_dist(z1, w) + hyp_dist(w, z2) - d).abs() < 1e-9);
    }

    #[test]
    fn psi_conclusions(mats in prop::collection::vec((-3.2f64..3.2, 1.0f64..1.2, -3.2f64..3.2), 1..=64),
                       p in disk_point(0.9), q in disk_point(0.9)) {
        let mats: Vec<Mat2> = mats.into_iter()
            .map(|(b, l, a)| Mat2::rotation(b) * Mat2::hyperbolic(l) * Mat2::rotation(a))
            .collect();
        let out = psi_adjust(&mats, p, q).unwrap();
        let end = push_through(&out, p).unwrap();
        prop_assert!((end.z() - q.z()).norm() < 1e-9);
        let w0 = push_through(&mats, p).unwrap();
        let bound = (hyp_dist(w0, q) / (2.0 * mats.len() as f64)).exp() - 1.0;
        for (t, a) in out.iter().zip(mats.iter()) {
            prop_assert!((*t * a.inv()).dist(&Mat2::IDENTITY) <= bound + 1e-9);
        }
    }
}

/// Arc length of the straight segment z(s) = z1 + s(z2 − z1) under the disk
/// metric, against the length of its Cayley image under |dw|/Im w.
#[test]
fn cayley_map_is_an_isometry_of_metrics() {
    let pairs = [
        (Complex64::new(0.1, 0.2), Complex64::new(-0.4, 0.5)),
        (Complex64::new(0.7, -0.1), Complex64::new(0.2, -0.6)),
        (Complex64::new(-0.8, 0.1), Complex64::new(0.3, 0.3)),
    ];
    let h = 1e-5;
    for (z1, z2) in pairs {
        let steps = (1.0 / h) as usize;
        let (mut disk_len, mut plane_len) = (0.0, 0.0);
        for k in 0..steps {
            let s0 = k as f64 * h;
            let s1 = s0 + h;
            let a = z1 + (z2 - z1) * s0;
            let b = z1 + (z2 - z1) * s1;
            let mid = (a + b) * 0.5;
            disk_len += 2.0 * (b - a).norm() / (1.0 - mid.norm_sqr());
            let wa = cayley_to_half_plane(a);
            let wb = cayley_to_half_plane(b);
            let wm = cayley_to_half_plane(mid);
            plane_len += (wb - wa).norm() / wm.im;
        }
        assert!(((disk_len - plane_len) / disk_len).abs() < 1e-6, "{disk_len} vs {plane_len}");
    }
}

#[test]
fn radial_distance_matches_dilation() {
    for lambda in [1.5f64, 2.0, 7.0] {
        let z = mobius_disk(&Mat2::hyperbolic(lambda), DiskPoint::ORIGIN).unwrap();
        assert!((hyp_dist(z, DiskPoint::ORIGIN) - 2.0 * lambda.ln()).abs() < 1e-12);
    }
}
