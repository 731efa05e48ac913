use ccf::basedyn::*;
use proptest::prelude::*;

fn close_mod1(a: f64, b: f64, tol: f64) -> bool {
    centered(a - b).abs() < tol
}

fn coords(p: BasePoint) -> (f64, f64) {
    match p {
        BasePoint::Circle(x) => (x, 0.0),
        BasePoint::Torus(x, y) | BasePoint::SkewShift(x, y) => (x, y),
        BasePoint::Odometer(k) => (k as f64, 0.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn step_is_additive(x in 0.0f64..1.0, y in 0.0f64..1.0, n in -1_000_000i64..1_000_000, m in -1_000_000i64..1_000_000) {
        for sys in [
            BaseSystem::circle(GOLDEN).unwrap(),
            BaseSystem::torus([GOLDEN, SILVER]).unwrap(),
            BaseSystem::skew_shift(GOLDEN).unwrap(),
        ] {
            let p = sys.point(x, y);
            let a = coords(sys.step(&p, n + m));
            let b = coords(sys.step(&sys.step(&p, m), n));
            prop_assert!(close_mod1(a.0, b.0, 1e-12) && close_mod1(a.1, b.1, 1e-9));
        }
    }

    #[test]
    fn odometer_step_is_exactly_additive(k in 0u64..(1 << 20), n in -5_000_000i64..5_000_000, m in -5_000_000i64..5_000_000) {
        let sys = BaseSystem::odometer(2, 20).unwrap();
        let p = BasePoint::Odometer(k);
        prop_assert_eq!(sys.step(&p, n + m), sys.step(&sys.step(&p, m), n));
    }

    #[test]
    fn factor_is_equivariant(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        for sys in [
            BaseSystem::circle(GOLDEN).unwrap(),
            BaseSystem::torus([SILVER, GOLDEN]).unwrap(),
            BaseSystem::skew_shift(SILVER).unwrap(),
        ] {
            let p = sys.point(x, y);
            let h0 = sys.factor(&p).unwrap();
            let h1 = sys.factor(&sys.step(&p, 1)).unwrap();
            prop_assert!(close_mod1(h1, h0 + sys.circle_alpha().unwrap(), 1e-14));
        }
    }

    #[test]
    fn cantor_factor_equivariance(k in 0u64..(1 << 20), level in 1u32..=20) {
        let sys = BaseSystem::odometer(2, 20).unwrap();
        let h = cantor_factor(&sys, level).unwrap();
        let p = BasePoint::Odometer(k);
        prop_assert_eq!(h.value(&sys.step(&p, 1)), (h.value(&p) + 1) % h.q);
    }
}

#[test]
fn skew_shift_long_orbit_matches_iteration() {
    let sys = BaseSystem::skew_shift(GOLDEN).unwrap();
    let p = BasePoint::SkewShift(0.123, 0.456);
    let mut q = p;
    for _ in 0..100_000 {
        q = sys.step(&q, 1);
    }
    let (a, b) = coords(sys.step(&p, 100_000));
    let (c, d) = coords(q);
    // Iterated addition accumulates rounding; the closed form is the reference.
    assert!(close_mod1(a, c, 1e-9) && close_mod1(b, d, 1e-6));
}

#[test]
fn castle_translates_cover_circle() {
    for alpha in [GOLDEN, SILVER] {
        for i in 1..20 {
            let c = Castle::new(alpha, i).unwrap();
            assert!((c.total_measure() - 1.0).abs() < 1e-12);
            let m = c.marker();
            let s = c.base_coordinate(m).expect("marker inside base interval");
            assert!(s > 0.0 && s < 1.0);
        }
    }
}

#[test]
fn first_return_of_base_interval_is_next_denominator() {
    let c = Castle::new(GOLDEN, 6).unwrap();
    let (lo, hi) = if c.gap_i > 0.0 { (0.0, c.gap_i) } else { (c.gap_i, 0.0) };
    let mut first = None;
    for n in 1..=c.q_next {
        let shift = centered(frac_mul(n, GOLDEN));
        let (a, b) = (lo + shift, hi + shift);
        // Half-open intervals: touching at an endpoint is not a return.
        if a < hi && b > lo {
            first = Some(n);
            break;
        }
    }
    assert_eq!(first, Some(c.q_next));
}

#[test]
fn return_times_match_brute_force() {
    let sys = BaseSystem::circle(GOLDEN).unwrap();
    let c = Castle::new(GOLDEN, 5).unwrap();
    let bound = (c.q_next + c.q_i - 1) as u64;
    let mut worst = 0;
    for j in 0..10_000 {
        let x = (j as f64 + 0.5) / 10_000.0;
        let tau = return_time(&sys, &BasePoint::Circle(x), &c).unwrap();
        let brute = (0..=bound)
            .find(|&n| c.in_base(frac(x + frac_mul(n as i64, GOLDEN))))
            .unwrap();
        assert_eq!(tau, brute, "x = {x}");
        worst = worst.max(tau);
    }
    assert!(worst <= bound);
    // A point just past q_iα on the far side of the base interval.
    let eps = 1e-3;
    let x = frac(c.gap_i + GOLDEN * (1.0 - eps));
    let tau = return_time(&sys, &BasePoint::Circle(x), &c).unwrap();
    let brute = (0..=bound)
        .find(|&n| c.in_base(frac(x + frac_mul(n as i64, GOLDEN))))
        .unwrap();
    assert_eq!(tau, brute);
}

#[test]
fn three_distance_gaps() {
    for i in 2..15 {
        let c = Castle::new(GOLDEN, i).unwrap();
        let n = (c.q_i + c.q_next) as usize;
        let mut pts: Vec<f64> = (0..n as i64).map(|k| frac_mul(k, GOLDEN)).collect();
        pts.sort_by(f64::total_cmp);
        let mut gaps: Vec<f64> = pts.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.push(1.0 - pts[n - 1] + pts[0]);
        for g in gaps {
            assert!(
                (g - c.len_i()).abs() < 1e-12 || (g - c.len_next()).abs() < 1e-12,
                "gap {g} at level {i}"
            );
        }
    }
}

#[test]
fn locate_agrees_with_floor_points() {
    let c = Castle::new(SILVER, 4).unwrap();
    for tower in [Tower::Main, Tower::Side] {
        for n in 0..c.tower_height(tower) {
            for s in [0.1, 0.5, 0.9] {
                let x = c.floor_point(tower, n, s);
                let r = c.locate(x);
                assert_eq!((r.tower, r.floor), (tower, n));
                assert!((r.s - s).abs() < 1e-9);
            }
        }
    }
}
