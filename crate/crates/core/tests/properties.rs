use proptest::prelude::*;

use rotaprec::matlin::{
    compose_rotation, extract_angles, max_abs_diff, orthonormality_error, reconstruct,
    GivensAngleSet,
};
use rotaprec::rectifier::{pack, unpack};
use rotaprec::{
    draw_channel, gsvd_decompose, gsvd_init, gsvd_power_alloc, rectify, secrecy_rate_q, solve,
    SolveConfig,
};

fn angles(nt: usize) -> impl Strategy<Value = GivensAngleSet> {
    prop::collection::vec(-3.1f64..3.1, GivensAngleSet::count(nt))
        .prop_map(move |v| GivensAngleSet::from_vec(nt, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rotations_round_trip(theta in (1usize..=6).prop_flat_map(angles)) {
        let v = compose_rotation(&theta);
        prop_assert!(orthonormality_error(&v) <= 1e-12);
        let (back, swapped) = extract_angles(&v).unwrap();
        prop_assert!(!swapped);
        prop_assert!(max_abs_diff(&compose_rotation(&back), &v) <= 1e-8);
    }

    #[test]
    fn gsvd_factors_hold(nt in 1usize..=5, nr in 1usize..=6, ne in 1usize..=6, seed in any::<u64>()) {
        let ch = draw_channel(nt, nr, ne, seed).unwrap();
        let f = gsvd_decompose(&ch).unwrap();
        let r = f.residuals(&ch);
        prop_assert!(r.h <= 1e-8 && r.g <= 1e-8 && r.unit_sum <= 1e-8, "{:?}", r);
        prop_assert!(f.c.iter().chain(&f.d).all(|&x| (0.0..=1.0 + 1e-10).contains(&x)));
    }

    #[test]
    fn gsvd_allocation_spends_the_budget(nt in 1usize..=4, nr in 1usize..=4, ne in 1usize..=4, seed in any::<u64>(), pt in 0.1f64..100.0) {
        let ch = draw_channel(nt, nr, ne, seed).unwrap();
        let f = gsvd_decompose(&ch).unwrap();
        let alloc = gsvd_power_alloc(&f, pt).unwrap();
        for i in 0..f.q() {
            prop_assert!(alloc.p[i] >= 0.0);
            if f.c[i] <= f.d[i] {
                prop_assert_eq!(alloc.p[i], 0.0);
            }
        }
        if f.c.iter().zip(&f.d).any(|(c, d)| c > d) {
            let spent: f64 = alloc.p.iter().zip(&f.e_sq).map(|(p, e)| p * e).sum();
            prop_assert!((spent - pt).abs() <= 1e-6 * pt);
        }
        let (_, init) = gsvd_init(&ch, pt).unwrap();
        prop_assert!((secrecy_rate_q(&ch, &init.q).unwrap() - init.rate).abs() <= 1e-9);
    }

    #[test]
    fn rectifier_lands_on_the_simplex(l in prop::collection::vec(-10.0f64..10.0, 0..6), pt in 0.0f64..50.0) {
        let out = rectify(&l, pt);
        prop_assert_eq!(out.len(), l.len() + 1);
        prop_assert!(out.iter().all(|&x| x >= 0.0));
        prop_assert!((out.iter().sum::<f64>() - pt).abs() <= 1e-12 * pt.max(1.0));
    }

    #[test]
    fn coordinates_pack_and_unpack(theta in (1usize..=5).prop_flat_map(angles), seed in any::<u64>()) {
        let nt = theta.nt();
        let l: Vec<f64> = (0..nt - 1).map(|i| (seed.rotate_left(i as u32 * 7) % 1000) as f64 / 100.0).collect();
        let x = pack(&l, &theta).unwrap();
        let (l2, t2) = unpack(&x, nt).unwrap();
        prop_assert_eq!(l2, l);
        prop_assert_eq!(t2, theta);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solutions_are_feasible_and_monotone(nt in 1usize..=4, nr in 1usize..=4, ne in 1usize..=4, seed in any::<u64>(), pt in 0.5f64..50.0) {
        let ch = draw_channel(nt, nr, ne, seed).unwrap();
        let cfg = SolveConfig::new(pt);
        let (sol, trace) = solve(&ch, &cfg).unwrap();
        let q = &sol.q;
        prop_assert!(max_abs_diff(q, &q.transpose()) <= 1e-10);
        prop_assert!(max_abs_diff(q, &reconstruct(&sol.v, &sol.lambda)) <= 1e-9);
        prop_assert!(sol.lambda.iter().all(|&l| l >= -1e-9));
        let tr = q.trace();
        prop_assert!((tr - pt).abs() <= 1e-9 || (tr == 0.0 && sol.rate == 0.0));
        prop_assert!(sol.rate >= 0.0);
        prop_assert!((secrecy_rate_q(&ch, q).unwrap() - sol.rate).abs() <= 1e-9);
        for w in trace.records.windows(2) {
            prop_assert!(w[1].f <= w[0].f + cfg.eps2);
        }
        let (_, init) = gsvd_init(&ch, pt).unwrap();
        prop_assert!(sol.rate >= init.rate - 1e-9);
    }
}
