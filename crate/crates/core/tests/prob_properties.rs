use ksme_core::prob::*;
use ksme_core::rng::seeded;
use nalgebra::DMatrix;
use proptest::prelude::*;

const N: usize = 6;

fn dist() -> impl Strategy<Value = Dist> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], N).prop_filter_map("all zero", |w| {
        Dist::normalized(&w).ok()
    })
}

/// Euclidean distances between random points in the plane.
fn metric() -> impl Strategy<Value = CostMatrix> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), N).prop_map(|pts| {
        CostMatrix::new(DMatrix::from_fn(N, N, |i, j| {
            ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
        }))
        .unwrap()
    })
}

fn gram() -> impl Strategy<Value = GramMatrix> {
    prop::collection::vec(-2.0f64..2.0, N * 3).prop_map(|v| {
        let f = DMatrix::from_row_slice(N, 3, &v);
        GramMatrix::new(&f * f.transpose()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kantorovich_below_lk(mu in dist(), nu in dist(), d in metric()) {
        let (w, _) = kantorovich(&mu, &nu, &d).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert!(w <= lk_distance(&mu, &nu, &d).unwrap() + 1e-10);
    }

    #[test]
    fn kantorovich_is_a_metric(mu in dist(), nu in dist(), eta in dist(), d in metric()) {
        let w = |a: &Dist, b: &Dist| kantorovich(a, b, &d).unwrap().0;
        prop_assert!((w(&mu, &nu) - w(&nu, &mu)).abs() <= 1e-9);
        prop_assert!(w(&mu, &nu) <= w(&mu, &eta) + w(&eta, &nu) + 1e-9);
    }

    #[test]
    fn lk_is_diffuse_metric(mu in dist(), nu in dist(), eta in dist(), d in metric()) {
        let l = |a: &Dist, b: &Dist| lk_distance(a, b, &d).unwrap();
        prop_assert!((l(&mu, &nu) - l(&nu, &mu)).abs() <= 1e-12);
        prop_assert!(l(&mu, &nu) <= l(&mu, &eta) + l(&eta, &nu) + 1e-10);
    }

    #[test]
    fn mmd_squared_is_energy_distance(mu in dist(), nu in dist(), k in gram()) {
        let rho = semimetric_from_kernel(&k);
        let m2 = mmd(&mu, &nu, &k).unwrap().powi(2);
        let e = energy_distance(&mu, &nu, &rho).unwrap();
        prop_assert!((m2 - e).abs() <= 1e-10 * (1.0 + k.values().amax()), "{m2} vs {e}");
        prop_assert!(e >= -1e-10);
    }

    #[test]
    fn duality_round_trip(k in gram(), base in 0..N) {
        let rho = semimetric_from_kernel(&k);
        let back = semimetric_from_kernel(&kernel_from_semimetric(&rho, base).unwrap());
        prop_assert!((back.values() - rho.values()).amax() <= 1e-10 * (1.0 + rho.values().amax()));
        prop_assert!(is_negative_type(&rho, 20, base as u64).negative_type);
    }
}

#[test]
fn modified_triangle_inequality_fails_for_lk() {
    let d = CostMatrix::line(&[0.0, 1.0]);
    let (mu, nu, eta) = (Dist::dirac(2, 0), Dist::dirac(2, 1), Dist::uniform(2));
    let (a, b, c) = (
        lk_distance(&mu, &nu, &d).unwrap(),
        lk_distance(&mu, &eta, &d).unwrap(),
        lk_distance(&eta, &eta, &d).unwrap(),
    );
    assert_eq!((a, b, c), (1.0, 0.5, 0.5));
    // d(μ,ν) ≤ d(μ,η) + d(η,ν) − d(η,η) would require 1 ≤ ½.
    assert!(a > b + lk_distance(&eta, &nu, &d).unwrap() - c);
}

#[test]
fn stochastic_estimate_converges() {
    let d = CostMatrix::line(&[0.0, 1.0]);
    let (mu, eta) = (Dist::dirac(2, 0), Dist::uniform(2));
    let mut hits = 0;
    for run in 0..100 {
        let mut rx = seeded(2 * run);
        let mut ry = seeded(2 * run + 1);
        let pairs = mu.samples(&mut rx).zip(eta.samples(&mut ry)).take(100_000);
        let est = lk_stochastic_estimate(pairs, &d, |n| 1.0 / n as f64).unwrap();
        if (est - 0.5).abs() <= 0.02 {
            hits += 1;
        }
    }
    assert!(hits >= 99, "{hits}/100");
}

#[test]
fn zero_self_distance_stream() {
    let d = CostMatrix::line(&[0.0, 1.0, 2.0]);
    let est = lk_stochastic_estimate(std::iter::repeat_n((1, 1), 50), &d, |n| 1.0 / n as f64).unwrap();
    assert_eq!(est, 0.0);
}
