use ksme_core::bounds::*;
use ksme_core::fixtures;
use ksme_core::mdp::{induce_chain, policy_value, InducedChain, Policy, PolicySpec, ValueMethod};
use ksme_core::metrics::{mico_fixed_point, reduce, MetricKind, MicoMethod, RewardScale};
use ksme_core::FixedPointOptions;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn opts() -> FixedPointOptions {
    FixedPointOptions::with_tol(1e-10)
}

fn chain() -> impl Strategy<Value = InducedChain> {
    (3usize..=10, 1usize..=3, 2usize..=4, prop::sample::select(vec![0.0, 0.5, 0.9]), any::<u64>(), any::<u64>())
        .prop_map(|(n, a, b, gamma, seed, pseed)| {
            let mdp = fixtures::garnet(n, a, b.min(n), 1.0, gamma, seed);
            induce_chain(&mdp, &Policy::random(n, a, pseed)).unwrap()
        })
}

/// `Δ_n(x)` by summing over `n`-step paths with explicit loops.
fn delta_by_powering(chain: &InducedChain, steps: usize) -> Vec<Vec<f64>> {
    let n = chain.n_states();
    let p = chain.p_pi();
    let r = chain.r_pi();
    let base: Vec<f64> = (0..n)
        .map(|x| {
            let mut total = 0.0;
            for a in 0..n {
                for b in 0..n {
                    total += p[(x, a)] * p[(x, b)] * (r[a] - r[b]).abs();
                }
            }
            total
        })
        .collect();
    let mut power = vec![vec![0.0; n]; n];
    for (x, row) in power.iter_mut().enumerate() {
        row[x] = 1.0;
    }
    let mut out = Vec::new();
    for _ in 0..=steps {
        out.push((0..n).map(|x| (0..n).map(|y| power[x][y] * base[y]).sum()).collect());
        let mut next = vec![vec![0.0; n]; n];
        for x in 0..n {
            for z in 0..n {
                for y in 0..n {
                    next[x][y] += power[x][z] * p[(z, y)];
                }
            }
        }
        power = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn delta_recursion_matches_powering(c in chain()) {
        let series = delta_n(&c, 5);
        let oracle = delta_by_powering(&c, 5);
        for (step, row) in oracle.iter().enumerate() {
            for (x, value) in row.iter().enumerate() {
                prop_assert!((series.values[(step, x)] - value).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn delta_sup_and_tail_shrink(c in chain()) {
        let series = delta_n(&c, 30);
        for step in 0..30 {
            let now = series.values.row(step).max();
            let next = series.values.row(step + 1).max();
            prop_assert!(next <= now + 1e-12);
        }
        let shorter = delta_n(&c, 10);
        prop_assert!(series.tail_bound <= shorter.tail_bound);
        prop_assert!(series.values.max() <= c.r_span() + 1e-12);
    }

    #[test]
    fn truncated_sum_grows_within_tail(c in chain()) {
        let n = c.n_states();
        let mut previous = delta_n(&c, 0);
        for depth in 1..40 {
            let next = delta_n(&c, depth);
            for x in 0..n {
                let step = next.discounted_sum(x) - previous.discounted_sum(x);
                prop_assert!(step >= -1e-12);
                prop_assert!(step <= previous.tail_bound + 1e-12);
            }
            previous = next;
        }
    }

    #[test]
    fn deltas_stay_below_variance_cap(c in chain()) {
        let deltas = delta_n(&c, 30);
        let v = policy_value(&c, ValueMethod::DirectSolve).unwrap();
        let (u, _) = mico_fixed_point(&c, RewardScale::raw(), MicoMethod::Iterate(opts())).unwrap();
        let report = prop17_check(&deltas, &reward_variance(&c), &reduce(&u).unwrap(), &v);
        prop_assert!(report.delta.pass, "{report:?}");
    }

    #[test]
    fn additive_margins_match_dense_oracle(c in chain()) {
        let n = c.n_states();
        let (p, r, gamma) = (c.p_pi(), c.r_pi(), c.gamma());
        // U solves (I − γ P⊗P) vec U = vec |Δr|.
        let system = DMatrix::<f64>::identity(n * n, n * n) - p.kronecker(p) * gamma;
        let rhs = DVector::from_fn(n * n, |k, _| (r[k / n] - r[k % n]).abs());
        let u = system.lu().solve(&rhs).unwrap();
        let v = (DMatrix::<f64>::identity(n, n) - p * gamma).lu().solve(r).unwrap();
        let depth = default_depth(&c, 1e-12);
        let rows = delta_by_powering(&c, depth);
        let sums: Vec<f64> = (0..n)
            .map(|x| rows.iter().enumerate().map(|(k, row)| gamma.powi(k as i32) * row[x]).sum())
            .collect();
        let deltas = delta_n(&c, depth);
        let mut t16 = f64::NEG_INFINITY;
        let mut global = f64::NEG_INFINITY;
        let sigma = reward_variance(&c).amax().sqrt();
        for x in 0..n {
            for y in x + 1..n {
                let pi_u = u[x * n + y] - 0.5 * (u[x * n + x] + u[y * n + y]);
                let lhs = (v[x] - v[y]).abs() - pi_u;
                t16 = t16.max(lhs - 0.5 * (sums[x] + sums[y]) - deltas.tail_bound);
                global = global.max(lhs - 2f64.sqrt() * sigma / (1.0 - gamma));
            }
        }

        let values = policy_value(&c, ValueMethod::DirectSolve).unwrap();
        let (mico, _) = mico_fixed_point(&c, RewardScale::raw(), MicoMethod::Iterate(opts())).unwrap();
        let pi_u = reduce(&mico).unwrap();
        let report = theorem16_check(&pi_u, &values, &deltas);
        let variance = prop17_check(&deltas, &reward_variance(&c), &pi_u, &values);
        prop_assert!((report.max_violation - t16).abs() <= 1e-8, "{} vs {t16}", report.max_violation);
        prop_assert!((variance.global.max_violation - global).abs() <= 1e-8);
    }

    #[test]
    fn upper_metrics_never_undercut_values(c in chain()) {
        let stats = gap_stats(&c, None, &[MetricKind::Mico, MetricKind::PiBisim], opts()).unwrap();
        for kind in [MetricKind::Mico, MetricKind::PiBisim] {
            prop_assert!(stats.get(kind).unwrap().min_gap >= -BOUND_TOL);
        }
    }
}

#[test]
fn ksme_undercut_is_found_and_confirmed() {
    let ranges = GarnetRanges {
        n_states: (5, 10),
        n_actions: (1, 3),
        branching: (2, 4),
        reward_sigma_target: 1.0,
        gamma: 0.9,
        policy: PolicySpec::Uniform,
    };
    let w = prop4_search(500, &ranges, 0, opts()).unwrap().expect("a witness within 500 trials");
    assert!(w.gap < WITNESS_GAP);
    let confirmed = verify_witness(&w).unwrap();
    assert!((confirmed - w.gap).abs() <= 1e-8, "{confirmed} vs {}", w.gap);
}

#[test]
fn bisim_needs_the_mdp() {
    let mdp = fixtures::garnet(4, 2, 2, 1.0, 0.9, 3);
    let c = induce_chain(&mdp, &Policy::uniform(4, 2)).unwrap();
    assert!(solve_reward_units(&c, None, MetricKind::Bisim, opts()).is_err());
    let d = solve_reward_units(&c, Some(&mdp), MetricKind::Bisim, opts()).unwrap();
    assert_eq!(d.kind(), MetricKind::Bisim);
}
