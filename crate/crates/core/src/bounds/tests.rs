use super::*;
use crate::fixtures;
use crate::mdp::{induce_chain, Policy, PolicySpec};
use crate::metrics::reduce;

fn chain_of(mdp: &Mdp) -> InducedChain {
    induce_chain(mdp, &Policy::uniform(mdp.n_states(), mdp.n_actions())).unwrap()
}

fn opts() -> FixedPointOptions {
    FixedPointOptions::default()
}

fn reduced_mico(chain: &InducedChain) -> DistanceMatrix {
    solve_reward_units(chain, None, MetricKind::ReducedMico, opts()).unwrap()
}

#[test]
fn deltas_vanish_without_branching() {
    let chain = chain_of(&fixtures::self_loop(0.0, 1.0, 0.9));
    let d = delta_n(&chain, 5);
    assert_eq!(d.n_max(), 5);
    assert_eq!(d.values.amax(), 0.0);
    assert_eq!(reward_variance(&chain).amax(), 0.0);
}

#[test]
fn deltas_vanish_with_constant_rewards() {
    let chain = chain_of(&fixtures::identical_states(4, 0.9));
    assert_eq!(delta_n(&chain, 3).values.amax(), 0.0);
    assert_eq!(reward_variance(&chain).amax(), 0.0);
}

#[test]
fn half_half_branch() {
    let chain = chain_of(&fixtures::uniform_jump(0.9));
    let d = delta_n(&chain, 4);
    for v in d.values.iter() {
        assert_close!(*v, 0.5, 1e-15);
    }
    let var = reward_variance(&chain);
    assert_close!(var[0], 0.25, 1e-15);
    assert_close!(d.tail_bound, 0.9f64.powi(5) / 0.1, 1e-12);
}

#[test]
fn default_depth_makes_tail_small() {
    let chain = chain_of(&fixtures::garnet(6, 2, 3, 1.0, 0.95, 2));
    let depth = default_depth(&chain, 1e-10);
    assert!(delta_n(&chain, depth).tail_bound < 1e-10);
    assert!(delta_n(&chain, depth - 1).tail_bound >= 1e-10 * chain.gamma());
}

#[test]
fn additive_bound_on_deterministic_chain_is_exact_bound() {
    let chain = chain_of(&fixtures::self_loop(0.0, 1.0, 0.9));
    let v = policy_value(&chain, ValueMethod::DirectSolve).unwrap();
    let report = theorem16_check(&reduced_mico(&chain), &v, &delta_n(&chain, default_depth(&chain, 1e-12)));
    assert!(report.pass);
    assert_close!(report.max_violation, 0.0, 1e-9);
}

#[test]
fn additive_bound_on_uniform_jump() {
    let chain = chain_of(&fixtures::uniform_jump(0.9));
    let v = policy_value(&chain, ValueMethod::DirectSolve).unwrap();
    let pi_u = reduced_mico(&chain);
    assert_close!(pi_u.get(0, 1), 1.0, 1e-9);
    let deltas = delta_n(&chain, default_depth(&chain, 1e-12));
    let report = theorem16_check(&pi_u, &v, &deltas);
    assert!(report.pass, "{report:?}");
    assert_eq!(report.checked, 1);
}

#[test]
fn variance_bound_examples() {
    let chain = chain_of(&fixtures::uniform_jump(0.9));
    let v = policy_value(&chain, ValueMethod::DirectSolve).unwrap();
    let report = prop17_check(&delta_n(&chain, 20), &reward_variance(&chain), &reduced_mico(&chain), &v);
    assert_close!(report.sigma, 0.5, 1e-15);
    assert!(report.pass());
    assert_close!(report.delta.max_violation, 0.5 - 2f64.sqrt() * 0.5, 1e-15);

    let det = chain_of(&fixtures::self_loop(0.0, 1.0, 0.9));
    let v = policy_value(&det, ValueMethod::DirectSolve).unwrap();
    let report = prop17_check(&delta_n(&det, 5), &reward_variance(&det), &reduced_mico(&det), &v);
    assert_eq!(report.sigma, 0.0);
    assert!(report.pass());
    assert_eq!(report.delta.max_violation, 0.0);
}

#[test]
fn additive_bound_fails_without_reward_dispersion() {
    // V = (9, 10, 0, 5.05); U(1,3) = 4.95, U(3,3) = 4.05, U(1,1) = 0.
    let chain = chain_of(&fixtures::split_successors(0.9));
    let v = policy_value(&chain, ValueMethod::DirectSolve).unwrap();
    assert_close!(v.values[3], 5.05, 1e-12);
    let pi_u = reduced_mico(&chain);
    assert_close!(pi_u.get(1, 3), 2.925, 1e-8);
    let deltas = delta_n(&chain, default_depth(&chain, 1e-12));
    assert_eq!(deltas.values.amax(), 0.0);

    let report = theorem16_check(&pi_u, &v, &deltas);
    assert!(!report.pass);
    assert_close!(report.max_violation, 2.025, 1e-8);
    let variance = prop17_check(&deltas, &reward_variance(&chain), &pi_u, &v);
    assert_eq!(variance.sigma, 0.0);
    assert!(variance.delta.pass);
    assert!(!variance.global.pass);
    assert_close!(variance.global.max_violation, 2.025, 1e-8);
}

#[test]
fn gap_stats_on_fixtures() {
    let kinds = [MetricKind::Ksme, MetricKind::PiBisim, MetricKind::Mico];
    let chain = chain_of(&fixtures::identical_states(3, 0.9));
    let stats = gap_stats(&chain, None, &kinds, opts()).unwrap();
    for kind in kinds {
        assert!(stats.get(kind).unwrap().min_gap.abs() <= 1e-9);
    }

    let chain = chain_of(&fixtures::self_loop(0.0, 1.0, 0.9));
    let stats = gap_stats(&chain, None, &kinds, opts()).unwrap();
    for kind in kinds {
        let g = stats.get(kind).unwrap();
        assert!(g.min_gap.abs() <= 1e-8 && g.mean_gap.abs() <= 1e-8, "{kind}: {g:?}");
    }
    assert!(gap_stats(&chain, None, &[MetricKind::Bisim], opts()).is_err());
}

#[test]
fn ksme_in_reward_units_matches_reduced_mico() {
    let chain = chain_of(&fixtures::garnet(7, 2, 3, 2.0, 0.9, 5));
    assert!(chain.r_span() > 1.0);
    let d = ksme_reward_units(&chain, opts()).unwrap();
    let (u, _) = mico_fixed_point(&chain, RewardScale::raw(), MicoMethod::DirectSolve).unwrap();
    assert!((d.values() - reduce(&u).unwrap().values()).amax() <= 1e-8);
}

#[test]
fn search_finds_nothing_without_reward_dispersion() {
    let ranges = GarnetRanges {
        n_states: (5, 8),
        n_actions: (1, 3),
        branching: (1, 4),
        reward_sigma_target: 0.0,
        gamma: 0.9,
        policy: PolicySpec::Uniform,
    };
    assert!(prop4_search(30, &ranges, 1, opts()).unwrap().is_none());
}
