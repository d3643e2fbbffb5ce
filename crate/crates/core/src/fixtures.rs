//! Small MDPs with closed-form metrics, shared by tests and the CLI check suite.

use crate::mdp::{generate_garnet, GarnetConfig, Mdp, PolicySpec};

/// Two absorbing states with rewards `(r0, r1)` and one action.
pub fn self_loop(r0: f64, r1: f64, gamma: f64) -> Mdp {
    Mdp::new(2, 1, vec![1.0, 0.0, 0.0, 1.0], vec![r0, r1], gamma).expect("valid fixture")
}

/// Two states that both jump to the uniform distribution over both states,
/// with rewards `(0, 1)` and one action.
pub fn uniform_jump(gamma: f64) -> Mdp {
    Mdp::new(2, 1, vec![0.5; 4], vec![0.0, 1.0], gamma).expect("valid fixture")
}

/// `n` states with identical rewards and identical transition rows.
pub fn identical_states(n: usize, gamma: f64) -> Mdp {
    let row = 1.0 / n as f64;
    Mdp::new(n, 1, vec![row; n * n], vec![0.25; n], gamma).expect("valid fixture")
}

/// Garnet under the uniform evaluation policy; panics on degenerate configs.
pub fn garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    sigma: f64,
    gamma: f64,
    seed: u64,
) -> Mdp {
    generate_garnet(&GarnetConfig {
        n_states,
        n_actions,
        branching,
        reward_sigma_target: sigma,
        gamma,
        seed,
        policy: PolicySpec::Uniform,
    })
    .expect("valid garnet fixture")
}

/// Four states where every one-step reward distribution is a point mass:
/// `0 -> 1`, `1 -> 1`, `2 -> 2`, `3 -> {0, 2}` uniformly, rewards `(0, 1, 0, 1)`.
/// All `Δ_n` vanish, yet `|V(1) − V(3)| > ΠU(1, 3)`.
pub fn split_successors(gamma: f64) -> Mdp {
    #[rustfmt::skip]
    let p = vec![
        0.0, 1.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.5, 0.0, 0.5, 0.0,
    ];
    Mdp::new(4, 1, p, vec![0.0, 1.0, 0.0, 1.0], gamma).expect("valid fixture")
}
