use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{induce_chain, Mdp, PolicySpec};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Parameters of a random Garnet MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarnetConfig {
    pub n_states: usize,
    pub n_actions: usize,
    /// Number of reachable next states for every `(x, a)`.
    pub branching: usize,
    /// Target for `max_x √Var_R(P_x^π)` after rescaling.
    pub reward_sigma_target: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Policy under which the reward dispersion is measured.
    #[serde(default)]
    pub policy: PolicySpec,
}

impl GarnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::Config("garnet needs at least one state and action".into()));
        }
        if self.branching == 0 || self.branching > self.n_states {
            return Err(Error::Config(format!(
                "branching {} outside [1, {}]",
                self.branching, self.n_states
            )));
        }
        if !(self.reward_sigma_target >= 0.0 && self.reward_sigma_target.is_finite()) {
            return Err(Error::Config(format!(
                "reward sigma target {} must be a finite nonnegative number",
                self.reward_sigma_target
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma out of [0,1): {}", self.gamma)));
        }
        Ok(())
    }
}

/// Generate a Garnet MDP.
///
/// For each `(x, a)`, `branching` distinct successors are drawn uniformly
/// without replacement and weighted by normalized uniform(0,1] draws; rewards
/// are uniform(−1, 1). The reward table is then rescaled so that the largest
/// one-step reward standard deviation under the evaluation policy equals the
/// target. A zero target yields an all-zero reward table.
pub fn generate_garnet(config: &GarnetConfig) -> Result<Mdp> {
    config.validate()?;
    let (n, n_actions, b) = (config.n_states, config.n_actions, config.branching);
    let mut rng = seeded(config.seed);
    let mut transitions = vec![0.0; n * n_actions * n];
    for x in 0..n {
        for a in 0..n_actions {
            let successors = index::sample(&mut rng, n, b);
            let weights: Vec<f64> = (0..b).map(|_| 1.0 - rng.random::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let row = &mut transitions[(x * n_actions + a) * n..(x * n_actions + a + 1) * n];
            for (y, w) in successors.iter().zip(&weights) {
                row[y] = w / total;
            }
        }
    }
    let rewards: Vec<f64> = (0..n * n_actions)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let raw = Mdp::new(n, n_actions, transitions, rewards, config.gamma)?;

    let sigma = config.reward_sigma_target;
    if sigma == 0.0 {
        return Ok(raw.with_scaled_rewards(0.0));
    }
    let policy = config.policy.resolve(n, n_actions);
    let dispersion = induce_chain(&raw, &policy)?.max_reward_sd();
    if dispersion == 0.0 {
        return Err(Error::DegenerateGarnet(sigma));
    }
    Ok(raw.with_scaled_rewards(sigma / dispersion))
}
