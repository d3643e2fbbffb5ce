//! Randomized search for state pairs where the KSMe falls below the value gap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ksme_reward_units;
use crate::error::{Error, Result};
use crate::fixed_point::FixedPointOptions;
use crate::mdp::{generate_garnet, induce_chain, policy_value, GarnetConfig, Mdp, PolicySpec, ValueMethod};
use crate::metrics::{mico_fixed_point, reduce, MicoMethod, RewardScale};
use crate::rng::seeded;

/// Witness threshold on `d_ks(x,y) − |V(x) − V(y)|`.
pub const WITNESS_GAP: f64 = -1e-6;

/// Inclusive ranges sampled per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarnetRanges {
    pub n_states: (usize, usize),
    pub n_actions: (usize, usize),
    pub branching: (usize, usize),
    pub reward_sigma_target: f64,
    pub gamma: f64,
    #[serde(default)]
    pub policy: PolicySpec,
}

impl GarnetRanges {
    fn sample(&self, rng: &mut impl Rng) -> GarnetConfig {
        let n_states = rng.random_range(self.n_states.0..=self.n_states.1);
        let n_actions = rng.random_range(self.n_actions.0..=self.n_actions.1);
        let b_hi = self.branching.1.min(n_states);
        let branching = rng.random_range(self.branching.0.min(b_hi)..=b_hi);
        GarnetConfig {
            n_states,
            n_actions,
            branching,
            reward_sigma_target: self.reward_sigma_target,
            gamma: self.gamma,
            seed: rng.random(),
            policy: self.policy.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UndercutWitness {
    pub trial: usize,
    pub config: GarnetConfig,
    pub mdp: Mdp,
    pub pair: (usize, usize),
    /// `d_ks(x,y) − |V(x) − V(y)|`, negative.
    pub gap: f64,
}

/// First Garnet, in trial order, with a pair whose KSMe gap is below −1e-6.
///
/// Trial `i` draws its configuration from a generator seeded with `seed ^ i`.
pub fn prop4_search(
    n_trials: usize,
    ranges: &GarnetRanges,
    seed: u64,
    opts: FixedPointOptions,
) -> Result<Option<UndercutWitness>> {
    if ranges.n_states.0 == 0 || ranges.n_states.0 > ranges.n_states.1 {
        return Err(Error::Config(format!("state range {:?}", ranges.n_states)));
    }
    for trial in 0..n_trials {
        let mut rng = seeded(seed ^ trial as u64);
        let config = ranges.sample(&mut rng);
        let mdp = match generate_garnet(&config) {
            Ok(mdp) => mdp,
            Err(Error::DegenerateGarnet(_)) => continue,
            Err(e) => return Err(e),
        };
        let policy = config.policy.resolve(mdp.n_states(), mdp.n_actions());
        let chain = induce_chain(&mdp, &policy)?;
        let v = policy_value(&chain, ValueMethod::DirectSolve)?;
        let d = ksme_reward_units(&chain, opts)?;
        let n = chain.n_states();
        let mut worst: Option<((usize, usize), f64)> = None;
        for x in 0..n {
            for y in x + 1..n {
                let g = d.get(x, y) - (v.values[x] - v.values[y]).abs();
                if worst.is_none_or(|(_, w)| g < w) {
                    worst = Some(((x, y), g));
                }
            }
        }
        if let Some((pair, gap)) = worst.filter(|(_, g)| *g < WITNESS_GAP) {
            return Ok(Some(UndercutWitness {
                trial,
                config,
                mdp,
                pair,
                gap,
            }));
        }
    }
    Ok(None)
}

/// Recompute the witness gap along an independent route: the reduced MICo
/// distance from a dense linear solve and `V^π` by iteration.
pub fn verify_witness(w: &UndercutWitness) -> Result<f64> {
    let policy = w.config.policy.resolve(w.mdp.n_states(), w.mdp.n_actions());
    let chain = induce_chain(&w.mdp, &policy)?;
    let v = policy_value(&chain, ValueMethod::Iterate(FixedPointOptions::default()))?;
    let (u, _) = mico_fixed_point(&chain, RewardScale::raw(), MicoMethod::DirectSolve)?;
    let pi_u = reduce(&u)?;
    let (x, y) = w.pair;
    Ok(pi_u.get(x, y) - (v.values[x] - v.values[y]).abs())
}
