//! Finite MDPs, policies, policy-collapsed chains and value solvers.

mod garnet;
mod io;

pub use garnet::{generate_garnet, GarnetConfig};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{self, FixedPointOptions, FixedPointReport};
use crate::rng::seeded;

/// Tolerance on probability row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite MDP with expected rewards `r_x^a`.
///
/// Transitions are stored flat, state-major then action then next state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
}

/// Outcome of [`Mdp::validate`]; violations are data, not faults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Mdp {
    /// Build and validate.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::from_parts_unchecked(n_states, n_actions, transitions, rewards, gamma)?;
        let report = mdp.validate();
        if report.is_ok() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report.violations))
        }
    }

    /// Build without checking the probabilistic invariants (shapes are still
    /// checked). Use [`Mdp::validate`] to inspect the result.
    pub fn from_parts_unchecked(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension(
                "an MDP needs at least one state and one action".into(),
            ));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if rewards.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "reward table has {} entries, expected {}",
                rewards.len(),
                n_states * n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    /// Build from per-action transition matrices and a `|X|×|A|` reward table.
    pub fn from_matrices(
        transitions: &[DMatrix<f64>],
        rewards: &DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n_actions = transitions.len();
        let n_states = rewards.nrows();
        if rewards.ncols() != n_actions {
            return Err(Error::Dimension(format!(
                "reward table has {} columns for {} actions",
                rewards.ncols(),
                n_actions
            )));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for x in 0..n_states {
            for p in transitions {
                if p.nrows() != n_states || p.ncols() != n_states {
                    return Err(Error::Dimension("transition matrix is not |X|×|X|".into()));
                }
                flat.extend(p.row(x).iter());
            }
        }
        let flat_rewards = (0..n_states)
            .flat_map(|x| (0..n_actions).map(move |a| rewards[(x, a)]))
            .collect();
        Self::new(n_states, n_actions, flat, flat_rewards, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Next-state distribution `P_x^a`.
    pub fn transition(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[x * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    /// `P^a` as a dense matrix.
    pub fn action_matrix(&self, a: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_states, self.n_states, |x, y| self.transition(x, a)[y])
    }

    /// Copy with every reward multiplied by `factor`.
    pub fn with_scaled_rewards(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.rewards.iter_mut().for_each(|r| *r *= factor);
        out
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition(x, a);
                if let Some((y, p)) = row
                    .iter()
                    .enumerate()
                    .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
                {
                    violations.push(format!("transition(x={x},a={a},y={y}) = {p} is not a probability"));
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                    violations.push(format!("row(x={x},a={a}) sums to {sum}"));
                }
                let r = self.reward(x, a);
                if !r.is_finite() {
                    violations.push(format!("reward(x={x},a={a}) = {r} is not finite"));
                }
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            violations.push(format!("gamma out of [0,1): {}", self.gamma));
        }
        ValidationReport { violations }
    }
}

/// Validate an MDP, returning the list of violated invariants.
pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    mdp.validate()
}

/// Per-state action distributions `π(·|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for x in 0..n_states {
            let row = &probs[x * n_actions..(x + 1) * n_actions];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "policy row {x} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Point-mass policy choosing `actions[x]` in state `x`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Dimension(format!("action {a} out of range in state {x}")));
            }
            probs[x * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    /// Rows drawn as normalized uniform(0,1] weights.
    pub fn random(n_states: usize, n_actions: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            let row: Vec<f64> = (0..n_actions).map(|_| 1.0 - rng.random::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            probs.extend(row.iter().map(|w| w / sum));
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// How to pick the evaluation policy for an MDP whose shape is not yet known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicySpec {
    #[default]
    Uniform,
    SeededRandom { seed: u64 },
}

impl PolicySpec {
    pub fn resolve(&self, n_states: usize, n_actions: usize) -> Policy {
        match *self {
            PolicySpec::Uniform => Policy::uniform(n_states, n_actions),
            PolicySpec::SeededRandom { seed } => Policy::random(n_states, n_actions, seed),
        }
    }
}

impl std::str::FromStr for PolicySpec {
    type Err = Error;

    /// `uniform` or `random:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "uniform" => Ok(PolicySpec::Uniform),
            Some(("random", seed)) => seed
                .parse()
                .map(|seed| PolicySpec::SeededRandom { seed })
                .map_err(|_| Error::Parse(format!("bad policy seed {seed:?}"))),
            _ => Err(Error::Parse(format!("unknown policy spec {s:?}"))),
        }
    }
}

/// The Markov chain `(P^π, r^π)` obtained by fixing a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedChain {
    p_pi: DMatrix<f64>,
    r_pi: DVector<f64>,
    gamma: f64,
    r_span: f64,
}

impl InducedChain {
    pub fn new(p_pi: DMatrix<f64>, r_pi: DVector<f64>, gamma: f64) -> Result<Self> {
        let n = p_pi.nrows();
        if p_pi.ncols() != n || r_pi.len() != n || n == 0 {
            return Err(Error::Dimension(format!(
                "chain shapes {}x{} and {} disagree",
                p_pi.nrows(),
                p_pi.ncols(),
                r_pi.len()
            )));
        }
        for x in 0..n {
            let row = p_pi.row(x);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "chain row {x} sums to {sum}"
                )));
            }
        }
        if r_pi.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(vec!["chain rewards must be finite".into()]));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(vec![format!("gamma out of [0,1): {gamma}")]));
        }
        let r_span = r_pi.max() - r_pi.min();
        Ok(Self {
            p_pi,
            r_pi,
            gamma,
            r_span,
        })
    }

    pub fn n_states(&self) -> usize {
        self.r_pi.len()
    }

    pub fn p_pi(&self) -> &DMatrix<f64> {
        &self.p_pi
    }

    pub fn r_pi(&self) -> &DVector<f64> {
        &self.r_pi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `max(r^π) − min(r^π)`.
    pub fn r_span(&self) -> f64 {
        self.r_span
    }

    /// Copy with rewards multiplied by `factor` (`r_span` scales by `|factor|`).
    pub fn with_scaled_rewards(&self, factor: f64) -> Self {
        let r_pi = &self.r_pi * factor;
        let r_span = r_pi.max() - r_pi.min();
        Self {
            p_pi: self.p_pi.clone(),
            r_pi,
            gamma: self.gamma,
            r_span,
        }
    }

    /// One-step reward variance `Var_R(P_x^π)` for every state, clamped at 0.
    pub fn reward_variance(&self) -> DVector<f64> {
        let n = self.n_states();
        DVector::from_fn(n, |x, _| {
            let row = self.p_pi.row(x);
            let mean: f64 = row.iter().zip(self.r_pi.iter()).map(|(p, r)| p * r).sum();
            // Centered form keeps round-off small.
            let var: f64 = row
                .iter()
                .zip(self.r_pi.iter())
                .map(|(p, r)| p * (r - mean) * (r - mean))
                .sum();
            var.max(0.0)
        })
    }

    /// `max_x √Var_R(P_x^π)`.
    pub fn max_reward_sd(&self) -> f64 {
        self.reward_variance().iter().fold(0.0_f64, |m, v| m.max(v.sqrt()))
    }
}

/// Collapse an MDP under a policy.
pub fn induce_chain(mdp: &Mdp, policy: &Policy) -> Result<InducedChain> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension(format!(
            "policy is {}x{} but the MDP is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for x in 0..n {
        for a in 0..mdp.n_actions() {
            let w = policy.prob(x, a);
            if w == 0.0 {
                continue;
            }
            r[x] += w * mdp.reward(x, a);
            for (y, q) in mdp.transition(x, a).iter().enumerate() {
                p[(x, y)] += w * q;
            }
        }
    }
    InducedChain::new(p, r, mdp.gamma())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Policy,
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: DVector<f64>,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueMethod {
    DirectSolve,
    Iterate(FixedPointOptions),
}

/// `V^π` solving `V = r^π + γ P^π V`.
pub fn policy_value(chain: &InducedChain, method: ValueMethod) -> Result<ValueFunction> {
    let values = match method {
        ValueMethod::DirectSolve => {
            let n = chain.n_states();
            let a = DMatrix::identity(n, n) - chain.p_pi() * chain.gamma();
            a.lu().solve(chain.r_pi()).ok_or(Error::Singular)?
        }
        ValueMethod::Iterate(opts) => {
            let (v, _) = policy_value_iterate(chain, opts)?;
            v
        }
    };
    Ok(ValueFunction {
        values,
        kind: ValueKind::Policy,
    })
}

fn policy_value_iterate(
    chain: &InducedChain,
    opts: FixedPointOptions,
) -> Result<(DVector<f64>, FixedPointReport)> {
    let gamma = chain.gamma();
    fixed_point::iterate(
        DVector::zeros(chain.n_states()),
        gamma,
        opts,
        |v| Ok(chain.r_pi() + chain.p_pi() * v * gamma),
        |a, b| (a - b).amax(),
    )
}

/// `V*` by value iteration on the max-over-actions Bellman operator.
pub fn optimal_value(mdp: &Mdp, opts: FixedPointOptions) -> Result<ValueFunction> {
    let gamma = mdp.gamma();
    let n = mdp.n_states();
    let (values, _) = fixed_point::iterate(
        DVector::zeros(n),
        gamma,
        opts,
        |v: &DVector<f64>| {
            Ok(DVector::from_fn(n, |x, _| {
                (0..mdp.n_actions())
                    .map(|a| {
                        let next: f64 = mdp
                            .transition(x, a)
                            .iter()
                            .zip(v.iter())
                            .map(|(p, v)| p * v)
                            .sum();
                        mdp.reward(x, a) + gamma * next
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            }))
        },
        |a, b| (a - b).amax(),
    )?;
    Ok(ValueFunction {
        values,
        kind: ValueKind::Optimal,
    })
}
