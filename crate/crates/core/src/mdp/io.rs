//! JSON (de)serialization of MDPs.
//!
//! ```json
//! {"n_states": 2, "n_actions": 1, "gamma": 0.9,
//!  "transitions": [[[1.0, 0.0]], [[0.0, 1.0]]],
//!  "rewards": [[0.0], [1.0]]}
//! ```
//!
//! `transitions[x][a][y]` is `P(y | x, a)`; `rewards[x][a]` is `r_x^a`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mdp;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
}

impl Mdp {
    /// Parse and re-validate an MDP.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(s)?;
        let (n, m) = (file.n_states, file.n_actions);
        if file.transitions.len() != n
            || file.transitions.iter().any(|per_action| {
                per_action.len() != m || per_action.iter().any(|row| row.len() != n)
            })
        {
            return Err(Error::Parse(format!("transitions must have shape {n}x{m}x{n}")));
        }
        if file.rewards.len() != n || file.rewards.iter().any(|row| row.len() != m) {
            return Err(Error::Parse(format!("rewards must have shape {n}x{m}")));
        }
        let transitions = file.transitions.into_iter().flatten().flatten().collect();
        let rewards = file.rewards.into_iter().flatten().collect();
        Mdp::new(n, m, transitions, rewards, file.gamma)
    }

    pub fn to_json_string(&self) -> String {
        let (n, m) = (self.n_states, self.n_actions);
        let file = MdpFile {
            n_states: n,
            n_actions: m,
            gamma: self.gamma,
            transitions: (0..n)
                .map(|x| (0..m).map(|a| self.transition(x, a).to_vec()).collect())
                .collect(),
            rewards: (0..n)
                .map(|x| (0..m).map(|a| self.reward(x, a)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("MDP serialization cannot fail")
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}
