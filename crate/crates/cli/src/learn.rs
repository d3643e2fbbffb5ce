//! `ksme learn`: fit a tabular inner-product embedding to the KSMe by
//! semi-gradient descent and compare it with the exact distance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ksme_core::csvio::{write_embedding, write_loss};
use ksme_core::learning::{train, TrainConfig};
use ksme_core::metrics::{kernel_fixed_point, ksme_distance, RewardScale};
use ksme_core::{induce_chain, FixedPointOptions, PolicySpec};

use crate::error::{CliResult, Status};
use crate::files::{create_dir, read_json, read_mdp, to_json, versioned_csv, write_snapshot, write_text};

pub const COMPARISON_SCHEMA: &str = "ksme-comparison";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    pub mdp: PathBuf,
    pub policy: PolicySpec,
    pub train: TrainConfig,
}

impl LearnOptions {
    /// Options with the training configuration read from `config`, if given.
    pub fn load(mdp: impl Into<PathBuf>, config: Option<&Path>) -> CliResult<Self> {
        let train = match config {
            Some(path) => read_json(path)?,
            None => TrainConfig::default(),
        };
        Ok(Self {
            mdp: mdp.into(),
            policy: PolicySpec::Uniform,
            train,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnSummary {
    pub m: usize,
    pub steps: usize,
    pub final_loss: f64,
    /// `max |learned − exact| / max exact` over state pairs.
    pub max_relative_error: f64,
}

pub fn cmd_learn(opts: &LearnOptions, out: &Path) -> CliResult<Status> {
    run_learn(opts, out).map(|_| Status::Pass)
}

pub fn run_learn(opts: &LearnOptions, out: &Path) -> CliResult<LearnSummary> {
    opts.train.validate()?;
    let mdp = read_mdp(&opts.mdp)?;
    let chain = induce_chain(&mdp, &opts.policy.resolve(mdp.n_states(), mdp.n_actions()))?;
    create_dir(out)?;
    write_snapshot(out, opts)?;

    let scale = RewardScale::canonical(&chain);
    let outcome = train(&chain, scale, &opts.train)?;
    let (k, _) = kernel_fixed_point(&chain, scale, FixedPointOptions::default())?;
    let exact = ksme_distance(&k)?;

    let mut buf = Vec::new();
    write_loss(&mut buf, &outcome.losses)?;
    write_text(&out.join("loss.csv"), std::str::from_utf8(&buf).expect("utf-8"))?;
    let mut buf = Vec::new();
    write_embedding(&mut buf, &outcome.embedding.to_features())?;
    write_text(&out.join("embedding.csv"), std::str::from_utf8(&buf).expect("utf-8"))?;

    let n = chain.n_states();
    let scale_ref = exact.values().max();
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for x in 0..n {
        for y in x + 1..n {
            let learned = outcome.embedding.sq_distance(x, y);
            let target = exact.get(x, y);
            worst = worst.max((learned - target).abs());
            rows.push(vec![
                x.to_string(),
                y.to_string(),
                learned.to_string(),
                target.to_string(),
                (learned - target).abs().to_string(),
            ]);
        }
    }
    let columns = ["x", "y", "learned", "exact", "abs_error"];
    write_text(&out.join("comparison.csv"), &versioned_csv(COMPARISON_SCHEMA, &columns, &rows)?)?;

    let summary = LearnSummary {
        m: outcome.embedding.m(),
        steps: outcome.losses.len(),
        final_loss: *outcome.losses.last().expect("at least one step"),
        max_relative_error: if scale_ref > 0.0 { worst / scale_ref } else { worst },
    };
    write_text(&out.join("learn_report.json"), &to_json(&summary))?;
    Ok(summary)
}
