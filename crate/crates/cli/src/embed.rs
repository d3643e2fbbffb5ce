//! `ksme embed`: exact spectral features of the KSMe kernel and their random
//! projections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ksme_core::csvio::write_embedding;
use ksme_core::embedding::{
    distortion_check, jl_dimension, jl_project, quotient_states, spectral_embed, FeatureEmbedding,
    DEFAULT_MERGE_TOL,
};
use ksme_core::metrics::{kernel_fixed_point, ksme_distance, RewardScale};
use ksme_core::{induce_chain, PolicySpec, DEFAULT_TOL};

use crate::error::{CliError, CliResult, Status};
use crate::files::{create_dir, read_mdp, to_json, versioned_csv, write_snapshot, write_text};
use crate::solve::check_tol;

pub const DISTORTION_SCHEMA: &str = "ksme-distortion";

/// Fraction of projection seeds that must meet the distortion bound.
pub const REQUIRED_PASS_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub mdp: PathBuf,
    pub policy: PolicySpec,
    pub epsilon: f64,
    /// Projection seeds are `seed, seed + 1, …, seed + seeds − 1`.
    pub seeds: usize,
    pub seed: u64,
    pub tol: f64,
}

impl EmbedOptions {
    pub fn new(mdp: impl Into<PathBuf>) -> Self {
        Self {
            mdp: mdp.into(),
            policy: PolicySpec::Uniform,
            epsilon: 0.5,
            seeds: 100,
            seed: 0,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedSummary {
    pub n_states: usize,
    pub n_classes: usize,
    pub spectral_dim: usize,
    pub m: usize,
    pub epsilon: f64,
    pub seeds: usize,
    pub passes: usize,
    pub required: usize,
    pub pass: bool,
}

fn embedding_text(emb: &FeatureEmbedding) -> CliResult<String> {
    let mut buf = Vec::new();
    write_embedding(&mut buf, emb)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn cmd_embed(opts: &EmbedOptions, out: &Path) -> CliResult<Status> {
    let summary = run_embed(opts, out)?;
    if summary.pass {
        Ok(Status::Pass)
    } else {
        Ok(Status::SoftFailure(format!(
            "{} of {} seeds met the distortion bound, {} required",
            summary.passes, summary.seeds, summary.required
        )))
    }
}

pub fn run_embed(opts: &EmbedOptions, out: &Path) -> CliResult<EmbedSummary> {
    if !(opts.epsilon > 0.0 && opts.epsilon < 1.0) {
        return Err(CliError::Input(format!("epsilon {} outside (0, 1)", opts.epsilon)));
    }
    if opts.seeds == 0 {
        return Err(CliError::Input("at least one projection seed is needed".into()));
    }
    let fp = check_tol(opts.tol)?;
    let mdp = read_mdp(&opts.mdp)?;
    let chain = induce_chain(&mdp, &opts.policy.resolve(mdp.n_states(), mdp.n_actions()))?;
    create_dir(&out.join("jl"))?;
    write_snapshot(out, opts)?;

    let (k, _) = kernel_fixed_point(&chain, RewardScale::canonical(&chain), fp)?;
    let d = ksme_distance(&k)?;
    let quotient = quotient_states(&d, DEFAULT_MERGE_TOL);
    let spectral = spectral_embed(&k, &quotient)?;
    write_text(&out.join("spectral.csv"), &embedding_text(&spectral)?)?;

    let m = jl_dimension(quotient.n_classes(), opts.epsilon)?;
    let mut rows = Vec::with_capacity(opts.seeds);
    let mut passes = 0;
    for i in 0..opts.seeds {
        let seed = opts.seed.wrapping_add(i as u64);
        let projected = jl_project(&spectral, m, seed)?;
        write_text(&out.join("jl").join(format!("seed_{seed}.csv")), &embedding_text(&projected)?)?;
        let report = distortion_check(&d, &projected, opts.epsilon, DEFAULT_MERGE_TOL)?;
        passes += usize::from(report.pass);
        rows.push(vec![
            seed.to_string(),
            report.m.to_string(),
            report.epsilon_requested.to_string(),
            report.max_over.to_string(),
            report.max_under.to_string(),
            report.pairs.to_string(),
            report.pass.to_string(),
        ]);
    }
    let columns = ["seed", "m", "epsilon", "max_over", "max_under", "pairs", "pass"];
    write_text(&out.join("distortion.csv"), &versioned_csv(DISTORTION_SCHEMA, &columns, &rows)?)?;

    let required = (REQUIRED_PASS_FRACTION * opts.seeds as f64).ceil() as usize;
    let summary = EmbedSummary {
        n_states: chain.n_states(),
        n_classes: quotient.n_classes(),
        spectral_dim: spectral.dim(),
        m,
        epsilon: opts.epsilon,
        seeds: opts.seeds,
        passes,
        required,
        pass: passes >= required,
    };
    write_text(&out.join("embed_report.json"), &to_json(&summary))?;
    Ok(summary)
}
