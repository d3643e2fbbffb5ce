//! `ksme solve`: behavioural metrics and value functions of one MDP.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ksme_core::bounds::solve_reward_units_with_report;
use ksme_core::csvio::write_matrix;
use ksme_core::mdp::{optimal_value, policy_value, ValueMethod};
use ksme_core::metrics::MetricKind;
use ksme_core::{induce_chain, FixedPointOptions, FixedPointReport, PolicySpec, DEFAULT_TOL};

use crate::error::{CliError, CliResult, Status};
use crate::files::{create_dir, read_mdp, to_json, versioned_csv, write_snapshot, write_text};

pub const VALUES_SCHEMA: &str = "ksme-values";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub mdp: PathBuf,
    pub policy: PolicySpec,
    /// Metrics to solve; each one is written to `<name>.csv` in reward units.
    pub which: Vec<MetricKind>,
    pub tol: f64,
    /// Iteration cap for every fixed-point solve; `None` derives it from `tol`.
    #[serde(default)]
    pub max_iter: Option<usize>,
}

impl SolveOptions {
    pub fn new(mdp: impl Into<PathBuf>) -> Self {
        Self {
            mdp: mdp.into(),
            policy: PolicySpec::Uniform,
            which: MetricKind::ALL.to_vec(),
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct SolveReport {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    metrics: BTreeMap<MetricKind, FixedPointReport>,
}

pub(crate) fn check_tol(tol: f64) -> CliResult<FixedPointOptions> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Input(format!("tolerance must be positive, got {tol}")));
    }
    Ok(FixedPointOptions::with_tol(tol))
}

pub fn cmd_solve(opts: &SolveOptions, out: &Path) -> CliResult<Status> {
    let fp = FixedPointOptions {
        max_iter: opts.max_iter,
        ..check_tol(opts.tol)?
    };
    let mdp = read_mdp(&opts.mdp)?;
    let policy = opts.policy.resolve(mdp.n_states(), mdp.n_actions());
    let chain = induce_chain(&mdp, &policy)?;
    create_dir(out)?;
    write_snapshot(out, opts)?;

    let v = policy_value(&chain, ValueMethod::DirectSolve)?;
    let v_star = optimal_value(&mdp, fp)?;
    let rows: Vec<Vec<String>> = (0..mdp.n_states())
        .map(|x| vec![x.to_string(), v.values[x].to_string(), v_star.values[x].to_string()])
        .collect();
    write_text(
        &out.join("values.csv"),
        &versioned_csv(VALUES_SCHEMA, &["state", "v_pi", "v_star"], &rows)?,
    )?;

    let mut metrics = BTreeMap::new();
    for &kind in &opts.which {
        let (d, report) = solve_reward_units_with_report(&chain, Some(&mdp), kind, fp)?;
        let mut buf = Vec::new();
        write_matrix(&mut buf, d.values())?;
        write_text(
            &out.join(format!("{kind}.csv")),
            std::str::from_utf8(&buf).expect("csv output is utf-8"),
        )?;
        metrics.insert(kind, report);
    }
    let report = SolveReport {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        gamma: mdp.gamma(),
        metrics,
    };
    write_text(&out.join("report.json"), &to_json(&report))?;
    Ok(Status::Pass)
}
