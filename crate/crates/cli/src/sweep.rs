//! `ksme sweep`: signed gaps `d(x,y) − |V^π(x) − V^π(y)|` over random Garnets
//! at a grid of reward dispersions.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ksme_core::bounds::gap_stats;
use ksme_core::mdp::{generate_garnet, GarnetConfig};
use ksme_core::metrics::MetricKind;
use ksme_core::rng::{mix_seed, seeded};
use ksme_core::{induce_chain, FixedPointOptions, PolicySpec, DEFAULT_TOL};

use crate::error::{CliError, CliResult, Status};
use crate::files::{to_json, write_text};

pub const SWEEP_SCHEMA: &str = "ksme-sweep";

/// Metric kinds compared by the sweep, in column order.
pub const SWEEP_KINDS: [MetricKind; 3] = [MetricKind::Ksme, MetricKind::PiBisim, MetricKind::Mico];

pub const SWEEP_COLUMNS: [&str; 11] = [
    "sigma",
    "mdp_index",
    "n_states",
    "n_actions",
    "ksme_min_gap",
    "ksme_mean_gap",
    "pi_bisim_min_gap",
    "pi_bisim_mean_gap",
    "mico_min_gap",
    "mico_mean_gap",
    "flag",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sigma_grid: Vec<f64>,
    pub n_mdps_per_sigma: usize,
    /// Inclusive ranges.
    pub n_states: (usize, usize),
    pub n_actions: (usize, usize),
    pub branching: (usize, usize),
    pub gamma: f64,
    pub policy: PolicySpec,
    pub seed: u64,
    pub workers: usize,
    pub tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            n_mdps_per_sigma: 100,
            n_states: (10, 50),
            n_actions: (1, 4),
            branching: (2, 5),
            gamma: 0.9,
            policy: PolicySpec::Uniform,
            seed: 0,
            workers: 8,
            tol: DEFAULT_TOL,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Input(format!("sweep config: {msg}")));
        if self.sigma_grid.is_empty() {
            return bad("sigma_grid is empty".into());
        }
        if let Some(s) = self.sigma_grid.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return bad(format!("sigma {s} must be finite and nonnegative"));
        }
        if self.n_mdps_per_sigma == 0 || self.workers == 0 {
            return bad("n_mdps_per_sigma and workers must be at least 1".into());
        }
        for (name, (lo, hi)) in [
            ("n_states", self.n_states),
            ("n_actions", self.n_actions),
            ("branching", self.branching),
        ] {
            if lo == 0 || lo > hi {
                return bad(format!("{name} range ({lo}, {hi})"));
            }
        }
        if self.branching.0 > self.n_states.0 {
            return bad("branching lower bound exceeds the smallest state count".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol {} must be positive", self.tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPair {
    pub min_gap: f64,
    pub mean_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub mdp_index: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// Gaps in [`SWEEP_KINDS`] order; NaN when the row is flagged.
    pub gaps: [GapPair; 3],
    /// Solver failure for this MDP, if any.
    pub flag: Option<String>,
}

impl SweepRow {
    pub fn gap(&self, kind: MetricKind) -> Option<GapPair> {
        SWEEP_KINDS.iter().position(|k| *k == kind).map(|i| self.gaps[i])
    }

    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.sigma.to_string(),
            self.mdp_index.to_string(),
            self.n_states.to_string(),
            self.n_actions.to_string(),
        ];
        for g in &self.gaps {
            r.push(g.min_gap.to_string());
            r.push(g.mean_gap.to_string());
        }
        r.push(self.flag.clone().unwrap_or_default());
        r
    }
}

fn job(cfg: &SweepConfig, sigma_index: usize, mdp_index: usize) -> SweepRow {
    let sigma = cfg.sigma_grid[sigma_index];
    let stream = (sigma_index * cfg.n_mdps_per_sigma + mdp_index) as u64;
    let mut rng = seeded(mix_seed(cfg.seed, stream));
    let n_states = rng.random_range(cfg.n_states.0..=cfg.n_states.1);
    let n_actions = rng.random_range(cfg.n_actions.0..=cfg.n_actions.1);
    let b_hi = cfg.branching.1.min(n_states);
    let branching = rng.random_range(cfg.branching.0.min(b_hi)..=b_hi);
    let garnet = GarnetConfig {
        n_states,
        n_actions,
        branching,
        reward_sigma_target: sigma,
        gamma: cfg.gamma,
        seed: rng.random(),
        policy: cfg.policy,
    };
    let nan = GapPair {
        min_gap: f64::NAN,
        mean_gap: f64::NAN,
    };
    let mut row = SweepRow {
        sigma,
        mdp_index,
        n_states,
        n_actions,
        gaps: [nan; 3],
        flag: None,
    };
    let result = generate_garnet(&garnet).and_then(|mdp| {
        let chain = induce_chain(&mdp, &cfg.policy.resolve(n_states, n_actions))?;
        gap_stats(&chain, None, &SWEEP_KINDS, FixedPointOptions::with_tol(cfg.tol))
    });
    match result {
        Ok(stats) => {
            for (slot, kind) in row.gaps.iter_mut().zip(SWEEP_KINDS) {
                let g = stats.get(kind).expect("requested kind");
                *slot = GapPair {
                    min_gap: g.min_gap,
                    mean_gap: g.mean_gap,
                };
            }
        }
        Err(e) => row.flag = Some(e.to_string()),
    }
    row
}

/// Run every `(σ, mdp)` job on a pool of `cfg.workers` threads. Rows come back
/// sorted by `(σ index, mdp_index)` whatever the scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> CliResult<Vec<SweepRow>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.sigma_grid.len())
        .flat_map(|s| (0..cfg.n_mdps_per_sigma).map(move |m| (s, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Input(format!("worker pool: {e}")))?;
    let mut rows: Vec<((usize, usize), SweepRow)> =
        pool.install(|| jobs.par_iter().map(|&(s, m)| ((s, m), job(cfg, s, m))).collect());
    rows.sort_by_key(|(key, _)| *key);
    Ok(rows.into_iter().map(|(_, row)| row).collect())
}

/// Aggregates over the unflagged rows at one σ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub n_rows: usize,
    pub n_flagged: usize,
    /// Minimum of the per-MDP minimum gaps.
    pub min_gap: [f64; 3],
    /// Mean of the per-MDP mean gaps.
    pub mean_gap: [f64; 3],
}

impl SigmaSummary {
    pub fn min_gap(&self, kind: MetricKind) -> f64 {
        self.min_gap[kind_index(kind)]
    }

    pub fn mean_gap(&self, kind: MetricKind) -> f64 {
        self.mean_gap[kind_index(kind)]
    }
}

fn kind_index(kind: MetricKind) -> usize {
    SWEEP_KINDS
        .iter()
        .position(|k| *k == kind)
        .expect("kind is part of the sweep")
}

/// One summary per distinct σ, in order of first appearance.
pub fn summarize(rows: &[SweepRow]) -> Vec<SigmaSummary> {
    let mut sigmas: Vec<f64> = Vec::new();
    for row in rows {
        if !sigmas.contains(&row.sigma) {
            sigmas.push(row.sigma);
        }
    }
    sigmas
        .into_iter()
        .map(|sigma| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.sigma == sigma).collect();
            let ok: Vec<&&SweepRow> = at.iter().filter(|r| r.flag.is_none()).collect();
            let mut min_gap = [f64::NAN; 3];
            let mut mean_gap = [f64::NAN; 3];
            if !ok.is_empty() {
                for i in 0..3 {
                    min_gap[i] = ok.iter().map(|r| r.gaps[i].min_gap).fold(f64::INFINITY, f64::min);
                    mean_gap[i] = ok.iter().map(|r| r.gaps[i].mean_gap).sum::<f64>() / ok.len() as f64;
                }
            }
            SigmaSummary {
                sigma,
                n_rows: at.len(),
                n_flagged: at.len() - ok.len(),
                min_gap,
                mean_gap,
            }
        })
        .collect()
}

/// The sweep CSV: version line, rows, then `# summary,…` comment lines.
pub fn sweep_csv(rows: &[SweepRow]) -> CliResult<String> {
    let records: Vec<Vec<String>> = rows.iter().map(SweepRow::record).collect();
    let mut text = crate::files::versioned_csv(SWEEP_SCHEMA, &SWEEP_COLUMNS, &records)?;
    text.push_str("# summary,sigma,n_rows,n_flagged");
    for kind in SWEEP_KINDS {
        text.push_str(&format!(",{kind}_min_gap,{kind}_mean_gap"));
    }
    text.push('\n');
    for s in summarize(rows) {
        text.push_str(&format!("# summary,{},{},{}", s.sigma, s.n_rows, s.n_flagged));
        for i in 0..3 {
            text.push_str(&format!(",{},{}", s.min_gap[i], s.mean_gap[i]));
        }
        text.push('\n');
    }
    Ok(text)
}

/// Parse a sweep CSV. Summary lines are ignored.
pub fn read_sweep_csv(text: &str) -> CliResult<Vec<SweepRow>> {
    let body = ksme_core::csvio::strip_header(text, SWEEP_SCHEMA)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(body.as_bytes());
    let header = reader.headers().map_err(ksme_core::Error::from)?.clone();
    if header.iter().ne(SWEEP_COLUMNS) {
        return Err(CliError::Input(format!(
            "sweep columns {:?} do not match the expected {:?}",
            header.iter().collect::<Vec<_>>(),
            SWEEP_COLUMNS
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(ksme_core::Error::from)?;
        let bad = |field: &str| CliError::Input(format!("sweep row {}: bad {field}", line + 1));
        let float = |i: usize| record[i].parse::<f64>().map_err(|_| bad(SWEEP_COLUMNS[i]));
        let int = |i: usize| record[i].parse::<usize>().map_err(|_| bad(SWEEP_COLUMNS[i]));
        let mut gaps = [GapPair {
            min_gap: 0.0,
            mean_gap: 0.0,
        }; 3];
        for (k, g) in gaps.iter_mut().enumerate() {
            *g = GapPair {
                min_gap: float(4 + 2 * k)?,
                mean_gap: float(5 + 2 * k)?,
            };
        }
        rows.push(SweepRow {
            sigma: float(0)?,
            mdp_index: int(1)?,
            n_states: int(2)?,
            n_actions: int(3)?,
            gaps,
            flag: Some(record[10].to_string()).filter(|f| !f.is_empty()),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Input("sweep CSV has no rows".into()));
    }
    Ok(rows)
}

/// Run the sweep and write the CSV plus `<file name>.config.json` beside it.
pub fn cmd_sweep(cfg: &SweepConfig, out_csv: &Path) -> CliResult<Status> {
    cfg.validate()?;
    if let Some(dir) = out_csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::files::create_dir(dir)?;
    }
    let mut snapshot = out_csv.as_os_str().to_owned();
    snapshot.push(".config.json");
    write_text(Path::new(&snapshot), &to_json(cfg))?;
    let rows = run_sweep(cfg)?;
    write_text(out_csv, &sweep_csv(&rows)?)?;
    let flagged = rows.iter().filter(|r| r.flag.is_some()).count();
    if flagged > 0 {
        return Ok(Status::SoftFailure(format!("{flagged} sweep rows flagged")));
    }
    Ok(Status::Pass)
}
