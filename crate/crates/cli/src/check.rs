//! `ksme check`: runtime versions of the invariant suites, with a pass/fail
//! table.
//!
//! The individual checks are public so the acceptance suite can run them on
//! larger case sets.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use ksme_core::bounds::{default_depth, delta_n, prop17_check, reward_variance, theorem16_check};
use ksme_core::embedding::{
    jl_project, quotient_states, spectral_embed, EmbeddingKind, FeatureEmbedding, QuotientMap, DEFAULT_MERGE_TOL,
};
use ksme_core::learning::{ksme_loss, ksme_semi_gradient, train, LearnedEmbedding, TrainConfig, TransitionSample};
use ksme_core::mdp::{
    generate_garnet, optimal_value, policy_value, GarnetConfig, InducedChain, Mdp, Policy, ValueFunction, ValueMethod,
};
use ksme_core::metrics::{
    bisim_fixed_point, decomposition_residual, kernel_apply, kernel_distance_raw, kernel_fixed_point,
    ksme_distance, mico_apply, mico_fixed_point, pi_bisim_fixed_point, reduce, reduce_raw, BisimMethod,
    DistanceMatrix, KernelMatrix, MicoMethod, RewardScale,
};
use ksme_core::prob::{
    energy_distance, is_negative_type, kantorovich, lk_distance, mmd_squared, semimetric_from_kernel, CostMatrix,
    Dist, GramMatrix,
};
use ksme_core::rng::{mix_seed, seeded, SeededRng};
use ksme_core::{induce_chain, Error, FixedPointOptions, FixedPointReport, PolicySpec, Result};

use crate::error::{CliError, Status};

pub const TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckScale {
    Small,
    Full,
}

impl std::str::FromStr for CheckScale {
    type Err = CliError;

    fn from_str(s: &str) -> std::result::Result<Self, CliError> {
        match s {
            "small" => Ok(CheckScale::Small),
            "full" => Ok(CheckScale::Full),
            _ => Err(CliError::Input(format!("unknown check scale `{s}`"))),
        }
    }
}

pub type KernelSolver = fn(&InducedChain, RewardScale, FixedPointOptions) -> Result<(KernelMatrix, FixedPointReport)>;

/// Solver entry points the checks go through.
#[derive(Clone, Copy)]
pub struct Solvers {
    pub kernel: KernelSolver,
}

impl Default for Solvers {
    fn default() -> Self {
        Self {
            kernel: kernel_fixed_point,
        }
    }
}

fn corrupted_kernel(
    chain: &InducedChain,
    scale: RewardScale,
    opts: FixedPointOptions,
) -> Result<(KernelMatrix, FixedPointReport)> {
    let (k, report) = kernel_fixed_point(chain, scale, opts)?;
    let mut values = k.values().clone();
    values.iter_mut().for_each(|v| *v *= 1.0 + 1e-3);
    Ok((KernelMatrix::new(values, k.gamma, k.reward_span)?, report))
}

impl Solvers {
    /// A kernel solver that scales its answer by 1.001, for exercising the
    /// failure path.
    pub fn corrupted() -> Self {
        Self {
            kernel: corrupted_kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn from_worst(worst: f64, limit: f64) -> Self {
        Self {
            pass: worst <= limit,
            detail: format!("worst {worst:.3e} (limit {limit:.0e})"),
        }
    }

    fn count(violations: usize, checked: usize) -> Self {
        Self {
            pass: violations == 0,
            detail: format!("{violations} violations in {checked}"),
        }
    }

    pub fn error(e: &Error) -> Self {
        Self {
            pass: false,
            detail: format!("error: {e}"),
        }
    }
}

/// One row of the pass/fail table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub outcome: Outcome,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.outcome.pass { "PASS" } else { "FAIL" };
        write!(f, "{:<10} {:<28} {verdict}  {}", self.module, self.name, self.outcome.detail)
    }
}

/// A Garnet and its chain under the uniform policy.
#[derive(Debug, Clone)]
pub struct Case {
    pub mdp: Mdp,
    pub chain: InducedChain,
}

/// Sizes of a batch of random Garnets.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSpec {
    pub count: usize,
    pub n_states: (usize, usize),
    pub n_actions: (usize, usize),
    pub gammas: Vec<f64>,
    pub sigma: f64,
}

/// Deterministic batch of stochastic Garnets (branching 2 to 5).
pub fn garnet_cases(spec: &CaseSpec, seed: u64) -> Vec<Case> {
    let mut cases = Vec::with_capacity(spec.count);
    let mut stream = 0;
    while cases.len() < spec.count {
        let mut rng = seeded(mix_seed(seed, stream));
        stream += 1;
        let n = rng.random_range(spec.n_states.0..=spec.n_states.1);
        let a = rng.random_range(spec.n_actions.0..=spec.n_actions.1);
        let config = GarnetConfig {
            n_states: n,
            n_actions: a,
            branching: rng.random_range(2.min(n)..=5.min(n)),
            reward_sigma_target: spec.sigma,
            gamma: spec.gammas[rng.random_range(0..spec.gammas.len())],
            seed: rng.random(),
            policy: PolicySpec::Uniform,
        };
        let Ok(mdp) = generate_garnet(&config) else {
            continue;
        };
        let chain = induce_chain(&mdp, &Policy::uniform(n, a)).expect("policy matches the MDP");
        cases.push(Case { mdp, chain });
    }
    cases
}

/// Every solver output the metric checks need, computed once per case.
#[derive(Debug, Clone)]
pub struct Solved {
    pub case: Case,
    /// Canonical-scale kernel and MICo distance.
    pub k: KernelMatrix,
    pub u: DistanceMatrix,
    /// Reward-unit MICo, π-bisimulation and bisimulation distances.
    pub u_raw: DistanceMatrix,
    pub pi_bisim: DistanceMatrix,
    pub bisim: DistanceMatrix,
    pub v: ValueFunction,
    pub v_star: ValueFunction,
}

pub fn solve_case(case: Case, solvers: &Solvers) -> Result<Solved> {
    let opts = FixedPointOptions::with_tol(TOL);
    let chain = &case.chain;
    let canonical = RewardScale::canonical(chain);
    let raw = RewardScale::raw();
    let (k, _) = (solvers.kernel)(chain, canonical, opts)?;
    let (u, _) = mico_fixed_point(chain, canonical, MicoMethod::Iterate(opts))?;
    let (u_raw, _) = mico_fixed_point(chain, raw, MicoMethod::Iterate(opts))?;
    let (pi_bisim, _) = pi_bisim_fixed_point(chain, raw, opts, BisimMethod::default())?;
    let (bisim, _) = bisim_fixed_point(&case.mdp, raw, opts, BisimMethod::default())?;
    let v = policy_value(chain, ValueMethod::DirectSolve)?;
    let v_star = optimal_value(&case.mdp, opts)?;
    Ok(Solved {
        case,
        k,
        u,
        u_raw,
        pi_bisim,
        bisim,
        v,
        v_star,
    })
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |x| (0..n).map(move |y| (x, y)))
}

// ---- mdp ----

pub fn chain_rows_stochastic(cases: &[Case]) -> Outcome {
    let worst = cases
        .iter()
        .flat_map(|c| c.chain.p_pi().row_iter().map(|r| (r.sum() - 1.0).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    Outcome::from_worst(worst, 1e-12)
}

pub fn value_methods_agree(cases: &[Case]) -> Outcome {
    let mut worst = 0.0_f64;
    for c in cases {
        let a = policy_value(&c.chain, ValueMethod::DirectSolve);
        let b = policy_value(&c.chain, ValueMethod::Iterate(FixedPointOptions::default()));
        match (a, b) {
            (Ok(a), Ok(b)) => worst = worst.max((a.values - b.values).amax()),
            (Err(e), _) | (_, Err(e)) => return Outcome::error(&e),
        }
    }
    Outcome::from_worst(worst, 1e-8)
}

pub fn optimal_dominates(cases: &[Case], seed: u64) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for (i, c) in cases.iter().enumerate() {
        let v_star = match optimal_value(&c.mdp, FixedPointOptions::default()) {
            Ok(v) => v,
            Err(e) => return Outcome::error(&e),
        };
        for p in 0..5 {
            let policy = Policy::random(c.mdp.n_states(), c.mdp.n_actions(), mix_seed(seed, (i * 5 + p) as u64));
            let v = induce_chain(&c.mdp, &policy).and_then(|ch| policy_value(&ch, ValueMethod::DirectSolve));
            match v {
                Ok(v) => worst = worst.max((v.values - &v_star.values).max()),
                Err(e) => return Outcome::error(&e),
            }
        }
    }
    Outcome::from_worst(worst.max(0.0), 1e-9)
}

pub fn garnet_reproducible(seed: u64) -> Outcome {
    let config = GarnetConfig {
        n_states: 12,
        n_actions: 3,
        branching: 4,
        reward_sigma_target: 0.7,
        gamma: 0.9,
        seed,
        policy: PolicySpec::Uniform,
    };
    let same = generate_garnet(&config).ok() == generate_garnet(&config).ok();
    Outcome {
        pass: same,
        detail: if same { "identical" } else { "differs" }.into(),
    }
}

// ---- prob ----

fn random_dist(rng: &mut SeededRng, n: usize) -> Dist {
    let w: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() })
        .collect();
    Dist::normalized(&w).unwrap_or_else(|_| Dist::dirac(n, rng.random_range(0..n)))
}

/// Euclidean distances between random points in the plane.
fn random_metric(rng: &mut SeededRng, n: usize) -> CostMatrix {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    CostMatrix::new(DMatrix::from_fn(n, n, |i, j| {
        ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
    }))
    .expect("euclidean distances")
}

fn random_gram(rng: &mut SeededRng, n: usize) -> GramMatrix {
    let f = DMatrix::from_fn(n, n + 1, |_, _| rng.random_range(-1.0..1.0));
    GramMatrix::new(&f * f.transpose()).expect("F Fᵀ is PSD")
}

fn prob_trials(trials: usize, seed: u64, mut body: impl FnMut(&mut SeededRng) -> Result<f64>) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let mut rng = seeded(mix_seed(seed, t as u64));
        worst = worst.max(body(&mut rng)?);
    }
    Ok(worst.max(0.0))
}

fn finish(result: Result<f64>, limit: f64) -> Outcome {
    match result {
        Ok(worst) => Outcome::from_worst(worst, limit),
        Err(e) => Outcome::error(&e),
    }
}

pub fn kantorovich_below_lk(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let n = rng.random_range(2..=8);
            let (mu, nu, d) = (random_dist(rng, n), random_dist(rng, n), random_metric(rng, n));
            Ok(kantorovich(&mu, &nu, &d)?.0 - lk_distance(&mu, &nu, &d)?)
        }),
        1e-10,
    )
}

pub fn kantorovich_is_metric(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let n = rng.random_range(2..=8);
            let d = random_metric(rng, n);
            let (mu, nu, eta) = (random_dist(rng, n), random_dist(rng, n), random_dist(rng, n));
            let w = |a: &Dist, b: &Dist| kantorovich(a, b, &d).map(|r| r.0);
            let asym = (w(&mu, &nu)? - w(&nu, &mu)?).abs();
            let tri = w(&mu, &nu)? - w(&mu, &eta)? - w(&eta, &nu)?;
            Ok(asym.max(tri))
        }),
        1e-9,
    )
}

pub fn lk_diffuse_triangle(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let n = rng.random_range(2..=8);
            let d = random_metric(rng, n);
            let (mu, nu, eta) = (random_dist(rng, n), random_dist(rng, n), random_dist(rng, n));
            Ok(lk_distance(&mu, &nu, &d)? - lk_distance(&mu, &eta, &d)? - lk_distance(&eta, &nu, &d)?)
        }),
        1e-10,
    )
}

pub fn mmd_equals_energy(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let n = rng.random_range(2..=8);
            let k = random_gram(rng, n);
            let (mu, nu) = (random_dist(rng, n), random_dist(rng, n));
            let rho = semimetric_from_kernel(&k);
            Ok((mmd_squared(&mu, &nu, &k)? - energy_distance(&mu, &nu, &rho)?).abs())
        }),
        1e-10,
    )
}

/// The counterexample values of the Łukaszyk–Karmowski distance.
pub fn lk_counterexamples() -> Outcome {
    let run = || -> Result<(bool, f64)> {
        let d = CostMatrix::line(&[0.0, 1.0]);
        let (mu, nu, eta) = (Dist::dirac(2, 0), Dist::dirac(2, 1), Dist::uniform(2));
        let a = lk_distance(&mu, &nu, &d)?;
        let b = lk_distance(&mu, &eta, &d)?;
        let c = lk_distance(&eta, &eta, &d)?;
        let violated = a > b + lk_distance(&eta, &nu, &d)? - c;
        let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let self_dist = lk_distance(&Dist::uniform(11), &Dist::uniform(11), &CostMatrix::line(&grid))?;
        Ok(((a, b, c) == (1.0, 0.5, 0.5) && violated, (self_dist - 0.4 / 1.1).abs()))
    };
    match run() {
        Ok((exact, err)) => Outcome {
            pass: exact && err <= 1e-12,
            detail: format!("two-point values exact: {exact}; grid self-distance error {err:.1e}"),
        },
        Err(e) => Outcome::error(&e),
    }
}

/// `W₁` on the line equals `∫|F_μ − F_ν|`.
pub fn kantorovich_line_oracle(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let n = rng.random_range(2..=10);
            let mut pts: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            pts.sort_by(f64::total_cmp);
            let (mu, nu) = (random_dist(rng, n), random_dist(rng, n));
            let (mut cdf, mut integral) = (0.0, 0.0);
            for i in 0..n - 1 {
                cdf += mu.weights()[i] - nu.weights()[i];
                integral += cdf.abs() * (pts[i + 1] - pts[i]);
            }
            Ok((kantorovich(&mu, &nu, &CostMatrix::line(&pts))?.0 - integral).abs())
        }),
        1e-10,
    )
}

/// Min cost over every basic feasible solution of the transportation polytope.
pub fn transport_by_enumeration(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
    let (m, n) = (supply.len(), demand.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let basis: Vec<(usize, usize)> = idx.iter().map(|&i| cells[i]).collect();
        if let Some(flows) = tree_flows(&basis, supply, demand) {
            if flows.iter().all(|f| *f >= -1e-12) {
                let c: f64 = basis.iter().zip(&flows).map(|(&(i, j), f)| f * cost[i * n + j]).sum();
                best = best.min(c);
            }
        }
        // Next k-combination of cell indices.
        let mut i = k;
        while i > 0 && idx[i - 1] == cells.len() - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Flows on a candidate basis by leaf elimination; `None` unless it is a
/// spanning tree of the row/column graph.
fn tree_flows(basis: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut flows = vec![0.0; basis.len()];
    let mut open = vec![true; basis.len()];
    let mut row_deg = vec![0usize; s.len()];
    let mut col_deg = vec![0usize; d.len()];
    for &(i, j) in basis {
        row_deg[i] += 1;
        col_deg[j] += 1;
    }
    if row_deg.contains(&0) || col_deg.contains(&0) {
        return None;
    }
    for _ in 0..basis.len() {
        let leaf = (0..basis.len()).find(|&c| open[c] && (row_deg[basis[c].0] == 1 || col_deg[basis[c].1] == 1))?;
        let (i, j) = basis[leaf];
        flows[leaf] = if row_deg[i] == 1 { s[i] } else { d[j] };
        s[i] -= flows[leaf];
        d[j] -= flows[leaf];
        row_deg[i] -= 1;
        col_deg[j] -= 1;
        open[leaf] = false;
    }
    let balanced = s.iter().chain(&d).all(|r| r.abs() < 1e-9);
    balanced.then_some(flows)
}

pub fn kantorovich_enumeration_oracle(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let n = rng.random_range(2..=4);
            let d = random_metric(rng, n);
            let mu = Dist::normalized(&(0..n).map(|_| rng.random_range(0.05..1.0)).collect::<Vec<_>>())?;
            let nu = Dist::normalized(&(0..n).map(|_| rng.random_range(0.05..1.0)).collect::<Vec<_>>())?;
            let cost: Vec<f64> = pairs(n).map(|(i, j)| d.values()[(i, j)]).collect();
            let oracle = transport_by_enumeration(mu.weights(), nu.weights(), &cost);
            Ok((kantorovich(&mu, &nu, &d)?.0 - oracle).abs())
        }),
        1e-9,
    )
}

// ---- behavioural metrics ----

/// `‖d_ks − ΠU‖_∞` from independent kernel and MICo iterations.
pub fn ksme_equals_reduced_mico(solved: &[Solved]) -> Outcome {
    let worst = solved
        .iter()
        .map(|s| {
            let d = kernel_distance_raw(s.k.values());
            (d - reduce_raw(s.u.values())).amax()
        })
        .fold(0.0, f64::max);
    Outcome::from_worst(worst, 5.0 * TOL)
}

pub fn decomposition(solved: &[Solved]) -> Outcome {
    let mut worst = 0.0_f64;
    for s in solved {
        match decomposition_residual(&s.k, &s.case.chain, RewardScale::canonical(&s.case.chain)) {
            Ok(r) => worst = worst.max(r),
            Err(e) => return Outcome::error(&e),
        }
    }
    Outcome::from_worst(worst, 3.0 * TOL)
}

pub fn reduced_mico_nonnegative(solved: &[Solved]) -> Outcome {
    let lowest = solved
        .iter()
        .map(|s| reduce_raw(s.u.values()).min())
        .fold(0.0, f64::min);
    Outcome::from_worst(0.0 - lowest, 1e-9)
}

pub fn lockstep_iterates(cases: &[Case], steps: usize) -> Outcome {
    let mut worst = 0.0_f64;
    for c in cases {
        let scale = RewardScale::canonical(&c.chain);
        let n = c.chain.n_states();
        let (mut k, mut u) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n));
        for _ in 0..=steps {
            worst = worst.max((kernel_distance_raw(&k) - reduce_raw(&u)).amax());
            match (kernel_apply(&k, &c.chain, scale), mico_apply(&u, &c.chain, scale)) {
                (Ok(a), Ok(b)) => (k, u) = (a, b),
                (Err(e), _) | (_, Err(e)) => return Outcome::error(&e),
            }
        }
    }
    Outcome::from_worst(worst, 1e-10)
}

pub fn ksme_geometry(solved: &[Solved], seed: u64) -> Outcome {
    let mut worst = 0.0_f64;
    for s in solved {
        let d = match ksme_distance(&s.k) {
            Ok(d) => d,
            Err(e) => return Outcome::error(&e),
        };
        let n = d.n_states();
        for (x, y) in pairs(n) {
            for z in 0..n {
                worst = worst.max(d.get(x, z).sqrt() - d.get(x, y).sqrt() - d.get(y, z).sqrt());
            }
        }
        let rho = match CostMatrix::new(d.values().clone()) {
            Ok(r) => r,
            Err(e) => return Outcome::error(&e),
        };
        if !is_negative_type(&rho, 50, seed).negative_type {
            return Outcome {
                pass: false,
                detail: "distance is not of negative type".into(),
            };
        }
    }
    Outcome::from_worst(worst, 1e-8)
}

/// `d_ks ≤ d_∼^π ≤ U` in reward units.
pub fn ordering_chain(solved: &[Solved]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for s in solved {
        let d_ks = match ksme_distance(&s.k) {
            Ok(d) => d.scaled(1.0 / RewardScale::canonical(&s.case.chain).weight()),
            Err(e) => return Outcome::error(&e),
        };
        for (x, y) in pairs(d_ks.n_states()) {
            worst = worst
                .max(d_ks.get(x, y) - s.pi_bisim.get(x, y))
                .max(s.pi_bisim.get(x, y) - s.u_raw.get(x, y));
        }
    }
    Outcome::from_worst(worst.max(0.0), 1e-8)
}

/// `|ΔV^π| ≤ U`, `|ΔV^π| ≤ d_∼^π` and `|ΔV*| ≤ d_∼`.
pub fn value_bounds(solved: &[Solved]) -> Outcome {
    let (mut violations, mut checked) = (0, 0);
    for s in solved {
        let (v, vs) = (&s.v.values, &s.v_star.values);
        for (x, y) in pairs(v.len()) {
            let dv = (v[x] - v[y]).abs();
            let dvs = (vs[x] - vs[y]).abs();
            for ok in [
                dv <= s.u_raw.get(x, y) + 1e-8,
                dv <= s.pi_bisim.get(x, y) + 1e-8,
                dvs <= s.bisim.get(x, y) + 1e-8,
            ] {
                checked += 1;
                violations += usize::from(!ok);
            }
        }
    }
    Outcome::count(violations, checked)
}

pub fn kernel_iterates_psd(cases: &[Case], steps: usize) -> Outcome {
    let mut worst = 0.0_f64;
    for c in cases {
        let scale = RewardScale::canonical(&c.chain);
        let n = c.chain.n_states();
        let mut k = DMatrix::zeros(n, n);
        for _ in 0..steps {
            k = match kernel_apply(&k, &c.chain, scale) {
                Ok(k) => k,
                Err(e) => return Outcome::error(&e),
            };
            let eig = SymmetricEigen::new(k.clone()).eigenvalues;
            worst = worst.max(-eig.min() / (1.0 + eig.amax()));
        }
    }
    Outcome::from_worst(worst, 1e-8)
}

fn random_symmetric(rng: &mut SeededRng, n: usize, psd: bool) -> DMatrix<f64> {
    let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    if psd {
        &f * f.transpose()
    } else {
        (&f + f.transpose()) * 2.0
    }
}

/// Both operators shrink sup-norm differences by `γ` on random matrix pairs.
pub fn contractions(cases: &[Case], pairs_per_case: usize, seed: u64) -> Outcome {
    let mut violations = 0;
    let mut checked = 0;
    for (i, c) in cases.iter().enumerate() {
        let scale = RewardScale::canonical(&c.chain);
        let n = c.chain.n_states();
        let g = c.chain.gamma();
        let mut rng = seeded(mix_seed(seed, i as u64));
        for _ in 0..pairs_per_case {
            let (k1, k2) = (random_symmetric(&mut rng, n, true), random_symmetric(&mut rng, n, true));
            let (u1, u2) = (random_symmetric(&mut rng, n, false), random_symmetric(&mut rng, n, false));
            let tk = |k: &DMatrix<f64>| kernel_apply(k, &c.chain, scale);
            let tm = |u: &DMatrix<f64>| mico_apply(u, &c.chain, scale);
            let (Ok(a1), Ok(a2), Ok(b1), Ok(b2)) = (tk(&k1), tk(&k2), tm(&u1), tm(&u2)) else {
                return Outcome {
                    pass: false,
                    detail: "operator application failed".into(),
                };
            };
            checked += 2;
            violations += usize::from((a1 - a2).amax() > g * (&k1 - &k2).amax() + 1e-12);
            violations += usize::from((b1 - b2).amax() > g * (&u1 - &u2).amax() + 1e-12);
        }
    }
    Outcome::count(violations, checked)
}

// ---- bounds ----

pub fn delta_recursion(cases: &[Case]) -> Outcome {
    let mut worst = 0.0_f64;
    for c in cases {
        let series = delta_n(&c.chain, 5);
        let p = c.chain.p_pi();
        let mut power = DMatrix::identity(p.nrows(), p.ncols());
        let base = series.values.row(0).transpose();
        for step in 0..=5 {
            let explicit = &power * &base;
            worst = worst.max((series.values.row(step).transpose() - explicit).amax());
            power = &power * p;
        }
    }
    Outcome::from_worst(worst, 1e-10)
}

pub fn monotone_tail(cases: &[Case]) -> Outcome {
    let mut violations = 0;
    let mut checked = 0;
    for c in cases {
        let mut previous = delta_n(&c.chain, 0);
        for depth in 1..30 {
            let next = delta_n(&c.chain, depth);
            for x in 0..c.chain.n_states() {
                let step = next.discounted_sum(x) - previous.discounted_sum(x);
                checked += 1;
                violations += usize::from(step < -1e-12 || step > previous.tail_bound + 1e-12);
            }
            previous = next;
        }
    }
    Outcome::count(violations, checked)
}

/// The additive value bound on `ΠU` and the `Δ_n ≤ √2σ` bound.
pub fn additive_value_bounds(cases: &[Case]) -> Outcome {
    let (mut violations, mut checked) = (0, 0);
    let opts = FixedPointOptions::with_tol(TOL);
    for c in cases {
        let solved = mico_fixed_point(&c.chain, RewardScale::raw(), MicoMethod::Iterate(opts))
            .and_then(|(u, _)| reduce(&u))
            .and_then(|pi_u| Ok((pi_u, policy_value(&c.chain, ValueMethod::DirectSolve)?)));
        let (pi_u, v) = match solved {
            Ok(x) => x,
            Err(e) => return Outcome::error(&e),
        };
        let deltas = delta_n(&c.chain, default_depth(&c.chain, 1e-12));
        let t16 = theorem16_check(&pi_u, &v, &deltas);
        let p17 = prop17_check(&deltas, &reward_variance(&c.chain), &pi_u, &v);
        for report in [t16, p17.delta, p17.global] {
            violations += report.violations;
            checked += report.checked;
        }
    }
    Outcome::count(violations, checked)
}

// ---- embedding ----

fn spectral(s: &Solved) -> Result<(FeatureEmbedding, DistanceMatrix)> {
    let d = ksme_distance(&s.k)?;
    let q = quotient_states(&d, DEFAULT_MERGE_TOL);
    Ok((spectral_embed(&s.k, &q)?, d))
}

pub fn spectral_round_trip(solved: &[Solved]) -> Outcome {
    let mut worst = 0.0_f64;
    for s in solved {
        let (emb, _) = match spectral(s) {
            Ok(x) => x,
            Err(e) => return Outcome::error(&e),
        };
        if emb.dim() > emb.quotient.n_classes() {
            return Outcome {
                pass: false,
                detail: format!("dimension {} above {} classes", emb.dim(), emb.quotient.n_classes()),
            };
        }
        let reps = emb.quotient.representatives();
        let gram = &emb.features * emb.features.transpose();
        for (i, &x) in reps.iter().enumerate() {
            for (j, &y) in reps.iter().enumerate() {
                worst = worst.max((gram[(i, j)] - s.k.values()[(x, y)]).abs());
            }
        }
    }
    Outcome::from_worst(worst, 1e-8)
}

/// Squared feature distances reproduce `ΠU`.
pub fn features_reproduce_reduced_mico(solved: &[Solved]) -> Outcome {
    let mut worst = 0.0_f64;
    for s in solved {
        let (emb, _) = match spectral(s) {
            Ok(x) => x,
            Err(e) => return Outcome::error(&e),
        };
        let pi_u = reduce_raw(s.u.values());
        for (x, y) in pairs(s.case.chain.n_states()) {
            worst = worst.max((emb.sq_distance(x, y) - pi_u[(x, y)]).abs());
        }
    }
    Outcome::from_worst(worst, 1e-8)
}

pub fn projection_linear(trials: usize, seed: u64) -> Outcome {
    let q = QuotientMap::from_labels(&[0, 1, 2, 3]);
    let emb = |f: DMatrix<f64>| FeatureEmbedding {
        features: f,
        quotient: q.clone(),
        kind: EmbeddingKind::SpectralExact,
    };
    finish(
        prob_trials(trials, seed, |rng| {
            let a = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-5.0..5.0));
            let b = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-5.0..5.0));
            let s = rng.random();
            let pa = jl_project(&emb(a.clone()), 9, s)?.features;
            let pb = jl_project(&emb(b.clone()), 9, s)?.features;
            let ps = jl_project(&emb(a + b), 9, s)?.features;
            Ok((ps - (pa + pb)).amax())
        }),
        1e-12,
    )
}

// ---- learning ----

pub fn semi_gradient_finite_differences(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let (n, m) = (4, 3);
            let mut emb = LearnedEmbedding::new(DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)));
            emb.phi_target = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let scale = RewardScale::new(rng.random_range(0.1..2.0))?;
            let gamma = rng.random_range(0.0..0.99);
            let mut draw = || TransitionSample {
                x: rng.random_range(0..n),
                r: rng.random_range(-2.0..2.0),
                x_next: rng.random_range(0..n),
            };
            let batch: Vec<_> = (0..8).map(|_| (draw(), draw())).collect();
            let grad = ksme_semi_gradient(&batch, &emb, gamma, scale);
            let h = 1e-6;
            let mut worst = 0.0_f64;
            for (i, j) in (0..n).flat_map(|i| (0..m).map(move |j| (i, j))) {
                let (mut plus, mut minus) = (emb.clone(), emb.clone());
                plus.phi[(i, j)] += h;
                minus.phi[(i, j)] -= h;
                let fd = (ksme_loss(&batch, &plus, gamma, scale)? - ksme_loss(&batch, &minus, gamma, scale)?) / (2.0 * h);
                worst = worst.max((fd - grad[(i, j)]).abs() / grad[(i, j)].abs().max(1.0));
            }
            Ok(worst)
        }),
        1e-5,
    )
}

/// At the exact kernel the expected TD error vanishes for every state pair.
pub fn identity_at_fit(solved: &[Solved]) -> Outcome {
    let mut worst = 0.0_f64;
    for s in solved {
        let chain = &s.case.chain;
        let n = chain.n_states();
        let eig = SymmetricEigen::new(s.k.values().clone());
        let phi = DMatrix::from_fn(n, n, |i, j| eig.eigenvalues[j].max(0.0).sqrt() * eig.eigenvectors[(i, j)]);
        let emb = LearnedEmbedding::new(phi);
        let p = chain.p_pi();
        let w = RewardScale::canonical(chain).weight();
        let r = chain.r_pi();
        for (x, y) in pairs(n) {
            let mut expected = 1.0 - 0.5 * w * (r[x] - r[y]).abs();
            for (xn, yn) in pairs(n) {
                expected += chain.gamma() * p[(x, xn)] * p[(y, yn)] * emb.target_kernel(xn, yn);
            }
            worst = worst.max((expected - emb.kernel(x, y)).abs());
        }
    }
    Outcome::from_worst(worst, 1e-8)
}

pub fn distance_identity(trials: usize, seed: u64) -> Outcome {
    finish(
        prob_trials(trials, seed, |rng| {
            let emb = LearnedEmbedding::new(DMatrix::from_fn(5, 3, |_, _| rng.random_range(-3.0..3.0)));
            let mut worst = 0.0_f64;
            for (x, y) in pairs(5) {
                let via_kernel = emb.kernel(x, x) + emb.kernel(y, y) - 2.0 * emb.kernel(x, y);
                worst = worst.max((emb.sq_distance(x, y) - via_kernel).abs() / (1.0 + via_kernel.abs()));
            }
            Ok(worst)
        }),
        1e-12,
    )
}

/// Result of training on one MDP against the exact distance.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRun {
    pub max_relative_error: f64,
    pub first_window: f64,
    pub last_window: f64,
}

pub const LOSS_WINDOW: usize = 100;

pub fn learning_run(chain: &InducedChain, config: &TrainConfig) -> Result<LearningRun> {
    let scale = RewardScale::canonical(chain);
    let outcome = train(chain, scale, config)?;
    let (k, _) = kernel_fixed_point(chain, scale, FixedPointOptions::default())?;
    let exact = ksme_distance(&k)?;
    let n = chain.n_states();
    let worst = pairs(n)
        .map(|(x, y)| (outcome.embedding.sq_distance(x, y) - exact.get(x, y)).abs())
        .fold(0.0, f64::max);
    let losses = &outcome.losses;
    let w = LOSS_WINDOW.min(losses.len());
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(LearningRun {
        max_relative_error: worst / exact.values().max().max(f64::MIN_POSITIVE),
        first_window: mean(&losses[..w]),
        last_window: mean(&losses[losses.len() - w..]),
    })
}

/// The acceptance learning setup: 5-state Garnet, γ = 0.9, m = 5.
pub fn learning_chain(seed: u64) -> Result<InducedChain> {
    let mdp = generate_garnet(&GarnetConfig {
        n_states: 5,
        n_actions: 2,
        branching: 3,
        reward_sigma_target: 1.0,
        gamma: 0.9,
        seed,
        policy: PolicySpec::Uniform,
    })?;
    induce_chain(&mdp, &Policy::uniform(5, 2))
}

pub fn learning_config(seed: u64) -> TrainConfig {
    TrainConfig {
        m: Some(5),
        seed,
        ..TrainConfig::default()
    }
}

pub fn learned_matches_exact(seed: u64) -> Outcome {
    match learning_chain(seed).and_then(|c| learning_run(&c, &learning_config(seed))) {
        Ok(run) => Outcome {
            pass: run.max_relative_error <= 0.05 && run.last_window < run.first_window,
            detail: format!(
                "max relative error {:.3e}; loss window {:.2e} -> {:.2e}",
                run.max_relative_error, run.first_window, run.last_window
            ),
        },
        Err(e) => Outcome::error(&e),
    }
}

// ---- the suite ----

fn case_spec(scale: CheckScale) -> CaseSpec {
    match scale {
        CheckScale::Small => CaseSpec {
            count: 8,
            n_states: (3, 10),
            n_actions: (1, 3),
            gammas: vec![0.5, 0.9],
            sigma: 1.0,
        },
        CheckScale::Full => CaseSpec {
            count: 60,
            n_states: (5, 30),
            n_actions: (1, 4),
            gammas: vec![0.5, 0.9, 0.99],
            sigma: 1.0,
        },
    }
}

/// Run every check and return the table rows in a fixed order.
pub fn run_checks(seed: u64, scale: CheckScale, solvers: &Solvers) -> Vec<CheckResult> {
    let trials = match scale {
        CheckScale::Small => 100,
        CheckScale::Full => 500,
    };
    let cases = garnet_cases(&case_spec(scale), seed);
    let mut results = Vec::new();
    let mut push = |module, name, outcome| results.push(CheckResult { module, name, outcome });

    push("mdp", "chain_rows_stochastic", chain_rows_stochastic(&cases));
    push("mdp", "value_methods_agree", value_methods_agree(&cases));
    push("mdp", "optimal_dominates", optimal_dominates(&cases, seed));
    push("mdp", "garnet_reproducible", garnet_reproducible(seed));

    push("prob", "kantorovich_below_lk", kantorovich_below_lk(trials, seed));
    push("prob", "kantorovich_is_metric", kantorovich_is_metric(trials, seed));
    push("prob", "lk_diffuse_triangle", lk_diffuse_triangle(trials, seed));
    push("prob", "lk_counterexamples", lk_counterexamples());
    push("prob", "mmd_equals_energy", mmd_equals_energy(trials, seed));
    push("prob", "kantorovich_enumeration", kantorovich_enumeration_oracle(trials, seed));
    push("prob", "kantorovich_line_oracle", kantorovich_line_oracle(trials, seed));

    push("embedding", "projection_linear", projection_linear(trials, seed));

    let solved: std::result::Result<Vec<Solved>, Error> =
        cases.iter().cloned().map(|c| solve_case(c, solvers)).collect();
    match solved {
        Ok(solved) => {
            push("metrics", "ksme_equals_reduced_mico", ksme_equals_reduced_mico(&solved));
            push("metrics", "decomposition_residual", decomposition(&solved));
            push("metrics", "reduced_mico_nonnegative", reduced_mico_nonnegative(&solved));
            push("metrics", "lockstep_iterates", lockstep_iterates(&cases, 50));
            push("metrics", "ksme_geometry", ksme_geometry(&solved, seed));
            push("metrics", "ordering_chain", ordering_chain(&solved));
            push("metrics", "value_bounds", value_bounds(&solved));
            push("metrics", "kernel_iterates_psd", kernel_iterates_psd(&cases, 30));
            push("metrics", "contractions", contractions(&cases, 20, seed));
            push("embedding", "spectral_round_trip", spectral_round_trip(&solved));
            push("embedding", "features_reproduce_pi_u", features_reproduce_reduced_mico(&solved));
            push("learning", "identity_at_fit", identity_at_fit(&solved));
        }
        Err(e) => push("metrics", "solve", Outcome::error(&e)),
    }

    push("bounds", "delta_recursion", delta_recursion(&cases));
    push("bounds", "monotone_tail", monotone_tail(&cases));
    push("bounds", "additive_value_bounds", additive_value_bounds(&cases));

    push("learning", "semi_gradient", semi_gradient_finite_differences(trials / 5, seed));
    push("learning", "distance_identity", distance_identity(trials, seed));
    push("learning", "learned_matches_exact", learned_matches_exact(seed));
    results
}

/// Print the table and report whether every check passed.
pub fn cmd_check(seed: u64, scale: CheckScale, solvers: &Solvers, out: &mut impl std::io::Write) -> Status {
    let results = run_checks(seed, scale, solvers);
    let failed = results.iter().filter(|r| !r.outcome.pass).count();
    for r in &results {
        let _ = writeln!(out, "{r}");
    }
    let _ = writeln!(out, "{} checks, {failed} failed", results.len());
    if failed == 0 {
        Status::Pass
    } else {
        Status::SoftFailure(format!("{failed} checks failed"))
    }
}
