//! Value-difference bounds for the reduced MICo distance and the gap
//! statistics of behavioural metrics against `|V^π(x) − V^π(y)|`.
//!
//! Everything here is in reward units: distances are computed at
//! [`RewardScale::raw`], or rescaled to it.

mod search;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed_point::{FixedPointOptions, FixedPointReport};
use crate::mdp::{policy_value, InducedChain, Mdp, ValueFunction, ValueMethod};
use crate::metrics::{
    bisim_fixed_point, kernel_fixed_point, ksme_distance, mico_fixed_point, pi_bisim_fixed_point,
    BisimMethod, DistanceMatrix, MetricKind, MicoMethod, RewardScale,
};

pub use search::{prop4_search, verify_witness, GarnetRanges, UndercutWitness, WITNESS_GAP};

/// Slack allowed on every bound check.
pub const BOUND_TOL: f64 = 1e-8;

/// `Δ_n^π(x)` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSeries {
    /// Row `n`, column `x`.
    pub values: DMatrix<f64>,
    pub gamma: f64,
    /// `γ^{n_max+1}·r_span/(1−γ)`, bounding the discounted terms past `n_max`.
    pub tail_bound: f64,
}

impl DeltaSeries {
    pub fn n_max(&self) -> usize {
        self.values.nrows() - 1
    }

    /// `Σ_{n ≤ n_max} γ^n Δ_n(x)`.
    pub fn discounted_sum(&self, x: usize) -> f64 {
        let mut weight = 1.0;
        let mut total = 0.0;
        for n in 0..self.values.nrows() {
            total += weight * self.values[(n, x)];
            weight *= self.gamma;
        }
        total
    }
}

/// Truncation depth whose tail bound is below `tol`.
pub fn default_depth(chain: &InducedChain, tol: f64) -> usize {
    let (gamma, span) = (chain.gamma(), chain.r_span());
    if span <= 0.0 || gamma <= 0.0 {
        return 0;
    }
    let n = ((tol * (1.0 - gamma) / span).ln() / gamma.ln()).ceil();
    n.max(0.0) as usize
}

/// `Δ_0(x) = Σ_{a,b} P(x,a) P(x,b) |r_a − r_b|` and `Δ_{n+1} = P Δ_n`.
pub fn delta_n(chain: &InducedChain, n_max: usize) -> DeltaSeries {
    let n = chain.n_states();
    let p = chain.p_pi();
    let r = chain.r_pi();
    let gaps = DMatrix::from_fn(n, n, |a, b| (r[a] - r[b]).abs());
    let mut values = DMatrix::zeros(n_max + 1, n);
    let mut current = DVector::from_fn(n, |x, _| {
        let row = p.row(x);
        (row * &gaps * row.transpose())[(0, 0)]
    });
    for step in 0..=n_max {
        values.set_row(step, &current.transpose());
        if step < n_max {
            current = p * current;
        }
    }
    let gamma = chain.gamma();
    let tail_bound = if gamma == 0.0 {
        0.0
    } else {
        gamma.powi(n_max as i32 + 1) * chain.r_span() / (1.0 - gamma)
    };
    DeltaSeries {
        values,
        gamma,
        tail_bound,
    }
}

/// `Var_R(P_x^π)` for every state.
pub fn reward_variance(chain: &InducedChain) -> DVector<f64> {
    chain.reward_variance()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Largest `lhs − rhs` over everything checked; ≤ 0 when the bound is slack.
    pub max_violation: f64,
    pub violations: usize,
    pub checked: usize,
    pub pass: bool,
}

impl BoundReport {
    fn from_margins(margins: impl IntoIterator<Item = f64>, slack: f64) -> Self {
        let mut max_violation = f64::NEG_INFINITY;
        let (mut violations, mut checked) = (0, 0);
        for m in margins {
            checked += 1;
            max_violation = max_violation.max(m);
            if !(m <= slack) {
                violations += 1;
            }
        }
        if checked == 0 {
            max_violation = 0.0;
        }
        Self {
            max_violation,
            violations,
            checked,
            pass: violations == 0,
        }
    }
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |x| (x + 1..n).map(move |y| (x, y)))
}

/// `|V(x) − V(y)| ≤ ΠU(x,y) + ½ Σ_n γ^n (Δ_n(x) + Δ_n(y))`, with the truncated
/// tail added to the right-hand side.
pub fn theorem16_check(pi_u: &DistanceMatrix, v: &ValueFunction, deltas: &DeltaSeries) -> BoundReport {
    let n = pi_u.n_states();
    let sums: Vec<f64> = (0..n).map(|x| deltas.discounted_sum(x)).collect();
    let margins = pairs(n).map(|(x, y)| {
        let lhs = (v.values[x] - v.values[y]).abs();
        lhs - pi_u.get(x, y) - 0.5 * (sums[x] + sums[y]) - deltas.tail_bound
    });
    BoundReport::from_margins(margins, BOUND_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceBoundReport {
    pub sigma: f64,
    /// `Δ_n(x) ≤ √2σ` for every `n, x`.
    pub delta: BoundReport,
    /// `|V(x) − V(y)| ≤ ΠU(x,y) + √2σ/(1−γ)` for every pair.
    pub global: BoundReport,
}

impl VarianceBoundReport {
    pub fn pass(&self) -> bool {
        self.delta.pass && self.global.pass
    }
}

pub fn prop17_check(
    deltas: &DeltaSeries,
    variances: &DVector<f64>,
    pi_u: &DistanceMatrix,
    v: &ValueFunction,
) -> VarianceBoundReport {
    let sigma = variances.iter().fold(0.0_f64, |m, s| m.max(*s)).sqrt();
    let cap = 2f64.sqrt() * sigma;
    let delta = BoundReport::from_margins(deltas.values.iter().map(|d| d - cap), 1e-10);
    let additive = cap / (1.0 - deltas.gamma);
    let global = BoundReport::from_margins(
        pairs(pi_u.n_states()).map(|(x, y)| {
            (v.values[x] - v.values[y]).abs() - pi_u.get(x, y) - additive
        }),
        BOUND_TOL,
    );
    VarianceBoundReport {
        sigma,
        delta,
        global,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub min_gap: f64,
    pub mean_gap: f64,
}

/// Signed gaps `d(x,y) − |V^π(x) − V^π(y)|` over distinct-state pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapStats {
    pub sigma: f64,
    pub gaps: BTreeMap<MetricKind, Gap>,
}

impl GapStats {
    pub fn get(&self, kind: MetricKind) -> Option<Gap> {
        self.gaps.get(&kind).copied()
    }
}

/// Gap of one distance matrix against a value function.
pub fn gap(d: &DistanceMatrix, v: &ValueFunction) -> Gap {
    let n = d.n_states();
    let (mut min_gap, mut total, mut count) = (f64::INFINITY, 0.0, 0usize);
    for (x, y) in pairs(n) {
        let g = d.get(x, y) - (v.values[x] - v.values[y]).abs();
        min_gap = min_gap.min(g);
        total += g;
        count += 1;
    }
    if count == 0 {
        return Gap {
            min_gap: 0.0,
            mean_gap: 0.0,
        };
    }
    Gap {
        min_gap,
        mean_gap: total / count as f64,
    }
}

/// The KSMe in reward units: solved at the canonical scale, where the kernel
/// is positive semidefinite, and multiplied back by `r_span`.
pub fn ksme_reward_units(chain: &InducedChain, opts: FixedPointOptions) -> Result<DistanceMatrix> {
    Ok(ksme_reward_units_with_report(chain, opts)?.0)
}

fn ksme_reward_units_with_report(
    chain: &InducedChain,
    opts: FixedPointOptions,
) -> Result<(DistanceMatrix, FixedPointReport)> {
    let scale = RewardScale::canonical(chain);
    let (k, report) = kernel_fixed_point(chain, scale, opts)?;
    Ok((ksme_distance(&k)?.scaled(1.0 / scale.weight()), report))
}

/// Solve the requested metrics in reward units.
///
/// `mdp` is needed only for [`MetricKind::Bisim`].
pub fn solve_reward_units(
    chain: &InducedChain,
    mdp: Option<&Mdp>,
    kind: MetricKind,
    opts: FixedPointOptions,
) -> Result<DistanceMatrix> {
    Ok(solve_reward_units_with_report(chain, mdp, kind, opts)?.0)
}

/// [`solve_reward_units`] together with the solver's convergence report.
pub fn solve_reward_units_with_report(
    chain: &InducedChain,
    mdp: Option<&Mdp>,
    kind: MetricKind,
    opts: FixedPointOptions,
) -> Result<(DistanceMatrix, FixedPointReport)> {
    let raw = RewardScale::raw();
    Ok(match kind {
        MetricKind::Ksme => ksme_reward_units_with_report(chain, opts)?,
        MetricKind::Mico => mico_fixed_point(chain, raw, MicoMethod::Iterate(opts))?,
        MetricKind::ReducedMico => {
            let (u, report) = mico_fixed_point(chain, raw, MicoMethod::Iterate(opts))?;
            (crate::metrics::reduce(&u)?, report)
        }
        MetricKind::PiBisim => pi_bisim_fixed_point(chain, raw, opts, BisimMethod::default())?,
        MetricKind::Bisim => {
            let mdp = mdp.ok_or_else(|| {
                Error::Parameter("the bisimulation metric needs the full MDP".into())
            })?;
            bisim_fixed_point(mdp, raw, opts, BisimMethod::default())?
        }
    })
}

/// Gap statistics for each requested kind.
pub fn gap_stats(
    chain: &InducedChain,
    mdp: Option<&Mdp>,
    kinds: &[MetricKind],
    opts: FixedPointOptions,
) -> Result<GapStats> {
    let v = policy_value(chain, ValueMethod::DirectSolve)?;
    let mut gaps = BTreeMap::new();
    for &kind in kinds {
        let d = solve_reward_units(chain, mdp, kind, opts)?;
        gaps.insert(kind, gap(&d, &v));
    }
    Ok(GapStats {
        sigma: chain.max_reward_sd(),
        gaps,
    })
}

#[cfg(test)]
mod tests;
