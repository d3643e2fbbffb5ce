//! Fixed-point solvers for behavioural metrics on a finite MDP.
//!
//! All solvers iterate synchronously from the zero matrix. Reward differences
//! enter every operator through a [`RewardScale`] weight `w`:
//!
//! * MICo: `T(U) = w|r_x − r_y| + γ P U Pᵀ`
//! * kernel: `T(k) = 1 − (w/2)|r_x − r_y| + γ P k Pᵀ`
//! * (π-)bisimulation: `F(d) = w|r_x − r_y| + γ W(d)(P_x, P_y)`
//!
//! With one weight shared by both operators, `k(x,x) + k(y,y) − 2k(x,y)` and
//! the reduced MICo distance agree at every iterate.

mod coupling;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{self, sup_distance, FixedPointOptions, FixedPointReport};
use crate::mdp::{InducedChain, Mdp};
use crate::prob::{self, Dist, GramMatrix};

pub use coupling::BisimMethod;

/// Largest chain accepted by [`MicoMethod::DirectSolve`].
pub const DIRECT_SOLVE_LIMIT: usize = 64;

const SYMMETRY_TOL: f64 = 1e-10;
const CLAMP_TOL: f64 = 1e-10;

/// Weight applied to absolute reward differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScale {
    weight: f64,
}

impl RewardScale {
    pub fn new(weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Parameter(format!("reward weight {weight}")));
        }
        Ok(Self { weight })
    }

    /// `w = 1`: metrics in reward units.
    pub fn raw() -> Self {
        Self { weight: 1.0 }
    }

    /// `w = 1/r_span` (or 1 when rewards are constant). Reward differences
    /// land in `[0, 1]` and the kernel's immediate term in `[½, 1]`.
    pub fn canonical(chain: &InducedChain) -> Self {
        Self::per_span(chain.r_span(), 1.0)
    }

    /// `w = 2/r_span`: immediate kernel `1 − |Δr|/r_span`, spanning `[0, 1]`.
    pub fn unit_range(chain: &InducedChain) -> Self {
        Self::per_span(chain.r_span(), 2.0)
    }

    fn per_span(span: f64, numerator: f64) -> Self {
        let weight = if span > 0.0 { numerator / span } else { 1.0 };
        Self { weight }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Bisim,
    PiBisim,
    Mico,
    ReducedMico,
    Ksme,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Bisim,
        MetricKind::PiBisim,
        MetricKind::Mico,
        MetricKind::ReducedMico,
        MetricKind::Ksme,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Bisim => "bisim",
            MetricKind::PiBisim => "pi_bisim",
            MetricKind::Mico => "mico",
            MetricKind::ReducedMico => "reduced_mico",
            MetricKind::Ksme => "ksme",
        }
    }

    /// Every kind but MICo has a zero diagonal.
    pub fn zero_diag(self) -> bool {
        self != MetricKind::Mico
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown metric kind `{s}`")))
    }
}

/// Symmetric nonnegative state-pair distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: DMatrix<f64>,
    kind: MetricKind,
}

impl DistanceMatrix {
    /// Symmetrizes, clamps entries in `[−1e-10, 0)` to zero and, for
    /// zero-diagonal kinds, zeroes the diagonal after checking it is ≤ 1e-9.
    pub fn new(mut values: DMatrix<f64>, kind: MetricKind) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::Dimension(format!("{}x{} distance matrix", n, values.ncols())));
        }
        let scale = 1.0 + values.amax();
        for x in 0..n {
            for y in 0..x {
                if (values[(x, y)] - values[(y, x)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Dimension(format!("{kind} matrix not symmetric at ({x},{y})")));
                }
                let mean = 0.5 * (values[(x, y)] + values[(y, x)]);
                values[(x, y)] = mean;
                values[(y, x)] = mean;
            }
        }
        for v in values.iter_mut() {
            if *v < -CLAMP_TOL * scale || !v.is_finite() {
                return Err(Error::Parameter(format!("{kind} entry {v} is negative")));
            }
            *v = v.max(0.0);
        }
        if kind.zero_diag() {
            for x in 0..n {
                if values[(x, x)] > 1e-9 * scale {
                    return Err(Error::Parameter(format!(
                        "{kind} self-distance {} at state {x}",
                        values[(x, x)]
                    )));
                }
                values[(x, x)] = 0.0;
            }
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn zero_diag(&self) -> bool {
        self.kind.zero_diag()
    }

    pub fn n_states(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    /// Same entries scaled by `factor ≥ 0`, e.g. back to reward units.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: &self.values * factor,
            kind: self.kind,
        }
    }
}

/// Positive semidefinite state kernel `k^π`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    pub gamma: f64,
    pub reward_span: f64,
}

impl KernelMatrix {
    pub fn new(values: DMatrix<f64>, gamma: f64, reward_span: f64) -> Result<Self> {
        let gram = GramMatrix::new(values)?;
        Ok(Self {
            values: gram.values().clone(),
            gamma,
            reward_span,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.values.nrows()
    }

    pub fn gram(&self) -> GramMatrix {
        GramMatrix::new_unchecked(self.values.clone())
    }
}

fn check_square(m: &DMatrix<f64>, chain: &InducedChain) -> Result<()> {
    let n = chain.n_states();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{}x{} matrix for a {n}-state chain",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `w|r_x − r_y|` for every pair.
pub fn reward_differences(chain: &InducedChain, scale: RewardScale) -> DMatrix<f64> {
    let r = chain.r_pi();
    let w = scale.weight();
    DMatrix::from_fn(r.len(), r.len(), |x, y| w * (r[x] - r[y]).abs())
}

/// `1 − (w/2)|r_x − r_y|` for every pair.
pub fn immediate_kernel(chain: &InducedChain, scale: RewardScale) -> DMatrix<f64> {
    reward_differences(chain, scale).map(|d| 1.0 - 0.5 * d)
}

/// `γ P M Pᵀ`, symmetrized.
fn propagate(chain: &InducedChain, m: &DMatrix<f64>) -> DMatrix<f64> {
    let p = chain.p_pi();
    let mut out = p * m * p.transpose();
    out.scale_mut(chain.gamma());
    symmetrize(&mut out);
    out
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for x in 0..n {
        for y in 0..x {
            let mean = 0.5 * (m[(x, y)] + m[(y, x)]);
            m[(x, y)] = mean;
            m[(y, x)] = mean;
        }
    }
}

/// One application of the MICo operator.
pub fn mico_apply(u: &DMatrix<f64>, chain: &InducedChain, scale: RewardScale) -> Result<DMatrix<f64>> {
    check_square(u, chain)?;
    Ok(reward_differences(chain, scale) + propagate(chain, u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MicoMethod {
    Iterate(FixedPointOptions),
    /// Dense solve of `(I − γ P⊗P) vec U = vec(w|Δr|)`.
    DirectSolve,
}

/// The MICo distance `U^π`.
pub fn mico_fixed_point(
    chain: &InducedChain,
    scale: RewardScale,
    method: MicoMethod,
) -> Result<(DistanceMatrix, FixedPointReport)> {
    let n = chain.n_states();
    let (u, report) = match method {
        MicoMethod::Iterate(opts) => fixed_point::iterate(
            DMatrix::zeros(n, n),
            chain.gamma(),
            opts,
            |u| mico_apply(u, chain, scale),
            sup_distance,
        )?,
        MicoMethod::DirectSolve => {
            if n > DIRECT_SOLVE_LIMIT {
                return Err(Error::TooLarge {
                    n,
                    limit: DIRECT_SOLVE_LIMIT,
                });
            }
            let start = std::time::Instant::now();
            let p = chain.p_pi();
            let a = DMatrix::identity(n * n, n * n) - p.kronecker(p) * chain.gamma();
            let rhs = reward_differences(chain, scale);
            // Row-major vec: index x*n + y.
            let b = DVector::from_iterator(n * n, rhs.transpose().iter().copied());
            let sol = a.lu().solve(&b).ok_or(Error::Singular)?;
            let mut u = DMatrix::from_row_slice(n, n, sol.as_slice());
            symmetrize(&mut u);
            let residual = sup_distance(&mico_apply(&u, chain, scale)?, &u);
            let report = FixedPointReport {
                iterations: 1,
                final_residual: residual,
                converged: true,
                wall_time: start.elapsed(),
            };
            (u, report)
        }
    };
    Ok((DistanceMatrix::new(u, MetricKind::Mico)?, report))
}

/// Reduced MICo `ΠU(x,y) = U(x,y) − ½(U(x,x) + U(y,y))`.
pub fn reduce_raw(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            0.0
        } else {
            u[(x, y)] - 0.5 * (u[(x, x)] + u[(y, y)])
        }
    })
}

pub fn reduce(u: &DistanceMatrix) -> Result<DistanceMatrix> {
    DistanceMatrix::new(reduce_raw(u.values()), MetricKind::ReducedMico)
}

/// One application of the kernel similarity operator.
pub fn kernel_apply(k: &DMatrix<f64>, chain: &InducedChain, scale: RewardScale) -> Result<DMatrix<f64>> {
    check_square(k, chain)?;
    Ok(immediate_kernel(chain, scale) + propagate(chain, k))
}

/// The kernel `k^π` by iteration from `k ≡ 0`.
pub fn kernel_fixed_point(
    chain: &InducedChain,
    scale: RewardScale,
    opts: FixedPointOptions,
) -> Result<(KernelMatrix, FixedPointReport)> {
    let n = chain.n_states();
    let (k, report) = fixed_point::iterate(
        DMatrix::zeros(n, n),
        chain.gamma(),
        opts,
        |k| kernel_apply(k, chain, scale),
        sup_distance,
    )?;
    let kernel = KernelMatrix::new(k, chain.gamma(), chain.r_span())?;
    Ok((kernel, report))
}

/// `k(x,x) + k(y,y) − 2k(x,y)` without clamping.
pub fn kernel_distance_raw(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            0.0
        } else {
            k[(x, x)] + k[(y, y)] - 2.0 * k[(x, y)]
        }
    })
}

/// The kernel similarity metric `d_ks`.
pub fn ksme_distance(k: &KernelMatrix) -> Result<DistanceMatrix> {
    DistanceMatrix::new(kernel_distance_raw(k.values()), MetricKind::Ksme)
}

/// `max_{x,y} |d_ks(x,y) − w|Δr| − γ·MMD²(k)(P_x, P_y)|`.
pub fn decomposition_residual(k: &KernelMatrix, chain: &InducedChain, scale: RewardScale) -> Result<f64> {
    check_square(k.values(), chain)?;
    let n = chain.n_states();
    let d = kernel_distance_raw(k.values());
    let dr = reward_differences(chain, scale);
    let gram = k.gram();
    let rows: Vec<Dist> = chain
        .p_pi()
        .row_iter()
        .map(|r| Dist::normalized(&r.iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut worst = 0.0_f64;
    for x in 0..n {
        for y in x + 1..n {
            let mmd2 = prob::mmd_squared(&rows[x], &rows[y], &gram)?;
            let residual = (d[(x, y)] - dr[(x, y)] - chain.gamma() * mmd2).abs();
            worst = worst.max(residual);
        }
    }
    Ok(worst)
}

/// π-bisimulation metric `d_∼^π` of a chain.
pub fn pi_bisim_fixed_point(
    chain: &InducedChain,
    scale: RewardScale,
    opts: FixedPointOptions,
    method: BisimMethod,
) -> Result<(DistanceMatrix, FixedPointReport)> {
    let n = chain.n_states();
    let rows: Vec<Vec<f64>> = chain.p_pi().row_iter().map(|r| r.iter().copied().collect()).collect();
    let rewards = chain.r_pi().as_slice().to_vec();
    let game = coupling::CouplingGame::new(n, vec![rows], vec![rewards], scale.weight(), chain.gamma());
    let (d, report) = game.solve(opts, method)?;
    Ok((DistanceMatrix::new(d, MetricKind::PiBisim)?, report))
}

/// Bisimulation metric `d_∼` of an MDP (max over actions).
pub fn bisim_fixed_point(
    mdp: &Mdp,
    scale: RewardScale,
    opts: FixedPointOptions,
    method: BisimMethod,
) -> Result<(DistanceMatrix, FixedPointReport)> {
    let n = mdp.n_states();
    let (rows, rewards): (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) = (0..mdp.n_actions())
        .map(|a| {
            let rows = (0..n).map(|x| mdp.transition(x, a).to_vec()).collect();
            let rewards = (0..n).map(|x| mdp.reward(x, a)).collect();
            (rows, rewards)
        })
        .unzip();
    let game = coupling::CouplingGame::new(n, rows, rewards, scale.weight(), mdp.gamma());
    let (d, report) = game.solve(opts, method)?;
    Ok((DistanceMatrix::new(d, MetricKind::Bisim)?, report))
}
