//! Kantorovich-based metric operators, solved pair by pair with the
//! transportation simplex.
//!
//! `F(d)(x,y) = max_a (w|r_x^a − r_y^a| + γ W(d)(P_x^a, P_y^a))`, with one
//! action for the π-bisimulation metric.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fixed_point::{iteration_cap, stopping_threshold, sup_distance, FixedPointOptions, FixedPointReport};
use crate::prob::transport::Transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BisimMethod {
    /// Plain synchronous iteration of `F`.
    ValueIteration,
    /// After each exact application of `F`, freeze the optimal couplings and
    /// iterate the resulting linear operator to its fixed point before the
    /// next transport round. The iterates decrease monotonically towards the
    /// metric after the first round and far fewer transport rounds are needed.
    #[default]
    StrategyIteration,
}

struct Branch {
    support: Vec<usize>,
    weights: Vec<f64>,
}

impl Branch {
    fn new(row: &[f64]) -> Self {
        let support: Vec<usize> = (0..row.len()).filter(|&y| row[y] > 0.0).collect();
        let weights = support.iter().map(|&y| row[y]).collect();
        Self { support, weights }
    }
}

pub(super) struct CouplingGame {
    n: usize,
    gamma: f64,
    /// `[action][state]`.
    branches: Vec<Vec<Branch>>,
    /// `[action]`: weighted reward gaps.
    gaps: Vec<DMatrix<f64>>,
    pairs: Vec<(usize, usize)>,
}

/// Sparse coupling in global state indices.
type Plan = Vec<(usize, usize, f64)>;

impl CouplingGame {
    pub(super) fn new(
        n: usize,
        rows: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        weight: f64,
        gamma: f64,
    ) -> Self {
        let branches = rows
            .iter()
            .map(|per_state| per_state.iter().map(|r| Branch::new(r)).collect())
            .collect();
        let gaps = rewards
            .iter()
            .map(|r| DMatrix::from_fn(n, n, |x, y| weight * (r[x] - r[y]).abs()))
            .collect();
        let pairs = (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect();
        Self {
            n,
            gamma,
            branches,
            gaps,
            pairs,
        }
    }

    fn n_actions(&self) -> usize {
        self.branches.len()
    }

    /// Exact `F(d)`; records the optimal coupling of every (pair, action).
    fn exact_step(
        &self,
        d: &DMatrix<f64>,
        transports: &mut [Option<Transport>],
        plans: &mut [Plan],
    ) -> Result<DMatrix<f64>> {
        let m = self.n_actions();
        let mut out = DMatrix::zeros(self.n, self.n);
        let mut cost = Vec::new();
        for (p, &(x, y)) in self.pairs.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for a in 0..m {
                let (bx, by) = (&self.branches[a][x], &self.branches[a][y]);
                cost.clear();
                for &i in &bx.support {
                    cost.extend(by.support.iter().map(|&j| d[(i, j)]));
                }
                let slot = &mut transports[p * m + a];
                if slot.is_none() {
                    *slot = Some(Transport::new(&bx.weights, &by.weights)?);
                }
                let t = slot.as_mut().expect("initialized above");
                let w = t.solve(&cost)?;
                let plan = &mut plans[p * m + a];
                plan.clear();
                plan.extend(
                    t.plan()
                        .filter(|c| c.2 > 0.0)
                        .map(|(i, j, f)| (bx.support[i], by.support[j], f)),
                );
                best = best.max(self.gaps[a][(x, y)] + self.gamma * w.max(0.0));
            }
            out[(x, y)] = best;
            out[(y, x)] = best;
        }
        Ok(out)
    }

    /// `F` with the couplings frozen.
    fn frozen_step(&self, d: &DMatrix<f64>, plans: &[Plan]) -> DMatrix<f64> {
        let m = self.n_actions();
        let mut out = DMatrix::zeros(self.n, self.n);
        for (p, &(x, y)) in self.pairs.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for a in 0..m {
                let w: f64 = plans[p * m + a].iter().map(|&(i, j, f)| f * d[(i, j)]).sum();
                best = best.max(self.gaps[a][(x, y)] + self.gamma * w);
            }
            out[(x, y)] = best;
            out[(y, x)] = best;
        }
        out
    }

    fn evaluate(&self, mut d: DMatrix<f64>, plans: &[Plan], target: f64) -> DMatrix<f64> {
        let mut cap = None;
        let mut steps = 0;
        loop {
            let next = self.frozen_step(&d, plans);
            let change = sup_distance(&next, &d);
            d = next;
            steps += 1;
            let limit = *cap.get_or_insert_with(|| iteration_cap(target, self.gamma, change));
            if change <= target || steps >= limit || !change.is_finite() {
                return d;
            }
        }
    }

    pub(super) fn solve(
        &self,
        opts: FixedPointOptions,
        method: BisimMethod,
    ) -> Result<(DMatrix<f64>, FixedPointReport)> {
        let start = std::time::Instant::now();
        let slots = self.pairs.len() * self.n_actions();
        let mut transports: Vec<Option<Transport>> = (0..slots).map(|_| None).collect();
        let mut plans: Vec<Plan> = vec![Vec::new(); slots];
        let threshold = stopping_threshold(opts.tol, self.gamma);
        let mut d = DMatrix::zeros(self.n, self.n);
        let mut cap = opts.max_iter;
        let mut iterations = 0;
        loop {
            let next = self.exact_step(&d, &mut transports, &mut plans)?;
            iterations += 1;
            let residual = sup_distance(&next, &d);
            if !residual.is_finite() {
                return Err(Error::NonConvergence { iterations, residual });
            }
            let limit = *cap.get_or_insert_with(|| iteration_cap(threshold, self.gamma, residual));
            if residual <= threshold {
                let report = FixedPointReport {
                    iterations,
                    final_residual: residual,
                    converged: true,
                    wall_time: start.elapsed(),
                };
                return Ok((next, report));
            }
            if iterations >= limit {
                return Err(Error::NonConvergence { iterations, residual });
            }
            d = match method {
                BisimMethod::ValueIteration => next,
                BisimMethod::StrategyIteration => self.evaluate(next, &plans, 0.1 * threshold),
            };
        }
    }
}
