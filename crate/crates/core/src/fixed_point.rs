//! Banach fixed-point iteration shared by the value and metric solvers.
//!
//! Every operator iterated here is a γ-contraction in the sup norm, so the
//! distance between successive iterates bounds the distance to the fixed
//! point: `‖x* − x_{n+1}‖ ≤ γ/(1−γ)·‖x_{n+1} − x_n‖`. Iteration stops once
//! that a-posteriori bound (and the successive-iterate residual itself) is
//! below `tol`.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Extra iterations on top of the a-priori contraction estimate, absorbing
/// floating-point plateaus near the fixed point.
const ITERATION_SLACK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    /// `None` derives the cap from the contraction modulus and the first residual.
    pub max_iter: Option<usize>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

impl FixedPointOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Threshold on the successive-iterate residual that guarantees both a
/// residual and an error bound of at most `tol`.
pub fn stopping_threshold(tol: f64, gamma: f64) -> f64 {
    if gamma <= 0.0 {
        tol
    } else {
        tol * ((1.0 - gamma) / gamma).min(1.0)
    }
}

/// `⌈log(tol·(1−γ)/C)/log γ⌉ + 64` where `C` is the first residual.
pub fn iteration_cap(tol: f64, gamma: f64, initial_residual: f64) -> usize {
    if initial_residual <= tol || gamma <= 0.0 {
        return 1 + ITERATION_SLACK;
    }
    let n = ((tol * (1.0 - gamma) / initial_residual).ln() / gamma.ln()).ceil();
    n.max(0.0) as usize + ITERATION_SLACK
}

/// Iterate `step` from `init` until the stopping rule fires.
///
/// Returns the last iterate and a report. Exceeding the iteration cap is an
/// error carrying the last residual.
pub fn iterate<T>(
    init: T,
    gamma: f64,
    opts: FixedPointOptions,
    mut step: impl FnMut(&T) -> Result<T>,
    distance: impl Fn(&T, &T) -> f64,
) -> Result<(T, FixedPointReport)> {
    let start = Instant::now();
    let threshold = stopping_threshold(opts.tol, gamma);
    let mut current = init;
    let mut cap = opts.max_iter;
    let mut iterations = 0;
    loop {
        let next = step(&current)?;
        iterations += 1;
        let residual = distance(&next, &current);
        if !residual.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                residual,
            });
        }
        let limit = *cap.get_or_insert_with(|| iteration_cap(threshold, gamma, residual));
        current = next;
        if residual <= threshold {
            let report = FixedPointReport {
                iterations,
                final_residual: residual,
                converged: true,
                wall_time: start.elapsed(),
            };
            return Ok((current, report));
        }
        if iterations >= limit {
            return Err(Error::NonConvergence {
                iterations,
                residual,
            });
        }
    }
}

pub(crate) fn sup_distance(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_contraction_converges_to_fixed_point() {
        // x = 1 + 0.9 x has fixed point 10.
        let (x, report) = iterate(
            0.0_f64,
            0.9,
            FixedPointOptions::default(),
            |x| Ok(1.0 + 0.9 * x),
            |a, b| (a - b).abs(),
        )
        .unwrap();
        assert!(report.converged);
        assert!((x - 10.0).abs() <= 1e-10);
        assert!(report.final_residual <= 1e-10);
    }

    #[test]
    fn cap_exceeded_reports_residual() {
        let err = iterate(
            0.0_f64,
            0.9,
            FixedPointOptions {
                tol: 1e-10,
                max_iter: Some(3),
            },
            |x| Ok(1.0 + 0.9 * x),
            |a, b| (a - b).abs(),
        )
        .unwrap_err();
        match err {
            Error::NonConvergence {
                iterations,
                residual,
            } => {
                assert_eq!(iterations, 3);
                assert!((residual - 0.81).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cap_formula() {
        assert_eq!(iteration_cap(1e-10, 0.5, 1e-12), 65);
        // log(1e-10 * 0.5 / 1) / log 0.5 = 34.2 -> 35
        assert_eq!(iteration_cap(1e-10, 0.5, 1.0), 35 + 64);
    }
}
