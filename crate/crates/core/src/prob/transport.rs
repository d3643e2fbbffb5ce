//! Dense transportation simplex.
//!
//! Starts from the north-west-corner basis and pivots on the spanning tree of
//! basic cells using MODI potentials. Entering and leaving cells are chosen by
//! Bland's rule (smallest row-major index), so degenerate pivots cannot cycle
//! and the pivot sequence is deterministic.
//!
//! A solved [`Transport`] keeps its optimal basis. Calling [`Transport::solve`]
//! again with a different cost matrix warm-starts from that basis: the basic
//! flows depend only on the marginals, so the old basis stays feasible.

use crate::error::{Error, Result};

/// Marginal sums may differ by at most this much.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Transport {
    m: usize,
    n: usize,
    basis: Vec<(usize, usize)>,
    flows: Vec<f64>,
    // Scratch space reused across pivots.
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Node {
    Row(usize),
    Col(usize),
}

impl Transport {
    /// Set up the problem for marginals `supply` (rows) and `demand` (columns).
    pub fn new(supply: &[f64], demand: &[f64]) -> Result<Self> {
        let (m, n) = (supply.len(), demand.len());
        if m == 0 || n == 0 {
            return Err(Error::Empty("transport marginals"));
        }
        if supply.iter().chain(demand).any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "transport marginals must be finite and nonnegative".into(),
            ));
        }
        let (total_s, total_d): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
        if (total_s - total_d).abs() > BALANCE_TOL {
            return Err(Error::Unbalanced(total_s, total_d));
        }

        // North-west corner: exactly m + n - 1 cells, a spanning tree.
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let mut basis = Vec::with_capacity(m + n - 1);
        let mut flows = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let q = s[i].min(d[j]).max(0.0);
            basis.push((i, j));
            flows.push(q);
            s[i] -= q;
            d[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if j == n - 1 || (i < m - 1 && s[i] <= d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }

        Ok(Self {
            m,
            n,
            basis,
            flows,
            row_adj: vec![Vec::new(); m],
            col_adj: vec![Vec::new(); n],
            u: vec![0.0; m],
            v: vec![0.0; n],
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    /// Minimize `Σ flow(i,j)·cost[i*n + j]` and return the optimal cost.
    pub fn solve(&mut self, cost: &[f64]) -> Result<f64> {
        let (m, n) = (self.m, self.n);
        if cost.len() != m * n {
            return Err(Error::Dimension(format!(
                "cost has {} entries for a {m}x{n} problem",
                cost.len()
            )));
        }
        let scale = cost.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
        let eps = 1e-13 * (1.0 + scale);
        let max_pivots = 50 * m * n * (m + n) + 1000;

        for _ in 0..max_pivots {
            self.rebuild_adjacency();
            self.compute_potentials(cost);
            let Some((ei, ej)) = self.entering(cost, eps) else {
                return Ok(self.cost(cost));
            };
            self.pivot(ei, ej);
        }
        Err(Error::NonConvergence {
            iterations: max_pivots,
            residual: f64::NAN,
        })
    }

    /// Basic cells with their flows (zero-flow degenerate cells included).
    pub fn plan(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.basis
            .iter()
            .zip(&self.flows)
            .map(|(&(i, j), &f)| (i, j, f))
    }

    fn cost(&self, cost: &[f64]) -> f64 {
        self.plan().map(|(i, j, f)| f * cost[i * self.n + j]).sum()
    }

    fn rebuild_adjacency(&mut self) {
        self.row_adj.iter_mut().for_each(Vec::clear);
        self.col_adj.iter_mut().for_each(Vec::clear);
        for (k, &(i, j)) in self.basis.iter().enumerate() {
            self.row_adj[i].push(k);
            self.col_adj[j].push(k);
        }
    }

    /// Solve `u_i + v_j = c_ij` over the basis tree with `u_0 = 0`.
    fn compute_potentials(&mut self, cost: &[f64]) {
        let n = self.n;
        let mut seen_row = vec![false; self.m];
        let mut seen_col = vec![false; n];
        let mut stack = vec![Node::Row(0)];
        self.u[0] = 0.0;
        seen_row[0] = true;
        while let Some(node) = stack.pop() {
            match node {
                Node::Row(i) => {
                    for &k in &self.row_adj[i] {
                        let j = self.basis[k].1;
                        if !seen_col[j] {
                            seen_col[j] = true;
                            self.v[j] = cost[i * n + j] - self.u[i];
                            stack.push(Node::Col(j));
                        }
                    }
                }
                Node::Col(j) => {
                    for &k in &self.col_adj[j] {
                        let i = self.basis[k].0;
                        if !seen_row[i] {
                            seen_row[i] = true;
                            self.u[i] = cost[i * n + j] - self.v[j];
                            stack.push(Node::Row(i));
                        }
                    }
                }
            }
        }
    }

    /// First cell in row-major order with a negative reduced cost.
    fn entering(&self, cost: &[f64], eps: f64) -> Option<(usize, usize)> {
        for i in 0..self.m {
            let row = &cost[i * self.n..(i + 1) * self.n];
            for (j, c) in row.iter().enumerate() {
                if c - self.u[i] - self.v[j] < -eps {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Basis-cell indices on the tree path from column `ej` to row `ei`,
    /// starting next to the column.
    fn tree_path(&self, ei: usize, ej: usize) -> Vec<usize> {
        let (m, n) = (self.m, self.n);
        // Parent cell of each node on the search tree rooted at column ej.
        let mut parent_row: Vec<Option<usize>> = vec![None; m];
        let mut parent_col: Vec<Option<usize>> = vec![None; n];
        let mut seen_row = vec![false; m];
        let mut seen_col = vec![false; n];
        seen_col[ej] = true;
        let mut stack = vec![Node::Col(ej)];
        while let Some(node) = stack.pop() {
            match node {
                Node::Col(j) => {
                    for &k in &self.col_adj[j] {
                        let i = self.basis[k].0;
                        if !seen_row[i] {
                            seen_row[i] = true;
                            parent_row[i] = Some(k);
                            if i == ei {
                                stack.clear();
                                break;
                            }
                            stack.push(Node::Row(i));
                        }
                    }
                }
                Node::Row(i) => {
                    for &k in &self.row_adj[i] {
                        let j = self.basis[k].1;
                        if !seen_col[j] {
                            seen_col[j] = true;
                            parent_col[j] = Some(k);
                            stack.push(Node::Col(j));
                        }
                    }
                }
            }
        }
        // Walk back from row ei to column ej.
        let mut path = Vec::new();
        let mut node = Node::Row(ei);
        loop {
            match node {
                Node::Row(i) => {
                    let k = parent_row[i].expect("basis is a spanning tree");
                    path.push(k);
                    node = Node::Col(self.basis[k].1);
                }
                Node::Col(j) => {
                    if j == ej {
                        break;
                    }
                    let k = parent_col[j].expect("basis is a spanning tree");
                    path.push(k);
                    node = Node::Row(self.basis[k].0);
                }
            }
        }
        path.reverse();
        path
    }

    fn pivot(&mut self, ei: usize, ej: usize) {
        let path = self.tree_path(ei, ej);
        // Cells at even positions lose flow, odd positions gain it.
        let n = self.n;
        let mut leave = path[0];
        for &k in path.iter().step_by(2) {
            let (f, fl) = (self.flows[k], self.flows[leave]);
            let (i, j) = self.basis[k];
            let (li, lj) = self.basis[leave];
            if f < fl || (f == fl && i * n + j < li * n + lj) {
                leave = k;
            }
        }
        let theta = self.flows[leave];
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                self.flows[k] = (self.flows[k] - theta).max(0.0);
            } else {
                self.flows[k] += theta;
            }
        }
        self.basis[leave] = (ei, ej);
        self.flows[leave] = theta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn north_west_corner_is_spanning() {
        let t = Transport::new(&[0.5, 0.5], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(t.plan().count(), 4);
        let total: f64 = t.plan().map(|(_, _, f)| f).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn classic_three_by_three() {
        let supply = [0.3, 0.3, 0.4];
        let demand = [0.4, 0.3, 0.3];
        let cost = [1.0, 2.0, 30.0, 20.0, 1.0, 2.0, 3.0, 40.0, 1.0];
        let mut t = Transport::new(&supply, &demand).unwrap();
        let value = t.solve(&cost).unwrap();
        // Optimal vertex: (0,0)=.3 (1,1)=.3 (2,0)=.1 (2,2)=.3.
        assert!((value - 1.2).abs() < 1e-12, "{value}");
        for (i, total) in supply.iter().enumerate() {
            let row: f64 = t.plan().filter(|c| c.0 == i).map(|c| c.2).sum();
            assert!((row - total).abs() < 1e-12);
        }
    }

    #[test]
    fn warm_start_reoptimizes() {
        let supply = [0.2, 0.5, 0.3];
        let demand = [0.6, 0.4];
        let mut t = Transport::new(&supply, &demand).unwrap();
        let a = t.solve(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = t.solve(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let mut cold = Transport::new(&supply, &demand).unwrap();
        let b_cold = cold.solve(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((a - 0.1).abs() < 1e-12, "{a}");
        assert!((b - b_cold).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(matches!(
            Transport::new(&[0.5], &[0.6]),
            Err(Error::Unbalanced(_, _))
        ));
    }
}
