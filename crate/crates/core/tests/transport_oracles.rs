//! Kantorovich solver against two independent oracles: enumeration of all
//! basic feasible solutions, and the 1-D CDF formula.

use ksme_core::prob::{kantorovich, CostMatrix, Dist};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Min cost over every spanning-tree basis of the `m × n` transportation
/// polytope whose (unique) basic solution is feasible.
fn enumerate_bases(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
    let (m, n) = (supply.len(), demand.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    choose(&cells, k, 0, &mut chosen, &mut |basis| {
        if let Some(flows) = basic_solution(basis, supply, demand) {
            if flows.iter().all(|f| *f >= -1e-12) {
                let c: f64 = basis.iter().zip(&flows).map(|(&(i, j), f)| f * cost[i * n + j]).sum();
                best = best.min(c);
            }
        }
    });
    best
}

fn choose(
    cells: &[(usize, usize)],
    k: usize,
    start: usize,
    chosen: &mut Vec<(usize, usize)>,
    visit: &mut impl FnMut(&[(usize, usize)]),
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for idx in start..cells.len() {
        if cells.len() - idx < k - chosen.len() {
            break;
        }
        chosen.push(cells[idx]);
        choose(cells, k, idx + 1, chosen, visit);
        chosen.pop();
    }
}

/// Flows on a basis by repeatedly peeling leaves; `None` unless the cells
/// form a spanning tree of the bipartite row/column graph.
fn basic_solution(basis: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (supply.len(), demand.len());
    let mut rest_s = supply.to_vec();
    let mut rest_d = demand.to_vec();
    let mut flows = vec![f64::NAN; basis.len()];
    let mut open: Vec<bool> = vec![true; basis.len()];
    for _ in 0..basis.len() {
        let degree_row = |i: usize, open: &[bool]| (0..basis.len()).filter(|&c| open[c] && basis[c].0 == i).count();
        let degree_col = |j: usize, open: &[bool]| (0..basis.len()).filter(|&c| open[c] && basis[c].1 == j).count();
        let mut progressed = false;
        for c in 0..basis.len() {
            if !open[c] {
                continue;
            }
            let (i, j) = basis[c];
            if degree_row(i, &open) == 1 {
                flows[c] = rest_s[i];
            } else if degree_col(j, &open) == 1 {
                flows[c] = rest_d[j];
            } else {
                continue;
            }
            rest_s[i] -= flows[c];
            rest_d[j] -= flows[c];
            open[c] = false;
            progressed = true;
            break;
        }
        if !progressed {
            return None;
        }
    }
    // A spanning tree touches every row and column.
    let rows_ok = (0..m).all(|i| basis.iter().any(|c| c.0 == i));
    let cols_ok = (0..n).all(|j| basis.iter().any(|c| c.1 == j));
    let balanced = rest_s.iter().chain(&rest_d).all(|r| r.abs() < 1e-9);
    (rows_ok && cols_ok && balanced).then_some(flows)
}

fn weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    })
}

/// `(μ on 0..a, ν on a..a+b, symmetric metric-free cost on a+b points)`.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(a, b)| (weights(a), weights(b), prop::collection::vec(0.0f64..10.0, a * b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_basis_enumeration((supply, demand, cost) in instance()) {
        let (a, b) = (supply.len(), demand.len());
        let n = a + b;
        // Embed into one ground set: μ on the first a points, ν on the rest.
        let mut ground = DMatrix::zeros(n, n);
        for i in 0..a {
            for j in 0..b {
                ground[(i, a + j)] = cost[i * b + j];
                ground[(a + j, i)] = cost[i * b + j];
            }
        }
        let mut mu = vec![0.0; n];
        mu[..a].copy_from_slice(&supply);
        let mut nu = vec![0.0; n];
        nu[a..].copy_from_slice(&demand);
        let (mu, nu) = (Dist::normalized(&mu).unwrap(), Dist::normalized(&nu).unwrap());
        let (value, plan) = kantorovich(&mu, &nu, &CostMatrix::new(ground).unwrap()).unwrap();
        let oracle = enumerate_bases(&supply, &demand, &cost);
        prop_assert!((value - oracle).abs() <= 1e-9, "{value} vs {oracle}");
        prop_assert!((plan.row_sums() - nalgebra::DVector::from_vec(mu.weights().to_vec())).amax() <= 1e-10);
        prop_assert!((plan.col_sums() - nalgebra::DVector::from_vec(nu.weights().to_vec())).amax() <= 1e-10);
        prop_assert!(plan.plan.iter().all(|f| *f >= 0.0));
    }

    #[test]
    fn matches_cdf_formula(
        (points, mu, nu) in (2usize..=8).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..5.0, n),
            weights(n),
            weights(n),
        ))
    ) {
        let d = CostMatrix::line(&points);
        let (mu_d, nu_d) = (Dist::new(mu.clone()).unwrap_or_else(|_| Dist::normalized(&mu).unwrap()),
                            Dist::new(nu.clone()).unwrap_or_else(|_| Dist::normalized(&nu).unwrap()));
        let (value, _) = kantorovich(&mu_d, &nu_d, &d).unwrap();
        // ∫|F_μ − F_ν| over the sorted support.
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
        let (mut f_mu, mut f_nu, mut oracle) = (0.0, 0.0, 0.0);
        for w in order.windows(2) {
            f_mu += mu_d.weights()[w[0]];
            f_nu += nu_d.weights()[w[0]];
            oracle += (f_mu - f_nu).abs() * (points[w[1]] - points[w[0]]);
        }
        prop_assert!((value - oracle).abs() <= 1e-10, "{value} vs {oracle}");
    }
}
