//! Distances between distributions on a shared finite ground set.
//!
//! | Function | Quantity |
//! |----------|----------|
//! | [`kantorovich`] | `min_λ Σ λ(x,y) d(x,y)` over couplings |
//! | [`lk_distance`] | `E_{X∼μ, Y∼ν}[d(X,Y)]` (independent coupling) |
//! | [`mmd`] | `‖Φ(μ) − Φ(ν)‖` in the RKHS of `k` |
//! | [`energy_distance`] | `E ρ(X,Y) − ½(E ρ(X,X') + E ρ(Y,Y'))` |
//!
//! plus the conversions between positive definite kernels and semimetrics
//! of negative type.

pub mod transport;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::seeded;
use transport::{Transport, BALANCE_TOL};

const SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// A probability vector over `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    weights: Vec<f64>,
}

impl Dist {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    pub fn dirac(n: usize, at: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Normalize nonnegative weights, e.g. a row of a stochastic matrix.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices with positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Endless i.i.d. draws.
    pub fn samples<'a, R: Rng>(&self, rng: &'a mut R) -> impl Iterator<Item = usize> + 'a {
        let index = WeightedIndex::new(&self.weights).expect("valid distribution");
        std::iter::repeat_with(move || index.sample(rng))
    }
}

/// Symmetric nonnegative ground cost (a metric, or a semimetric `ρ`).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: DMatrix<f64>,
}

impl CostMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&values)?;
        if values.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidDistribution("costs must be finite and nonnegative".into()));
        }
        Ok(Self { values })
    }

    /// `|p_i − p_j|` for points on a line.
    pub fn line(points: &[f64]) -> Self {
        let n = points.len();
        Self {
            values: DMatrix::from_fn(n, n, |i, j| (points[i] - points[j]).abs()),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Symmetric positive semidefinite Gram matrix of a kernel on the ground set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
}

impl GramMatrix {
    /// Checks symmetry and `λ_min ≥ −1e-8·(spectral radius + 1)`.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&values)?;
        let (min, radius) = eigen_extremes(&values);
        if min < -1e-8 * (radius + 1.0) {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(Self { values })
    }

    /// Skip the eigenvalue check, for matrices PSD by construction.
    pub fn new_unchecked(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Transport plan `λ` with marginals `μ` (rows) and `ν` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub plan: DMatrix<f64>,
}

impl Coupling {
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.plan.nrows(), self.plan.row_iter().map(|r| r.sum()))
    }

    pub fn col_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.plan.ncols(), self.plan.column_iter().map(|c| c.sum()))
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let scale = 1.0 + m.amax();
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Dimension(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// `(λ_min, max |λ|)` of a symmetric matrix.
pub(crate) fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    let radius = eig.eigenvalues.amax();
    (min, radius)
}

fn check_dims(mu: &Dist, nu: &Dist, n: usize) -> Result<()> {
    if mu.len() != n || nu.len() != n {
        return Err(Error::Dimension(format!(
            "distributions of length {} and {} on a ground set of size {n}",
            mu.len(),
            nu.len()
        )));
    }
    Ok(())
}

/// `Σ_{x,y} μ(x) ν(y) m(x,y)`.
fn bilinear(mu: &[f64], m: &DMatrix<f64>, nu: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &a) in mu.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let row: f64 = nu
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, b)| b * m[(i, j)])
            .sum();
        total += a * row;
    }
    total
}

/// Exact Kantorovich (1-Wasserstein) distance and an optimal coupling.
pub fn kantorovich(mu: &Dist, nu: &Dist, d: &CostMatrix) -> Result<(f64, Coupling)> {
    check_dims(mu, nu, d.len())?;
    let (sm, sn): (f64, f64) = (mu.weights.iter().sum(), nu.weights.iter().sum());
    if (sm - sn).abs() > BALANCE_TOL {
        return Err(Error::Unbalanced(sm, sn));
    }
    let rows = mu.support();
    let cols = nu.support();
    let supply: Vec<f64> = rows.iter().map(|&i| mu.weights[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.weights[j]).collect();
    let cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| d.values[(i, j)]))
        .collect();
    let mut problem = Transport::new(&supply, &demand)?;
    let value = problem.solve(&cost)?;
    let mut plan = DMatrix::zeros(mu.len(), nu.len());
    for (i, j, f) in problem.plan() {
        plan[(rows[i], cols[j])] += f;
    }
    Ok((value.max(0.0), Coupling { plan }))
}

/// Łukaszyk–Karmowski distance `E_{X∼μ, Y∼ν}[d(X, Y)]`.
pub fn lk_distance(mu: &Dist, nu: &Dist, d: &CostMatrix) -> Result<f64> {
    check_dims(mu, nu, d.len())?;
    Ok(bilinear(&mu.weights, &d.values, &nu.weights))
}

/// Robbins–Monro estimate `d_n = (1 − α_n) d_{n−1} + α_n d(x_n, y_n)`, `d_0 = 0`.
///
/// `step(n)` gives `α_n` for `n = 1, 2, …`; the estimate after the last pair
/// is returned.
pub fn lk_stochastic_estimate(
    pairs: impl IntoIterator<Item = (usize, usize)>,
    d: &CostMatrix,
    mut step: impl FnMut(usize) -> f64,
) -> Result<f64> {
    let mut estimate = 0.0;
    let mut count = 0;
    for (x, y) in pairs {
        if x >= d.len() || y >= d.len() {
            return Err(Error::Dimension(format!("sample ({x},{y}) outside the ground set")));
        }
        count += 1;
        let alpha = step(count);
        estimate = (1.0 - alpha) * estimate + alpha * d.values[(x, y)];
    }
    if count == 0 {
        return Err(Error::Empty("sample stream"));
    }
    Ok(estimate)
}

/// Squared MMD, `Σμμ'k + Σνν'k − 2Σμνk`, without clamping.
pub fn mmd_squared(mu: &Dist, nu: &Dist, k: &GramMatrix) -> Result<f64> {
    check_dims(mu, nu, k.len())?;
    let (m, n) = (&mu.weights, &nu.weights);
    Ok(bilinear(m, &k.values, m) + bilinear(n, &k.values, n) - 2.0 * bilinear(m, &k.values, n))
}

/// Maximum mean discrepancy; radicands down to −1e-10 are clamped to zero.
pub fn mmd(mu: &Dist, nu: &Dist, k: &GramMatrix) -> Result<f64> {
    let sq = mmd_squared(mu, nu, k)?;
    if sq < -1e-10 * (1.0 + k.values.amax()) {
        return Err(Error::NotPsd { min_eigenvalue: sq });
    }
    Ok(sq.max(0.0).sqrt())
}

/// Energy distance of a semimetric of negative type.
pub fn energy_distance(mu: &Dist, nu: &Dist, rho: &CostMatrix) -> Result<f64> {
    check_dims(mu, nu, rho.len())?;
    let (m, n) = (&mu.weights, &nu.weights);
    let cross = bilinear(m, &rho.values, n);
    let within = bilinear(m, &rho.values, m) + bilinear(n, &rho.values, n);
    Ok(cross - 0.5 * within)
}

/// `K(x, x') = ½(ρ(x, x₀) + ρ(x', x₀) − ρ(x, x'))`, checked to be PSD.
pub fn kernel_from_semimetric(rho: &CostMatrix, base_point: usize) -> Result<GramMatrix> {
    let k = kernel_from_semimetric_raw(rho, base_point)?;
    let (min, radius) = eigen_extremes(&k);
    if min < -1e-8 * (radius + 1.0) {
        return Err(Error::NotNegativeType { min_eigenvalue: min });
    }
    Ok(GramMatrix { values: k })
}

fn kernel_from_semimetric_raw(rho: &CostMatrix, base_point: usize) -> Result<DMatrix<f64>> {
    let n = rho.len();
    if base_point >= n {
        return Err(Error::Dimension(format!("base point {base_point} outside 0..{n}")));
    }
    let r = &rho.values;
    Ok(DMatrix::from_fn(n, n, |x, y| {
        0.5 * (r[(x, base_point)] + r[(y, base_point)] - r[(x, y)])
    }))
}

/// Squared induced distance `k(x,x) + k(y,y) − 2k(x,y)`, a semimetric of negative type.
pub fn semimetric_from_kernel(k: &GramMatrix) -> CostMatrix {
    let kv = &k.values;
    let n = kv.nrows();
    let values = DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            0.0
        } else {
            (kv[(x, x)] + kv[(y, y)] - 2.0 * kv[(x, y)]).max(0.0)
        }
    });
    CostMatrix { values }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeTypeReport {
    pub negative_type: bool,
    /// Smallest eigenvalue over the base-point kernels.
    pub min_eigenvalue: f64,
    /// Zero-sum weights with `Σ c_i c_j ρ(x_i, x_j) > 0`, when one was found.
    pub witness: Option<Vec<f64>>,
}

/// Test whether `Σ c_i c_j ρ(x_i, x_j) ≤ 0` for every zero-sum `c`.
///
/// The deterministic part checks the base-point kernels for positive
/// semidefiniteness; the randomized part evaluates the quadratic form on
/// `trials` random zero-sum unit vectors. A violating vector is returned as a
/// witness: the eigenvector behind a negative kernel eigenvalue, projected to
/// zero sum, or a random trial.
pub fn is_negative_type(rho: &CostMatrix, trials: usize, seed: u64) -> NegativeTypeReport {
    let n = rho.len();
    let r = &rho.values;
    let scale = 1.0 + r.amax();
    let tol = 1e-10 * scale;
    let form = |c: &[f64]| bilinear(c, r, c);

    let mut min_eigenvalue = f64::INFINITY;
    let mut witness = None;
    for base in 0..n {
        let k = kernel_from_semimetric_raw(rho, base).expect("base point in range");
        let eig = SymmetricEigen::new(k);
        let (idx, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        min_eigenvalue = min_eigenvalue.min(lambda);
        if lambda < -tol && witness.is_none() {
            // c = (a, −Σa at the base point) gives Σ c c ρ = −2 aᵀ K a.
            let a = eig.eigenvectors.column(idx);
            let mut c: Vec<f64> = a.iter().copied().collect();
            c[base] -= a.sum();
            if form(&c) > tol {
                witness = Some(c);
            }
        }
    }

    let mut rng = seeded(seed);
    for _ in 0..trials {
        if witness.is_some() || n < 2 {
            break;
        }
        let mut c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mean = c.iter().sum::<f64>() / n as f64;
        c.iter_mut().for_each(|v| *v -= mean);
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        c.iter_mut().for_each(|v| *v /= norm);
        if form(&c) > tol {
            witness = Some(c);
        }
    }

    let negative_type = witness.is_none() && min_eigenvalue >= -1e-8 * scale;
    NegativeTypeReport {
        negative_type,
        min_eigenvalue: if n == 0 { 0.0 } else { min_eigenvalue },
        witness,
    }
}
