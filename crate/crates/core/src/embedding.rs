//! Euclidean realizations of the KSMe: exact spectral features on the state
//! quotient, and Gaussian random projections of them.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DistanceMatrix, KernelMatrix};
use crate::rng::seeded;

/// States closer than this (in `d_ks`) are merged by default.
pub const DEFAULT_MERGE_TOL: f64 = 1e-8;

/// Partition of the states into classes of zero distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotientMap {
    class_of: Vec<usize>,
    n_classes: usize,
}

impl QuotientMap {
    /// Classes are numbered in order of their smallest member.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut renumber = std::collections::HashMap::new();
        let class_of: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = renumber.len();
                *renumber.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            n_classes: renumber.len(),
            class_of,
        }
    }

    pub fn class_of(&self, x: usize) -> usize {
        self.class_of[x]
    }

    pub fn classes(&self) -> &[usize] {
        &self.class_of
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_states(&self) -> usize {
        self.class_of.len()
    }

    /// Smallest member of each class.
    pub fn representatives(&self) -> Vec<usize> {
        let mut reps = vec![usize::MAX; self.n_classes];
        for (x, &c) in self.class_of.iter().enumerate() {
            reps[c] = reps[c].min(x);
        }
        reps
    }

    pub fn members(&self, class: usize) -> Vec<usize> {
        (0..self.class_of.len()).filter(|&x| self.class_of[x] == class).collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the graph joining pairs with `d(x,y) ≤ merge_tol`.
pub fn quotient_states(d: &DistanceMatrix, merge_tol: f64) -> QuotientMap {
    let n = d.n_states();
    let mut parent: Vec<usize> = (0..n).collect();
    for x in 0..n {
        for y in x + 1..n {
            if d.get(x, y) <= merge_tol {
                let (a, b) = (find(&mut parent, x), find(&mut parent, y));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|x| find(&mut parent, x)).collect();
    QuotientMap::from_labels(&labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    SpectralExact,
    JlProjected,
    Learned,
}

/// One feature row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEmbedding {
    pub features: DMatrix<f64>,
    pub quotient: QuotientMap,
    pub kind: EmbeddingKind,
}

impl FeatureEmbedding {
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// `‖f_{[x]} − f_{[y]}‖²`.
    pub fn sq_distance(&self, x: usize, y: usize) -> f64 {
        let (a, b) = (self.quotient.class_of(x), self.quotient.class_of(y));
        (self.features.row(a) - self.features.row(b)).norm_squared()
    }

    /// Squared distances between all class rows.
    pub fn class_sq_distances(&self) -> DMatrix<f64> {
        let c = self.features.nrows();
        DMatrix::from_fn(c, c, |i, j| (self.features.row(i) - self.features.row(j)).norm_squared())
    }
}

/// Features `Λ^{1/2}Uᵀ` of the kernel restricted to class representatives.
pub fn spectral_embed(k: &KernelMatrix, quotient: &QuotientMap) -> Result<FeatureEmbedding> {
    spectral_embed_gram(k.values(), quotient)
}

/// [`spectral_embed`] on a bare symmetric matrix.
pub fn spectral_embed_gram(k: &DMatrix<f64>, quotient: &QuotientMap) -> Result<FeatureEmbedding> {
    if k.nrows() != quotient.n_states() || k.ncols() != quotient.n_states() {
        return Err(Error::Dimension(format!(
            "{}x{} kernel for {} states",
            k.nrows(),
            k.ncols(),
            quotient.n_states()
        )));
    }
    let reps = quotient.representatives();
    let c = reps.len();
    let restricted = DMatrix::from_fn(c, c, |i, j| k[(reps[i], reps[j])]);
    let eig = SymmetricEigen::new(restricted);
    let lambda_max = eig.eigenvalues.max().max(0.0);
    let lambda_min = eig.eigenvalues.min();
    if lambda_min < -1e-6 * lambda_max {
        return Err(Error::NotPsd {
            min_eigenvalue: lambda_min,
        });
    }
    let mut kept: Vec<usize> = (0..c)
        .filter(|&j| lambda_max > 0.0 && eig.eigenvalues[j] > 1e-10 * lambda_max)
        .collect();
    kept.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let features = if kept.is_empty() {
        DMatrix::zeros(c, 1)
    } else {
        DMatrix::from_fn(c, kept.len(), |i, j| {
            let col = kept[j];
            eig.eigenvalues[col].sqrt() * eig.eigenvectors[(i, col)]
        })
    };
    Ok(FeatureEmbedding {
        features,
        quotient: quotient.clone(),
        kind: EmbeddingKind::SpectralExact,
    })
}

/// `⌈8 ln(n_classes)/ε²⌉`, at least 1.
pub fn jl_dimension(n_classes: usize, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if n_classes == 0 {
        return Err(Error::Parameter("no classes to embed".into()));
    }
    let m = (8.0 * (n_classes as f64).ln() / (epsilon * epsilon)).ceil();
    Ok((m as usize).max(1))
}

/// `m × dim` matrix of standard normals, drawn row by row, scaled by `1/√m`.
pub fn gaussian_projection(m: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let draws: Vec<f64> = (0..m * dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    DMatrix::from_row_slice(m, dim, &draws)
}

/// Map every feature row `f` to `G f`.
pub fn project_with(emb: &FeatureEmbedding, g: &DMatrix<f64>) -> Result<FeatureEmbedding> {
    if g.ncols() != emb.dim() {
        return Err(Error::Dimension(format!(
            "{}x{} projection for {}-dimensional features",
            g.nrows(),
            g.ncols(),
            emb.dim()
        )));
    }
    Ok(FeatureEmbedding {
        features: &emb.features * g.transpose(),
        quotient: emb.quotient.clone(),
        kind: EmbeddingKind::JlProjected,
    })
}

/// Johnson–Lindenstrauss projection to `m` dimensions.
pub fn jl_project(emb: &FeatureEmbedding, m: usize, seed: u64) -> Result<FeatureEmbedding> {
    if m == 0 {
        return Err(Error::Parameter("projection dimension must be positive".into()));
    }
    project_with(emb, &gaussian_projection(m, emb.dim(), seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub epsilon_requested: f64,
    pub m: usize,
    /// `max ‖φ(x) − φ(y)‖²/d_ks(x,y) − 1`.
    pub max_over: f64,
    /// `max 1 − ‖φ(x) − φ(y)‖²/d_ks(x,y)`.
    pub max_under: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Multiplicative distortion over pairs of class representatives with
/// `d_ks > merge_tol`.
pub fn distortion_check(
    original: &DistanceMatrix,
    projected: &FeatureEmbedding,
    epsilon: f64,
    merge_tol: f64,
) -> Result<DistortionReport> {
    let q = &projected.quotient;
    if original.n_states() != q.n_states() {
        return Err(Error::Dimension(format!(
            "{} states in the distance matrix, {} in the embedding",
            original.n_states(),
            q.n_states()
        )));
    }
    let reps = q.representatives();
    let sq = projected.class_sq_distances();
    let (mut max_over, mut max_under, mut pairs) = (0.0_f64, 0.0_f64, 0);
    for i in 0..reps.len() {
        for j in i + 1..reps.len() {
            let d = original.get(reps[i], reps[j]);
            if d <= merge_tol {
                continue;
            }
            let ratio = sq[(i, j)] / d;
            max_over = max_over.max(ratio - 1.0);
            max_under = max_under.max(1.0 - ratio);
            pairs += 1;
        }
    }
    Ok(DistortionReport {
        epsilon_requested: epsilon,
        m: projected.dim(),
        max_over,
        max_under,
        pairs,
        pass: max_over <= epsilon && max_under <= epsilon,
    })
}
