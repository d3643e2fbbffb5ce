//! Tabular learning of the KSMe through the inner-product parametrization
//! `k_ω(x,y) = ⟨φ_ω(x), φ_ω(y)⟩`.
//!
//! Each step draws pairs of transitions, forms the bootstrapped target
//! `1 − (w/2)|r_x − r_y| + γ⟨φ̄(x'), φ̄(y')⟩` from a periodically refreshed
//! copy `φ̄` of the parameters, and takes a semi-gradient step on the squared
//! error. Learned distances are `‖φ(x) − φ(y)‖²`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{quotient_states, EmbeddingKind, FeatureEmbedding, QuotientMap, DEFAULT_MERGE_TOL};
use crate::error::{Error, Result};
use crate::fixed_point::FixedPointOptions;
use crate::mdp::InducedChain;
use crate::metrics::{kernel_fixed_point, ksme_distance, RewardScale};
use crate::rng::{seeded, SeededRng};

/// Online parameters `φ` and target copy `φ̄`, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedEmbedding {
    pub phi: DMatrix<f64>,
    pub phi_target: DMatrix<f64>,
}

impl LearnedEmbedding {
    pub fn new(phi: DMatrix<f64>) -> Self {
        Self {
            phi_target: phi.clone(),
            phi,
        }
    }

    pub fn m(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn kernel(&self, x: usize, y: usize) -> f64 {
        self.phi.row(x).dot(&self.phi.row(y))
    }

    pub fn target_kernel(&self, x: usize, y: usize) -> f64 {
        self.phi_target.row(x).dot(&self.phi_target.row(y))
    }

    /// `‖φ(x) − φ(y)‖²`.
    pub fn sq_distance(&self, x: usize, y: usize) -> f64 {
        (self.phi.row(x) - self.phi.row(y)).norm_squared()
    }

    pub fn to_features(&self) -> FeatureEmbedding {
        let labels: Vec<usize> = (0..self.n_states()).collect();
        FeatureEmbedding {
            features: self.phi.clone(),
            quotient: QuotientMap::from_labels(&labels),
            kind: EmbeddingKind::Learned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding dimension; `None` uses the number of KSMe classes.
    pub m: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub target_update_period: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Sample pairs from a FIFO buffer of this many transitions instead of
    /// drawing fresh ones every step.
    pub buffer_capacity: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m: None,
            learning_rate: 0.02,
            batch_size: 64,
            target_update_period: 20,
            total_steps: 40_000,
            seed: 0,
            init_scale: 0.1,
            buffer_capacity: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} must be positive")));
        if self.m == Some(0) {
            return bad("m");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and nonnegative".into()));
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.target_update_period == 0 {
            return bad("target_update_period");
        }
        if self.total_steps == 0 {
            return bad("total_steps");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale");
        }
        if self.buffer_capacity == Some(0) {
            return bad("buffer_capacity");
        }
        Ok(())
    }
}

/// A transition `(x, r_x, x')` with the expected reward `r^π_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub x: usize,
    pub r: f64,
    pub x_next: usize,
}

/// Bootstrapped target, using the target parameters only.
pub fn ksme_target(
    sx: &TransitionSample,
    sy: &TransitionSample,
    emb: &LearnedEmbedding,
    gamma: f64,
    scale: RewardScale,
) -> f64 {
    1.0 - 0.5 * scale.weight() * (sx.r - sy.r).abs() + gamma * emb.target_kernel(sx.x_next, sy.x_next)
}

/// Mean squared error between targets and `⟨φ(x), φ(y)⟩`.
pub fn ksme_loss(
    batch: &[(TransitionSample, TransitionSample)],
    emb: &LearnedEmbedding,
    gamma: f64,
    scale: RewardScale,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let total: f64 = batch
        .iter()
        .map(|(sx, sy)| {
            let e = ksme_target(sx, sy, emb, gamma, scale) - emb.kernel(sx.x, sy.x);
            e * e
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Gradient of [`ksme_loss`] with respect to `φ`, the targets held fixed.
pub fn ksme_semi_gradient(
    batch: &[(TransitionSample, TransitionSample)],
    emb: &LearnedEmbedding,
    gamma: f64,
    scale: RewardScale,
) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(emb.n_states(), emb.m());
    let coef = -2.0 / batch.len() as f64;
    for (sx, sy) in batch {
        let e = ksme_target(sx, sy, emb, gamma, scale) - emb.kernel(sx.x, sy.x);
        let row_y = emb.phi.row(sy.x) * (coef * e);
        let row_x = emb.phi.row(sx.x) * (coef * e);
        let mut gx = grad.row_mut(sx.x);
        gx += row_y;
        let mut gy = grad.row_mut(sy.x);
        gy += row_x;
    }
    grad
}

struct Sampler {
    rewards: Vec<f64>,
    rows: Vec<WeightedIndex<f64>>,
}

impl Sampler {
    fn new(chain: &InducedChain) -> Result<Self> {
        let rows = chain
            .p_pi()
            .row_iter()
            .map(|r| {
                WeightedIndex::new(r.iter().copied())
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            rewards: chain.r_pi().iter().copied().collect(),
            rows,
        })
    }

    fn draw(&self, rng: &mut SeededRng) -> TransitionSample {
        let x = rng.random_range(0..self.rewards.len());
        TransitionSample {
            x,
            r: self.rewards[x],
            x_next: self.rows[x].sample(rng),
        }
    }
}

/// Number of classes of the exact KSMe quotient.
pub fn exact_class_count(chain: &InducedChain) -> Result<usize> {
    let scale = RewardScale::canonical(chain);
    let (k, _) = kernel_fixed_point(chain, scale, FixedPointOptions::default())?;
    Ok(quotient_states(&ksme_distance(&k)?, DEFAULT_MERGE_TOL).n_classes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub embedding: LearnedEmbedding,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
}

/// Semi-gradient SGD on the KSMe loss.
pub fn train(chain: &InducedChain, scale: RewardScale, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = chain.n_states();
    let m = match config.m {
        Some(m) => m,
        None => exact_class_count(chain)?,
    };
    let gamma = chain.gamma();
    let mut rng = seeded(config.seed);
    let init: Vec<f64> = (0..n * m)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * config.init_scale)
        .collect();
    let mut emb = LearnedEmbedding::new(DMatrix::from_row_slice(n, m, &init));
    let sampler = Sampler::new(chain)?;
    let mut buffer: VecDeque<TransitionSample> = VecDeque::new();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut losses = Vec::with_capacity(config.total_steps);

    for step in 0..config.total_steps {
        batch.clear();
        match config.buffer_capacity {
            None => {
                for _ in 0..config.batch_size {
                    batch.push((sampler.draw(&mut rng), sampler.draw(&mut rng)));
                }
            }
            Some(capacity) => {
                for _ in 0..2 * config.batch_size {
                    if buffer.len() == capacity {
                        buffer.pop_front();
                    }
                    buffer.push_back(sampler.draw(&mut rng));
                }
                for _ in 0..config.batch_size {
                    let i = rng.random_range(0..buffer.len());
                    let j = rng.random_range(0..buffer.len());
                    batch.push((buffer[i], buffer[j]));
                }
            }
        }
        let loss = ksme_loss(&batch, &emb, gamma, scale)?;
        let grad = ksme_semi_gradient(&batch, &emb, gamma, scale);
        emb.phi -= grad * config.learning_rate;
        if !loss.is_finite() || emb.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        losses.push(loss);
        if (step + 1) % config.target_update_period == 0 {
            emb.phi_target.copy_from(&emb.phi);
        }
    }
    Ok(TrainOutcome {
        embedding: emb,
        losses,
    })
}

/// `(‖φ(x)‖² + ‖φ(y)‖²)/2 + β·θ(φ(x), φ(y))`, with `θ` the angle between the
/// rows (0 if either is numerically zero).
pub fn mico_parametrized_distance(emb: &LearnedEmbedding, x: usize, y: usize, beta: f64) -> f64 {
    let (u, v) = (emb.phi.row(x), emb.phi.row(y));
    let (nu, nv) = (u.norm(), v.norm());
    let theta = if nu < 1e-12 || nv < 1e-12 {
        0.0
    } else {
        let (a, b) = (u / nu, v / nv);
        2.0 * (&a - &b).norm().atan2((&a + &b).norm())
    };
    0.5 * (nu * nu + nv * nv) + beta * theta
}
