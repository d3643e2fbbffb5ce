use ksme_core::embedding::*;
use ksme_core::fixtures;
use ksme_core::mdp::{induce_chain, InducedChain, Mdp, Policy};
use ksme_core::metrics::{
    kernel_fixed_point, ksme_distance, mico_fixed_point, reduce, KernelMatrix, MicoMethod, RewardScale,
};
use ksme_core::FixedPointOptions;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn opts() -> FixedPointOptions {
    FixedPointOptions::with_tol(1e-10)
}

/// A Garnet with `dupes` extra copies of state 0, so the quotient is nontrivial.
fn chain_with_duplicates(n: usize, a: usize, dupes: usize, seed: u64) -> InducedChain {
    let base = fixtures::garnet(n, a, 3.min(n), 1.0, 0.9, seed);
    let total = n + dupes;
    let mut p = vec![0.0; total * a * total];
    let mut r = vec![0.0; total * a];
    for x in 0..total {
        let src = if x < n { x } else { 0 };
        for act in 0..a {
            r[x * a + act] = base.reward(src, act);
            for (y, prob) in base.transition(src, act).iter().enumerate() {
                p[(x * a + act) * total + y] = *prob;
            }
        }
    }
    let mdp = Mdp::new(total, a, p, r, 0.9).unwrap();
    induce_chain(&mdp, &Policy::uniform(total, a)).unwrap()
}

fn solve(chain: &InducedChain) -> (KernelMatrix, ksme_core::metrics::DistanceMatrix) {
    let scale = RewardScale::canonical(chain);
    let (k, _) = kernel_fixed_point(chain, scale, opts()).unwrap();
    let d = ksme_distance(&k).unwrap();
    (k, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_features_reproduce_kernel_and_distance(
        n in 3usize..=10, a in 1usize..=3, dupes in 0usize..=3, seed in any::<u64>()
    ) {
        let chain = chain_with_duplicates(n, a, dupes, seed);
        let (k, d) = solve(&chain);
        let q = quotient_states(&d, DEFAULT_MERGE_TOL);
        prop_assert!(q.n_classes() <= n);
        for extra in n..n + dupes {
            prop_assert_eq!(q.class_of(extra), q.class_of(0));
        }
        let emb = spectral_embed(&k, &q).unwrap();
        prop_assert!(emb.dim() <= q.n_classes());
        let reps = q.representatives();
        let gram = &emb.features * emb.features.transpose();
        for (i, &x) in reps.iter().enumerate() {
            for (j, &y) in reps.iter().enumerate() {
                prop_assert!((gram[(i, j)] - k.values()[(x, y)]).abs() <= 1e-9);
            }
        }
        let (u, _) = mico_fixed_point(&chain, RewardScale::canonical(&chain), MicoMethod::DirectSolve).unwrap();
        let pi_u = reduce(&u).unwrap();
        let total = chain.n_states();
        for x in 0..total {
            for y in 0..total {
                prop_assert!((emb.sq_distance(x, y) - pi_u.get(x, y)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn identity_projection_is_exact(n in 3usize..=8, seed in any::<u64>()) {
        let chain = chain_with_duplicates(n, 2, 0, seed);
        let (k, d) = solve(&chain);
        let emb = spectral_embed(&k, &quotient_states(&d, DEFAULT_MERGE_TOL)).unwrap();
        let same = project_with(&emb, &DMatrix::identity(emb.dim(), emb.dim())).unwrap();
        let report = distortion_check(&d, &same, 1e-9, DEFAULT_MERGE_TOL).unwrap();
        prop_assert!(report.pass && report.max_over <= 1e-9 && report.max_under <= 1e-9);
    }

    #[test]
    fn projection_is_deterministic_and_scaled(m in 1usize..40, dim in 1usize..10, seed in any::<u64>()) {
        let g = gaussian_projection(m, dim, seed);
        prop_assert_eq!(&g, &gaussian_projection(m, dim, seed));
        prop_assert_eq!(g.shape(), (m, dim));
    }

    #[test]
    fn projection_is_linear(
        a in prop::collection::vec(-5.0..5.0f64, 12),
        b in prop::collection::vec(-5.0..5.0f64, 12),
        seed in any::<u64>(),
    ) {
        let labels = [0, 1, 2];
        let q = QuotientMap::from_labels(&labels);
        let emb = |v: &[f64]| FeatureEmbedding {
            features: DMatrix::from_row_slice(3, 4, v),
            quotient: q.clone(),
            kind: EmbeddingKind::SpectralExact,
        };
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let pa = jl_project(&emb(&a), 7, seed).unwrap().features;
        let pb = jl_project(&emb(&b), 7, seed).unwrap().features;
        let ps = jl_project(&emb(&sum), 7, seed).unwrap().features;
        prop_assert!((ps - (pa + pb)).amax() <= 1e-12);
    }
}

#[test]
fn projection_entries_have_variance_one_over_m() {
    let m = 200;
    let g = gaussian_projection(m, 250, 3);
    let mean = g.mean();
    let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (g.len() as f64);
    // 50 000 draws: the sample variance is within a few percent.
    assert!((var * m as f64 - 1.0).abs() < 0.03, "{}", var * m as f64);
    assert!(mean.abs() < 0.1 / (m as f64).sqrt());
}

#[test]
fn jl_dimension_formula() {
    assert_eq!(jl_dimension(16, 0.5).unwrap(), 89);
    assert_eq!(jl_dimension(1, 0.5).unwrap(), 1);
    assert_eq!(jl_dimension(100, 0.1).unwrap(), 3685);
    assert!(jl_dimension(5, 1.0).is_err());
    assert!(jl_dimension(0, 0.5).is_err());
}

#[test]
fn jl_preserves_distances_on_average() {
    let chain = chain_with_duplicates(16, 2, 0, 5);
    let (k, d) = solve(&chain);
    let emb = spectral_embed(&k, &quotient_states(&d, DEFAULT_MERGE_TOL)).unwrap();
    let m = jl_dimension(emb.quotient.n_classes(), 0.5).unwrap();
    let mut passes = 0;
    for seed in 0..40 {
        let projected = jl_project(&emb, m, seed).unwrap();
        if distortion_check(&d, &projected, 0.5, DEFAULT_MERGE_TOL).unwrap().pass {
            passes += 1;
        }
    }
    // Per-draw success is about 0.88 for 16 points; 30 of 40 is far below the mean.
    assert!(passes >= 30, "{passes}");
}
