use ndarray::Array2;

use prior_distill::harness::{brute_force_lof, run_gradcheck, GradTarget, SplitMix64};
use prior_distill::{lof_scores, FeatureMap};

/// Random set of up to 64 rows; some seeds copy earlier rows to create ties and duplicates.
fn random_set(seed: u64) -> (FeatureMap, Vec<usize>, usize) {
    let mut rng = SplitMix64::new(seed);
    let n = rng.range(2, 64);
    let d = rng.range(2, 8);
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(d)).collect();
    if seed.is_multiple_of(3) {
        for i in 1..n {
            if rng.next_f64() < 0.3 {
                rows[i] = rows[rng.range(0, i - 1)].clone();
            }
        }
    }
    let fm = FeatureMap::from_rows(&rows).unwrap();
    let indices: Vec<usize> = (0..n).filter(|_| rng.next_f64() < 0.8).collect();
    let indices = if indices.len() < 2 { (0..n).collect() } else { indices };
    (fm, indices, rng.range(1, 8))
}

#[test]
fn lof_matches_brute_force_on_random_sets() {
    for seed in 0..100 {
        let (fm, idx, k) = random_set(seed);
        let fast = lof_scores(&fm, &idx, k).unwrap();
        let slow = brute_force_lof(&fm, &idx, k).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            let same = (a.is_infinite() && a == b) || (a - b).abs() <= 1e-12;
            assert!(same, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn lof_matches_brute_force_on_tight_cluster_with_outlier() {
    let mut rows: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, 0.01 * i as f64, 0.0]).collect();
    rows.push(vec![0.0, 0.0, 1.0]);
    let fm = FeatureMap::new(Array2::from_shape_vec((6, 3), rows.concat()).unwrap()).unwrap();
    let idx: Vec<usize> = (0..6).collect();
    let fast = lof_scores(&fm, &idx, 3).unwrap();
    assert_eq!(fast, brute_force_lof(&fm, &idx, 3).unwrap());
    assert!(fast[5] > 1.2);
}

#[test]
fn gradients_match_finite_differences_over_fifty_seeds() {
    for target in [GradTarget::Cosine, GradTarget::Attention, GradTarget::PointKd, GradTarget::Relational] {
        for seed in 0..50 {
            let r = run_gradcheck(target, seed, 0.0).unwrap();
            assert!(r.passed, "{target} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn rho_gradient_is_nonzero_on_generic_batches() {
    use prior_distill::harness::gradcheck::random_batch;
    use prior_distill::{relational_distill_loss, DistillScope, MuParam};
    for seed in 0..20 {
        let mut rng = SplitMix64::new(seed);
        let batch = random_batch(&mut rng, 6, 5).unwrap();
        let r = relational_distill_loss(&batch, MuParam::new(0.25), DistillScope::WithinBatch).unwrap();
        assert!(r.grad_rho.abs() > 1e-8, "seed {seed}: {}", r.grad_rho);
    }
}
