use ndarray::Array2;
use proptest::prelude::*;

use prior_distill::fusion::Strategy as FusionStrategy;
use prior_distill::tensor::{layer_normalize, masked_row_softmax, read_tensor, write_tensor, Tensor};
use prior_distill::{
    cosine_distill_loss, fuse_pipeline, harness, relational_distill_loss, scope_pair_count, DistillScope, FeatureMap,
    FusionConfig, Instance, MuParam,
};

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(|(n, d)| {
        prop::collection::vec(-1.0f64..1.0, n * d)
            .prop_filter("rows need some length", move |v| {
                v.chunks(d).all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-3)
            })
            .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

fn instance_batch() -> impl Strategy<Value = Vec<Instance>> {
    (2usize..7, 2usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 4 * d), 0usize..2), n).prop_map(move |rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (v, img))| {
                    let (f_v, rest) = v.split_at(d);
                    let (f_g, rest) = rest.split_at(d);
                    let (t, f_c) = rest.split_at(d);
                    Instance::new(
                        f_v.to_vec(),
                        f_g.to_vec(),
                        t.to_vec(),
                        f_c.to_vec(),
                        format!("i{img}"),
                        format!("c{i}"),
                    )
                    .unwrap()
                })
                .collect()
        })
    })
}

fn usable(batch: &[Instance]) -> bool {
    batch.iter().all(|b| {
        let spread =
            |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        spread(&b.f_g) > 0.1 && spread(&b.f_v) > 0.1 && b.f_c.iter().map(|x| x * x).sum::<f64>() > 0.1
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(s in matrix(1..10, 10..11), tau in 0.05f64..2.0, seed in any::<u64>()) {
        let n = s.nrows();
        let mut rng = harness::SplitMix64::new(seed);
        let keep = Array2::from_shape_fn((n, 10), |(i, j)| i == j || rng.next_f64() < 0.5);
        let p = masked_row_softmax(&s, &keep, tau).unwrap();
        for i in 0..n {
            let sum: f64 = p.row(i).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..10 {
                prop_assert!(p[[i, j]] >= 0.0);
                if !keep[[i, j]] {
                    prop_assert_eq!(p[[i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn softmax_ignores_row_shifts(s in matrix(2..8, 6..7), shift in -5.0f64..5.0) {
        let keep = Array2::from_elem(s.dim(), true);
        let mut shifted = s.clone();
        shifted.row_mut(0).mapv_inplace(|x| x + shift);
        let a = masked_row_softmax(&s, &keep, 0.3).unwrap();
        let b = masked_row_softmax(&shifted, &keep, 0.3).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_is_affine_invariant(v in prop::collection::vec(-3.0f64..3.0, 2..12), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        prop_assume!(v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min) > 1e-2);
        let y = layer_normalize(&v).unwrap();
        let z = layer_normalize(&v.iter().map(|x| a * x + b).collect::<Vec<_>>()).unwrap();
        for (p, q) in y.iter().zip(&z) {
            prop_assert!((p - q).abs() < 1e-9);
        }
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / y.len() as f64;
        prop_assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_loss_ignores_student_scale(t in matrix(2..10, 4..5), s in matrix(2..10, 4..5), c in 0.1f64..10.0) {
        let n = t.nrows().min(s.nrows());
        let t = FeatureMap::new(t.slice(ndarray::s![..n, ..]).to_owned()).unwrap();
        let s0 = FeatureMap::new(s.slice(ndarray::s![..n, ..]).to_owned()).unwrap();
        let s1 = FeatureMap::new(s0.data() * c).unwrap();
        let a = cosine_distill_loss(&t, &s0).unwrap();
        let b = cosine_distill_loss(&t, &s1).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&a.value));
        for (g0, g1) in a.grad_student.iter().zip(b.grad_student.iter()) {
            prop_assert!((g0 - c * g1).abs() < 1e-9);
        }
    }

    #[test]
    fn relational_loss_ignores_student_row_scale(batch in instance_batch(), c in 0.2f64..5.0, rho in -2.0f64..2.0) {
        prop_assume!(usable(&batch));
        let scaled: Vec<Instance> = batch.iter().map(|b| Instance { f_c: b.f_c.iter().map(|x| c * x).collect(), ..b.clone() }).collect();
        for scope in [DistillScope::WithinBatch, DistillScope::WithinImage] {
            let a = relational_distill_loss(&batch, MuParam::new(rho), scope).unwrap();
            let b = relational_distill_loss(&scaled, MuParam::new(rho), scope).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-10);
            prop_assert!((a.grad_rho - b.grad_rho).abs() < 1e-9);
            for (g, inst) in a.grad_fc.iter().zip(&batch) {
                let radial: f64 = g.iter().zip(&inst.f_c).map(|(x, y)| x * y).sum();
                prop_assert!(radial.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn scope_counts_are_ordered(batch in instance_batch()) {
        let point = scope_pair_count(&batch, DistillScope::PointWise);
        let image = scope_pair_count(&batch, DistillScope::WithinImage);
        let full = scope_pair_count(&batch, DistillScope::WithinBatch);
        prop_assert!(full >= image && image >= point);
        let images: std::collections::BTreeSet<_> = batch.iter().map(|b| b.image_id.clone()).collect();
        if images.len() > 1 {
            prop_assert!(full > image);
        }
    }

    #[test]
    fn fused_rows_stay_in_the_convex_hull(st in matrix(3..14, 3..4), seed in any::<u64>()) {
        let n = st.nrows();
        let mut rng = harness::SplitMix64::new(seed);
        let sem = FeatureMap::new(Array2::from_shape_fn((n, 5), |_| rng.normal())).unwrap();
        let out = fuse_pipeline(&FeatureMap::new(st).unwrap(), &sem, &FusionConfig::default()).unwrap();
        for c in 0..5 {
            let col = sem.data().column(c);
            let lo = col.iter().cloned().fold(f64::MAX, f64::min);
            let hi = col.iter().cloned().fold(f64::MIN, f64::max);
            for i in 0..n {
                let v = out.fused.data()[[i, c]];
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        for i in 0..n {
            prop_assert!((out.diagnostics.attention.data().row(i).sum() - 1.0).abs() < 1e-12);
            prop_assert!(out.diagnostics.attention.get(i, i) > 0.0);
        }
    }

    #[test]
    fn fusion_is_permutation_equivariant(st in matrix(4..12, 3..4), seed in any::<u64>()) {
        let n = st.nrows();
        let mut rng = harness::SplitMix64::new(seed);
        let sem = Array2::from_shape_fn((n, 4), |_| rng.normal());
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.range(0, i));
        }
        let permute = |m: &Array2<f64>| Array2::from_shape_fn(m.dim(), |(i, c)| m[[perm[i], c]]);
        let cfg = FusionConfig::default();
        let a = fuse_pipeline(&FeatureMap::new(st.clone()).unwrap(), &FeatureMap::new(sem.clone()).unwrap(), &cfg).unwrap();
        let b = fuse_pipeline(&FeatureMap::new(permute(&st)).unwrap(), &FeatureMap::new(permute(&sem)).unwrap(), &cfg).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            for c in 0..4 {
                prop_assert!((b.fused.data()[[i, c]] - a.fused.data()[[src, c]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tensor_files_round_trip(m in matrix(1..6, 1..6)) {
        let t = Tensor::from_matrix(&m);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let back = read_tensor(buf.as_slice()).unwrap().to_matrix().unwrap();
        prop_assert!(m.iter().zip(back.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn no_filter_and_clean_adaptive_runs_agree() {
    let fx = harness::synth_block_features(&harness::SynthConfig::clean(2)).unwrap();
    let a = fuse_pipeline(&fx.f_struct, &fx.f_sem, &FusionConfig::default()).unwrap();
    let b = fuse_pipeline(
        &fx.f_struct,
        &fx.f_sem,
        &FusionConfig { strategy: FusionStrategy::NoFilter, ..Default::default() },
    )
    .unwrap();
    assert_eq!(a.diagnostics.mask.count(), 0);
    assert_eq!(a.fused, b.fused);
}
