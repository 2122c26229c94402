//! Hand-built inputs shared by tests, the CLI and the acceptance suite.

use ndarray::Array2;

use super::descent::{toy_descent, Descent, DescentConfig};
use super::gradcheck::replace_fc;
use super::rng::SplitMix64;
use crate::error::Result;
use crate::losses::{backbone_loss, BackboneLossConfig};
use crate::relational::{relational_distill_loss, DistillScope, Instance, MuParam};
use crate::tensor::{layer_normalize, FeatureMap};

/// Rows `0..8` form structural group A, rows `9..17` group B, and row 8 is
/// a bridge whose structural row is similar (> 0.8) to both groups while
/// the groups are dissimilar (0.4) to each other. Semantically the bridge
/// belongs with B, so it is an outlier inside every A-row's neighborhood and
/// a regular member inside every B-row's neighborhood.
pub fn context_witness() -> Result<(FeatureMap, FeatureMap)> {
    const GROUP: usize = 8;
    const BRIDGE: usize = GROUP;
    let n = 2 * GROUP + 1;
    let a = [1.0, 0.0, 0.0];
    let b = [0.4, 0.84f64.sqrt(), 0.0];
    let bridge = [a[0] + b[0], a[1] + b[1], 0.0];

    let mut rng = SplitMix64::new(0x5EED);
    let mut st = Array2::zeros((n, 3));
    let mut se = Array2::zeros((n, 4));
    for i in 0..n {
        let (srow, center) = match i {
            i if i < BRIDGE => (a, [1.0, 0.0, 0.0, 0.0]),
            BRIDGE => (bridge, [0.0, 1.0, 0.0, 0.0]),
            _ => (b, [0.0, 1.0, 0.0, 0.0]),
        };
        for c in 0..3 {
            st[[i, c]] = srow[c];
        }
        for c in 0..4 {
            se[[i, c]] = center[c] + rng.uniform(-0.05, 0.05);
        }
    }
    Ok((FeatureMap::new(st)?, FeatureMap::new(se)?))
}

/// Four standardized text embeddings of dimension `dim`.
fn category_embeddings(rng: &mut SplitMix64, categories: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    (0..categories).map(|_| layer_normalize(&rng.normal_vec(dim))).collect()
}

/// `f_c^i = t^i` and `f_g^j = f_v^j = t^j` with standardized `t`, so every
/// pair term vanishes.
pub fn geometry_matched_batch() -> Result<Vec<Instance>> {
    let mut rng = SplitMix64::new(0xC0FFEE);
    let texts = category_embeddings(&mut rng, 4, 6)?;
    (0..8)
        .map(|i| {
            let t = texts[i % 4].clone();
            Instance::new(t.clone(), t.clone(), t.clone(), t, format!("img{}", i / 2), format!("cat{}", i % 4))
        })
        .collect()
}

/// Eight instances over four categories and four images (two per image,
/// different categories). Visual features are positive affine images of the
/// category embedding (`f_g = 2t + 1`, `f_v = t/2 - 3`), so the enhanced
/// target equals `t` for every `μ` and the loss has an exact zero at
/// `f_c ∝ t`. Student features start random.
pub fn relational_descent_fixture(seed: u64) -> Result<Vec<Instance>> {
    let mut rng = SplitMix64::new(seed);
    let texts = category_embeddings(&mut rng, 4, 6)?;
    (0..8)
        .map(|i| {
            let cat = (i + i / 4) % 4;
            let t = texts[cat].clone();
            let f_g = t.iter().map(|x| 2.0 * x + 1.0).collect();
            let f_v = t.iter().map(|x| 0.5 * x - 3.0).collect();
            let f_c = rng.normal_vec(6);
            Instance::new(f_v, f_g, t, f_c, format!("img{}", i / 2), format!("cat{cat}"))
        })
        .collect()
}

/// Teacher and initial student for the backbone descent check, N = 8, D = 4.
/// Teacher rows are scaled to norm 0.5 so the sharp teacher softmax stays
/// reachable by a scaled copy of the teacher.
pub fn backbone_descent_fixture(seed: u64) -> Result<(FeatureMap, FeatureMap)> {
    let mut rng = SplitMix64::new(seed);
    let teacher: Vec<Vec<f64>> = (0..8).map(|_| rng.unit_vec(4).into_iter().map(|x| 0.5 * x).collect()).collect();
    let student: Vec<Vec<f64>> = (0..8).map(|_| rng.normal_vec(4)).collect();
    Ok((FeatureMap::from_rows(&teacher)?, FeatureMap::from_rows(&student)?))
}

/// Four instances in images `a, a, b, b`.
pub fn two_image_batch() -> Result<Vec<Instance>> {
    let mut rng = SplitMix64::new(4);
    let texts = category_embeddings(&mut rng, 2, 4)?;
    ["a", "a", "b", "b"]
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let t = texts[i % 2].clone();
            Instance::new(rng.normal_vec(4), rng.normal_vec(4), t, rng.normal_vec(4), *img, format!("cat{}", i % 2))
        })
        .collect()
}

/// Step size for descent on [`relational_descent_fixture`], found by bisection.
pub const RELATIONAL_DESCENT_LR: f64 = 2.0;
/// Step size for descent on [`backbone_descent_fixture`], found by bisection.
pub const BACKBONE_DESCENT_LR: f64 = 0.5;

/// Descent on the student features of [`relational_descent_fixture`] with `rho` frozen at 0.
pub fn relational_descent(seed: u64, cfg: &DescentConfig) -> Result<Descent> {
    let batch = relational_descent_fixture(seed)?;
    let start: Vec<f64> = batch.iter().flat_map(|b| b.f_c.clone()).collect();
    toy_descent(
        |x| {
            let r = relational_distill_loss(&replace_fc(&batch, x), MuParam::new(0.0), DistillScope::WithinBatch)?;
            Ok((r.value, r.grad_fc.concat()))
        },
        &start,
        cfg,
    )
}

/// Descent on the student of [`backbone_descent_fixture`].
pub fn backbone_descent(seed: u64, loss_cfg: &BackboneLossConfig, cfg: &DescentConfig) -> Result<Descent> {
    let (teacher, student) = backbone_descent_fixture(seed)?;
    let shape = student.data().dim();
    toy_descent(
        |x| {
            let fs = FeatureMap::new(Array2::from_shape_vec(shape, x.to_vec()).expect("sized"))?;
            let r = backbone_loss(&teacher, &fs, loss_cfg)?;
            Ok((r.total.value, r.total.grad_student.iter().copied().collect()))
        },
        student.as_slice(),
        cfg,
    )
}
