use ndarray::Array2;

use super::rng::SplitMix64;
use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

/// Block-structured stand-in for a pair of structural/semantic feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_clusters: usize,
    pub patches_per_cluster: usize,
    pub dim_struct: usize,
    pub dim_sem: usize,
    /// Per-coordinate standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    pub outlier_count: usize,
    pub outlier_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::standard(0)
    }
}

impl SynthConfig {
    /// 4 clusters × 16 patches in 16/32 dimensions, σ = 0.1, no outliers.
    pub fn standard(seed: u64) -> Self {
        Self {
            n_clusters: 4,
            patches_per_cluster: 16,
            dim_struct: 16,
            dim_sem: 32,
            noise_sigma: 0.1,
            outlier_count: 0,
            outlier_scale: 2.0,
            seed,
        }
    }

    /// The standard layout without noise.
    pub fn clean(seed: u64) -> Self {
        Self { noise_sigma: 0.0, ..Self::standard(seed) }
    }

    /// The standard layout with two injected semantic outliers.
    pub fn outliers(seed: u64) -> Self {
        Self { outlier_count: 2, ..Self::standard(seed) }
    }

    pub fn total_patches(&self) -> usize {
        self.n_clusters * self.patches_per_cluster + self.outlier_count
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_clusters == 0 || self.patches_per_cluster == 0 {
            return bad("synth needs at least one cluster with one patch");
        }
        if self.dim_struct == 0 || self.dim_sem == 0 {
            return bad("synth dimensions must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.outlier_scale >= 1.0) || !self.outlier_scale.is_finite() {
            return bad("outlier_scale must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFixture {
    pub f_struct: FeatureMap,
    pub f_sem: FeatureMap,
    /// Cluster of each row; injected outliers carry their host cluster.
    pub labels: Vec<usize>,
    pub is_outlier: Vec<bool>,
}

/// Cluster members come first in cluster order, then the outliers. Outlier
/// `o` keeps a structural row inside cluster `o % n_clusters` while its
/// semantic row is replaced by a direction orthogonal to every cluster's
/// semantic direction (when the dimension allows), scaled by `outlier_scale`.
pub fn synth_block_features(cfg: &SynthConfig) -> Result<SynthFixture> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let dirs: Vec<(Vec<f64>, Vec<f64>)> =
        (0..cfg.n_clusters).map(|_| (rng.unit_vec(cfg.dim_struct), rng.unit_vec(cfg.dim_sem))).collect();

    let n = cfg.total_patches();
    let mut st = Vec::with_capacity(n * cfg.dim_struct);
    let mut se = Vec::with_capacity(n * cfg.dim_sem);
    let mut labels = Vec::with_capacity(n);
    let mut is_outlier = Vec::with_capacity(n);

    let noisy = |rng: &mut SplitMix64, base: &[f64], out: &mut Vec<f64>| {
        for &b in base {
            out.push(if cfg.noise_sigma > 0.0 { b + cfg.noise_sigma * rng.normal() } else { b });
        }
    };

    for (c, (ds, dm)) in dirs.iter().enumerate() {
        for _ in 0..cfg.patches_per_cluster {
            noisy(&mut rng, ds, &mut st);
            noisy(&mut rng, dm, &mut se);
            labels.push(c);
            is_outlier.push(false);
        }
    }
    for o in 0..cfg.outlier_count {
        let host = o % cfg.n_clusters;
        noisy(&mut rng, &dirs[host].0, &mut st);
        let far = far_direction(&mut rng, dirs.iter().map(|d| d.1.as_slice()), cfg.dim_sem);
        se.extend(far.iter().map(|x| x * cfg.outlier_scale));
        labels.push(host);
        is_outlier.push(true);
    }

    let f_struct = FeatureMap::new(Array2::from_shape_vec((n, cfg.dim_struct), st).expect("sized"))?;
    let f_sem = FeatureMap::new(Array2::from_shape_vec((n, cfg.dim_sem), se).expect("sized"))?;
    Ok(SynthFixture { f_struct, f_sem, labels, is_outlier })
}

fn far_direction<'a>(rng: &mut SplitMix64, avoid: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Vec<f64> {
    let orthogonalize = avoid.clone().count() < dim;
    loop {
        let mut v = rng.normal_vec(dim);
        if orthogonalize {
            // Gram-Schmidt against an orthonormal basis of the cluster directions.
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for a in avoid.clone() {
                let mut b = a.to_vec();
                for q in &basis {
                    let p: f64 = b.iter().zip(q).map(|(x, y)| x * y).sum();
                    b.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                }
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nb > 1e-9 {
                    basis.push(b.into_iter().map(|x| x / nb).collect());
                }
            }
            for q in &basis {
                let p: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
