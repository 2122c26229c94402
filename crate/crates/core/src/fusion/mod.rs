//! Teacher feature fusion.
//!
//! Structural features define a cosine self-similarity `S`. For every patch
//! `i`, the patches with `S[i][j] > gamma_lof` form its semantic
//! neighborhood; LOF over the semantic features of that neighborhood marks
//! context-dependent outliers. Surviving similarities above `gamma` are
//! turned into row-stochastic attention, which then averages the semantic
//! features.

mod lof;

pub use lof::lof_scores;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{dim_mismatch, Error, Result};
use crate::tensor::{cosine_self_similarity, masked_row_softmax, FeatureMap, SimilarityMatrix};

/// Which outlier filter runs before attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// LOF inside each patch's own semantic neighborhood.
    #[default]
    SemanticAdaptive,
    /// A single LOF pass over all patches, applied to every row.
    GlobalLof,
    /// No outlier filtering.
    NoFilter,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SemanticAdaptive => "saod",
            Strategy::GlobalLof => "global-lof",
            Strategy::NoFilter => "none",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saod" | "semantic-adaptive" => Ok(Strategy::SemanticAdaptive),
            "global-lof" | "global" => Ok(Strategy::GlobalLof),
            "none" | "no-filter" => Ok(Strategy::NoFilter),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Attention similarity threshold.
    pub gamma: f64,
    /// Neighborhood similarity threshold.
    pub gamma_lof: f64,
    /// LOF score above which a patch is an outlier.
    pub tau_lof: f64,
    /// Attention softmax temperature.
    pub tau: f64,
    pub k_lof: usize,
    pub strategy: Strategy,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { gamma: 0.5, gamma_lof: 0.8, tau_lof: 1.2, tau: 0.07, k_lof: 5, strategy: Strategy::SemanticAdaptive }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(-1.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [-1, 1], got {}", self.gamma));
        }
        if !(-1.0..=1.0).contains(&self.gamma_lof) {
            return bad(format!("gamma_lof must lie in [-1, 1], got {}", self.gamma_lof));
        }
        if !(self.tau_lof >= 1.0) {
            return bad(format!("tau_lof must be >= 1, got {}", self.tau_lof));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if self.k_lof == 0 {
            return bad("k_lof must be >= 1".into());
        }
        Ok(())
    }
}

/// `M[i][j] = true` marks patch `j` as an outlier relative to patch `i`'s
/// semantic neighborhood. The diagonal is always false.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierMask {
    data: Array2<bool>,
}

impl OutlierMask {
    pub fn zeros(n: usize) -> Self {
        Self { data: Array2::from_elem((n, n), false) }
    }

    pub fn from_array(mut data: Array2<bool>) -> Result<Self> {
        let (n, m) = data.dim();
        if n != m {
            return Err(dim_mismatch(format!("outlier mask must be square, got {n}x{m}")));
        }
        for i in 0..n {
            data[[i, i]] = false;
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[[i, j]]
    }

    pub fn data(&self) -> &Array2<bool> {
        &self.data
    }

    /// Total number of set entries.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// `true` for every patch flagged by at least one context.
    pub fn flagged_patches(&self) -> Vec<bool> {
        (0..self.n()).map(|j| self.data.column(j).iter().any(|&b| b)).collect()
    }
}

/// Row-stochastic calibration weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    data: Array2<f64>,
}

impl AttentionMatrix {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    /// Non-zero entries per row.
    pub fn survivors(&self) -> Vec<usize> {
        self.data.rows().into_iter().map(|r| r.iter().filter(|&&v| v > 0.0).count()).collect()
    }
}

/// `{ j : S[i][j] > gamma_lof }` for every row, in ascending order. Row `i`
/// always contains `i`.
pub fn semantic_neighborhoods(s: &SimilarityMatrix, gamma_lof: f64) -> Vec<Vec<usize>> {
    let n = s.n();
    (0..n).map(|i| (0..n).filter(|&j| j == i || s.get(i, j) > gamma_lof).collect()).collect()
}

pub fn context_outlier_mask(s: &SimilarityMatrix, f_sem: &FeatureMap, cfg: &FusionConfig) -> Result<OutlierMask> {
    let n = s.n();
    if f_sem.n() != n {
        return Err(dim_mismatch(format!("similarity has {n} patches, semantic features {}", f_sem.n())));
    }
    cfg.validate()?;
    match cfg.strategy {
        Strategy::NoFilter => Ok(OutlierMask::zeros(n)),
        Strategy::GlobalLof => global_lof_mask(f_sem, cfg),
        Strategy::SemanticAdaptive => semantic_adaptive_mask(s, f_sem, cfg),
    }
}

fn global_lof_mask(f_sem: &FeatureMap, cfg: &FusionConfig) -> Result<OutlierMask> {
    let n = f_sem.n();
    let mut mask = OutlierMask::zeros(n);
    if n < 3 {
        return Ok(mask);
    }
    let all: Vec<usize> = (0..n).collect();
    let scores = lof_scores(f_sem, &all, cfg.k_lof)?;
    for (j, &score) in scores.iter().enumerate() {
        if score > cfg.tau_lof {
            for i in (0..n).filter(|&i| i != j) {
                mask.data[[i, j]] = true;
            }
        }
    }
    Ok(mask)
}

fn semantic_adaptive_mask(s: &SimilarityMatrix, f_sem: &FeatureMap, cfg: &FusionConfig) -> Result<OutlierMask> {
    let n = s.n();
    let neighborhoods = semantic_neighborhoods(s, cfg.gamma_lof);

    let all: Vec<usize> = (0..n).collect();
    let unit = lof::unit_rows(f_sem, &all)?;
    let dist_rows: Vec<Vec<f64>> =
        (0..n).into_par_iter().map(|a| (0..n).map(|b| lof::euclidean(&unit[a], &unit[b])).collect()).collect();

    // Many rows share a neighborhood; score each distinct one once.
    let mut distinct: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    for (i, nb) in neighborhoods.iter().enumerate() {
        if nb.len() >= 3 {
            distinct.entry(nb.as_slice()).or_default().push(i);
        }
    }
    let groups: Vec<(&[usize], Vec<usize>)> = distinct.into_iter().collect();
    let scored: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|(nb, _)| lof::lof_from_distances(nb.len(), cfg.k_lof, |a, b| dist_rows[nb[a]][nb[b]]))
        .collect();

    let mut mask = OutlierMask::zeros(n);
    for ((nb, rows), scores) in groups.iter().zip(&scored) {
        for &i in rows {
            for (&j, &score) in nb.iter().zip(scores) {
                if j != i && score > cfg.tau_lof {
                    mask.data[[i, j]] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// Softmax over entries with `S[i][j] > gamma` that are not outliers; the
/// diagonal always survives.
pub fn calibrated_attention(s: &SimilarityMatrix, m: &OutlierMask, gamma: f64, tau: f64) -> Result<AttentionMatrix> {
    let n = s.n();
    if m.n() != n {
        return Err(dim_mismatch(format!("similarity has {n} patches, mask {}", m.n())));
    }
    let keep = Array2::from_shape_fn((n, n), |(i, j)| i == j || (s.get(i, j) > gamma && !m.get(i, j)));
    let data = masked_row_softmax(s.data(), &keep, tau)?;
    Ok(AttentionMatrix { data })
}

/// `A · F_sem`: each output row is a convex combination of semantic rows.
pub fn fuse_teacher(a: &AttentionMatrix, f_sem: &FeatureMap) -> Result<FeatureMap> {
    let (n, d) = (f_sem.n(), f_sem.dim());
    if a.n() != n {
        return Err(dim_mismatch(format!("attention is {0}x{0}, semantic features have {n} rows", a.n())));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; d];
            for j in 0..n {
                let w = a.get(i, j);
                if w != 0.0 {
                    for (o, v) in acc.iter_mut().zip(f_sem.row(j)) {
                        *o += w * v;
                    }
                }
            }
            acc
        })
        .collect();
    let data = Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("uniform rows");
    let mut out = FeatureMap::new(data)?;
    if let Some((h, w)) = f_sem.grid() {
        out.set_grid(h, w)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FusionDiagnostics {
    pub similarity: SimilarityMatrix,
    pub mask: OutlierMask,
    pub attention: AttentionMatrix,
    pub survivors: Vec<usize>,
    pub outliers_flagged: usize,
}

impl FusionDiagnostics {
    /// Flat `key = value` summary.
    pub fn report(&self) -> String {
        let n = self.survivors.len();
        let min = self.survivors.iter().copied().min().unwrap_or(0);
        let max = self.survivors.iter().copied().max().unwrap_or(0);
        let mean = self.survivors.iter().sum::<usize>() as f64 / n.max(1) as f64;
        let patches = self.mask.flagged_patches().iter().filter(|&&b| b).count();
        format!(
            "patches = {n}\noutliers_flagged = {}\nflagged_patches = {patches}\nsurvivors_min = {min}\nsurvivors_max = {max}\nsurvivors_mean = {mean}\n",
            self.outliers_flagged
        )
    }
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub fused: FeatureMap,
    pub diagnostics: FusionDiagnostics,
}

/// Similarity from structure, outlier mask from semantics, calibrated
/// attention, then aggregation.
pub fn fuse_pipeline(f_struct: &FeatureMap, f_sem: &FeatureMap, cfg: &FusionConfig) -> Result<FusionOutput> {
    if f_struct.n() != f_sem.n() {
        return Err(dim_mismatch(format!(
            "structural features have {} patches, semantic features {}",
            f_struct.n(),
            f_sem.n()
        )));
    }
    cfg.validate()?;
    let similarity = cosine_self_similarity(f_struct)?;
    let mask = context_outlier_mask(&similarity, f_sem, cfg)?;
    let attention = calibrated_attention(&similarity, &mask, cfg.gamma, cfg.tau)?;
    let fused = fuse_teacher(&attention, f_sem)?;
    let survivors = attention.survivors();
    let outliers_flagged = mask.count();
    Ok(FusionOutput {
        fused,
        diagnostics: FusionDiagnostics { similarity, mask, attention, survivors, outliers_flagged },
    })
}
