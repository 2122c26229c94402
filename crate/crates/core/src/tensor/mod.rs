//! Dense primitives shared by every stage: feature maps, cosine geometry,
//! masked temperature softmax, parameter-free layer normalization and the
//! `.dsdp` tensor file format.
//!
//! All arithmetic is `f64`. Reductions run left to right in index order so
//! results do not depend on how rows are scheduled across threads.

mod io;

pub use io::{
    load_tensor, read_tensor, save_tensor, write_tensor, Tensor, TensorData, DTYPE_F64, DTYPE_U8, MAGIC, VERSION,
};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{dim_mismatch, Error, Result};

/// Norms at or below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

/// An N×D matrix of patch (or instance) features, optionally laid out on an
/// H×W grid in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Array2<f64>,
    grid: Option<(usize, usize)>,
}

impl FeatureMap {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(dim_mismatch(format!("feature map must be non-empty, got {n}x{d}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature entry {pos}")));
        }
        Ok(Self { data: data.as_standard_layout().into_owned(), grid: None })
    }

    pub fn with_grid(data: Array2<f64>, height: usize, width: usize) -> Result<Self> {
        let mut map = Self::new(data)?;
        map.set_grid(height, width)?;
        Ok(map)
    }

    /// Builds a map from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut flat = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(dim_mismatch(format!("row {i} has length {}, expected {d}", r.len())));
            }
            flat.extend_from_slice(r);
        }
        let data = Array2::from_shape_vec((n, d), flat).map_err(|e| dim_mismatch(e.to_string()))?;
        Self::new(data)
    }

    pub fn set_grid(&mut self, height: usize, width: usize) -> Result<()> {
        if height == 0 || width == 0 || height * width != self.n() {
            return Err(dim_mismatch(format!("grid {height}x{width} does not cover {} rows", self.n())));
        }
        self.grid = Some((height, width));
        Ok(())
    }

    /// Number of rows (patches).
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.as_slice()[i * d..(i + 1) * d]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("feature maps are kept in standard layout")
    }
}

/// Symmetric N×N cosine self-similarity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    data: Array2<f64>,
}

impl SimilarityMatrix {
    const TOL: f64 = 1e-12;

    /// Wraps a hand-built matrix after checking symmetry, unit diagonal and range.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, m) = data.dim();
        if n != m || n == 0 {
            return Err(dim_mismatch(format!("similarity matrix must be square, got {n}x{m}")));
        }
        for i in 0..n {
            if (data[[i, i]] - 1.0).abs() > Self::TOL {
                return Err(Error::InvalidConfig(format!("diagonal entry {i} is {}", data[[i, i]])));
            }
            for j in 0..n {
                let v = data[[i, j]];
                if !v.is_finite() || v.abs() > 1.0 + Self::TOL {
                    return Err(Error::InvalidConfig(format!("entry ({i},{j}) = {v} out of range")));
                }
                if (v - data[[j, i]]).abs() > Self::TOL {
                    return Err(Error::InvalidConfig(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Divides every row by its L2 norm.
pub fn l2_normalize_rows(m: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = m.as_standard_layout().into_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let n = row.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
        if n <= NORM_EPS {
            return Err(Error::ZeroRow(i));
        }
        row.mapv_inplace(|v| v / n);
    }
    Ok(out)
}

/// Row-wise cosine similarity of a feature map with itself.
pub fn cosine_self_similarity(f: &FeatureMap) -> Result<SimilarityMatrix> {
    let unit = l2_normalize_rows(f.data())?;
    let unit = unit.as_slice().expect("standard layout");
    let (n, d) = (f.n(), f.dim());
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = &unit[i * d..(i + 1) * d];
            (i..n).map(|j| dot(ri, &unit[j * d..(j + 1) * d])).collect()
        })
        .collect();
    let mut data = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            data[[i, i + off]] = v;
            data[[i + off, i]] = v;
        }
    }
    Ok(SimilarityMatrix { data })
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(dim_mismatch(format!("vector lengths {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na <= NORM_EPS || nb <= NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Cosine distance `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Temperature softmax over the kept entries of each row; dropped entries are 0.
///
/// Each row is shifted by its maximum over kept entries before exponentiation,
/// so temperatures well below 0.1 do not overflow.
pub fn masked_row_softmax(s: &Array2<f64>, keep: &Array2<bool>, tau: f64) -> Result<Array2<f64>> {
    if s.dim() != keep.dim() {
        return Err(dim_mismatch(format!("scores {:?} vs keep mask {:?}", s.dim(), keep.dim())));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidConfig(format!("softmax temperature must be > 0, got {tau}")));
    }
    let (n, m) = s.dim();
    if let Some(i) = (0..n).find(|&i| !keep.row(i).iter().any(|&k| k)) {
        return Err(Error::EmptyRow(i));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (srow, krow) = (s.row(i), keep.row(i));
            let max = (0..m).filter(|&j| krow[j]).fold(f64::NEG_INFINITY, |acc, j| acc.max(srow[j]));
            let mut out: Vec<f64> = (0..m).map(|j| if krow[j] { ((srow[j] - max) / tau).exp() } else { 0.0 }).collect();
            let z = out.iter().fold(0.0, |acc, v| acc + v);
            out.iter_mut().for_each(|v| *v /= z);
            out
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, m), flat).expect("row lengths are uniform"))
}

/// Parameter-free layer normalization: `(v - mean) / std_pop`.
pub fn layer_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let d = v.len();
    if d < 2 {
        return Err(dim_mismatch(format!("layer normalization needs D >= 2, got {d}")));
    }
    let mean = v.iter().fold(0.0, |acc, x| acc + x) / d as f64;
    let var = v.iter().fold(0.0, |acc, x| acc + (x - mean) * (x - mean)) / d as f64;
    let std = var.sqrt();
    if std <= NORM_EPS {
        return Err(Error::ConstantVector);
    }
    Ok(v.iter().map(|x| (x - mean) / std).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalize_known_rows() {
        let out = l2_normalize_rows(&array![[3.0, 4.0]]).unwrap();
        assert!((out[[0, 0]] - 0.6).abs() < 1e-15 && (out[[0, 1]] - 0.8).abs() < 1e-15);
        let out = l2_normalize_rows(&array![[1.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(out, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn normalize_random_rows_matches_explicit_division() {
        let m = array![[0.3, -1.2, 2.5], [4.0, 0.1, -0.7], [-0.05, 0.02, 0.9], [1.0, 1.0, 1.0]];
        let out = l2_normalize_rows(&m).unwrap();
        for i in 0..4 {
            let n = (m[[i, 0]].powi(2) + m[[i, 1]].powi(2) + m[[i, 2]].powi(2)).sqrt();
            for j in 0..3 {
                assert!((out[[i, j]] - m[[i, j]] / n).abs() < 1e-15);
            }
            let on: f64 = out.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((on - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_row_is_rejected() {
        let err = l2_normalize_rows(&array![[1.0, 0.0], [0.0, 1e-13]]).unwrap_err();
        assert!(matches!(err, Error::ZeroRow(1)));
        let f = FeatureMap::new(array![[0.0, 0.0]]).unwrap();
        assert!(matches!(cosine_self_similarity(&f), Err(Error::ZeroRow(0))));
    }

    #[test]
    fn self_similarity_trivial_cases() {
        let f = FeatureMap::new(array![[1.0, 2.0], [1.0, 2.0]]).unwrap();
        let s = cosine_self_similarity(&f).unwrap();
        for v in s.data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let f = FeatureMap::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(cosine_self_similarity(&f).unwrap().data(), &array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn self_similarity_matches_pairwise_loop() {
        let f = FeatureMap::new(array![
            [0.5, -1.0, 0.3, 2.0],
            [1.5, 0.2, -0.3, 0.1],
            [-0.4, 0.9, 1.1, -2.0],
            [0.0, 0.0, 1.0, 0.0],
            [2.2, -0.1, 0.6, 0.6]
        ])
        .unwrap();
        let s = cosine_self_similarity(&f).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (f.row(i), f.row(j));
                let mut ab = 0.0;
                let mut aa = 0.0;
                let mut bb = 0.0;
                for k in 0..4 {
                    ab += a[k] * b[k];
                    aa += a[k] * a[k];
                    bb += b[k] * b[k];
                }
                assert!((s.get(i, j) - ab / (aa.sqrt() * bb.sqrt())).abs() < 1e-12);
            }
        }
        assert!(SimilarityMatrix::new(s.data().clone()).is_ok());
    }

    #[test]
    fn cosine_distance_examples() {
        assert!(cosine_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        let d = cosine_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn softmax_identity_keep_gives_identity() {
        let s = array![[1.0, 0.3, -0.2], [0.3, 1.0, 0.8], [-0.2, 0.8, 1.0]];
        let keep = Array2::from_shape_fn((3, 3), |(i, j)| i == j);
        for tau in [0.07, 1.0, 5.0] {
            assert_eq!(masked_row_softmax(&s, &keep, tau).unwrap(), Array2::eye(3));
        }
    }

    #[test]
    fn softmax_uniform_row() {
        let s = array![[1.0, 1.0, 1.0]];
        let keep = Array2::from_elem((1, 3), true);
        for tau in [0.05, 1.0, 10.0] {
            let out = masked_row_softmax(&s, &keep, tau).unwrap();
            for v in out.row(0) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_low_temperature_two_survivors() {
        // exp(1/0.07) / (exp(1/0.07) + exp(0.8/0.07)) = 1 / (1 + exp(-0.2/0.07)),
        // evaluated in closed form to avoid the overflow-prone direct quotient.
        let s = array![[1.0, 0.8, 0.6]];
        let keep = array![[true, true, false]];
        let out = masked_row_softmax(&s, &keep, 0.07).unwrap();
        let w0 = 1.0 / (1.0 + (-0.2f64 / 0.07).exp());
        assert!((out[[0, 0]] - w0).abs() < 1e-15);
        assert!((out[[0, 1]] - (1.0 - w0)).abs() < 1e-15);
        assert_eq!(out[[0, 2]], 0.0);
        // frozen from a 40-digit evaluation
        assert!((out[[0, 0]] - 0.945_686_733_867_359_4).abs() < 1e-12);
    }

    #[test]
    fn softmax_empty_row_errors() {
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        let keep = array![[true, false], [false, false]];
        assert!(matches!(masked_row_softmax(&s, &keep, 1.0), Err(Error::EmptyRow(1))));
    }

    #[test]
    fn layer_normalize_examples() {
        assert_eq!(layer_normalize(&[1.0, -1.0]).unwrap(), vec![1.0, -1.0]);
        assert!(matches!(layer_normalize(&[5.0, 5.0, 5.0]), Err(Error::ConstantVector)));
        let out = layer_normalize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let std = (1.25f64).sqrt();
        let expect = [-1.5 / std, -0.5 / std, 0.5 / std, 1.5 / std];
        for (o, e) in out.iter().zip(expect) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn feature_map_validation() {
        assert!(FeatureMap::new(Array2::zeros((0, 3))).is_err());
        assert!(FeatureMap::new(array![[1.0, f64::NAN]]).is_err());
        assert!(FeatureMap::with_grid(Array2::ones((6, 2)), 2, 3).is_ok());
        assert!(FeatureMap::with_grid(Array2::ones((6, 2)), 2, 2).is_err());
        assert!(FeatureMap::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
