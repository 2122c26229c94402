//! Local Outlier Factor over a subset of feature rows.
//!
//! Distances are Euclidean between L2-normalized rows. The k-neighborhood of
//! a point includes every point tied with its k-th nearest neighbor.

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, NORM_EPS};

/// Unit-normalized copies of the selected rows, in `indices` order.
pub(crate) fn unit_rows(features: &FeatureMap, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
    indices
        .iter()
        .map(|&i| {
            let row = features.row(i);
            let n = row.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
            if n <= NORM_EPS {
                return Err(Error::ZeroRow(i));
            }
            Ok(row.iter().map(|v| v / n).collect())
        })
        .collect()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y)).sqrt()
}

/// LOF scores of `features` rows listed in `indices`, one per index.
///
/// Uses `k' = min(k, |indices| - 1)` neighbors. Sets of fewer than 3 points
/// and sets whose points all coincide score 1 everywhere.
pub fn lof_scores(features: &FeatureMap, indices: &[usize], k: usize) -> Result<Vec<f64>> {
    if indices.len() < 2 {
        return Err(Error::TooFewPoints(indices.len()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("LOF neighbor count must be >= 1".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= features.n()) {
        return Err(crate::error::dim_mismatch(format!("index {bad} out of range for {} rows", features.n())));
    }
    let unit = unit_rows(features, indices)?;
    let m = unit.len();
    let mut dist = vec![0.0; m * m];
    for a in 0..m {
        for b in (a + 1)..m {
            let d = euclidean(&unit[a], &unit[b]);
            dist[a * m + b] = d;
            dist[b * m + a] = d;
        }
    }
    Ok(lof_from_distances(m, k, |a, b| dist[a * m + b]))
}

/// LOF core over `m` points given a symmetric distance lookup.
pub(crate) fn lof_from_distances(m: usize, k: usize, dist: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    if m < 3 {
        return vec![1.0; m];
    }
    let all_coincident = (0..m).all(|a| ((a + 1)..m).all(|b| dist(a, b) <= NORM_EPS));
    if all_coincident {
        return vec![1.0; m];
    }
    let k = k.min(m - 1);

    let mut k_distance = Vec::with_capacity(m);
    let mut neighbors: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
    for p in 0..m {
        let mut others: Vec<(usize, f64)> = (0..m).filter(|&o| o != p).map(|o| (o, dist(p, o))).collect();
        let order = |x: &(usize, f64), y: &(usize, f64)| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0));
        let kd = others.select_nth_unstable_by(k - 1, order).1 .1;
        others.retain(|(_, d)| *d <= kd);
        others.sort_by(order);
        k_distance.push(kd);
        neighbors.push(others);
    }

    let lrd: Vec<f64> = neighbors
        .iter()
        .map(|nb| {
            let total = nb.iter().fold(0.0, |acc, &(o, d)| acc + k_distance[o].max(d));
            let mean = total / nb.len() as f64;
            if mean <= NORM_EPS {
                f64::INFINITY
            } else {
                1.0 / mean
            }
        })
        .collect();

    neighbors
        .iter()
        .enumerate()
        .map(|(p, nb)| {
            if lrd[p].is_infinite() {
                return 1.0;
            }
            let total = nb.iter().fold(0.0, |acc, &(o, _)| acc + lrd[o] / lrd[p]);
            total / nb.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(rows: &[&[f64]]) -> FeatureMap {
        FeatureMap::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_rows_score_one() {
        let f = map(&[&[1.0, 2.0], &[1.0, 2.0], &[2.0, 4.0], &[0.5, 1.0]]);
        assert_eq!(lof_scores(&f, &[0, 1, 2, 3], 5).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn small_sets_score_one() {
        let f = map(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(lof_scores(&f, &[0, 1], 5).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(lof_scores(&f, &[0], 5), Err(Error::TooFewPoints(1))));
    }

    #[test]
    fn far_point_scores_high() {
        let f = map(&[
            &[1.0, 0.02, 0.0],
            &[1.0, -0.03, 0.01],
            &[1.0, 0.0, 0.04],
            &[1.0, 0.05, -0.02],
            &[1.0, -0.01, -0.05],
            &[0.05, 1.0, 0.0],
        ]);
        let scores = lof_scores(&f, &[0, 1, 2, 3, 4, 5], 3).unwrap();
        assert!(scores[5] > 1.2, "{scores:?}");
        assert!(scores[..5].iter().all(|&s| s < 1.2), "{scores:?}");
    }

    #[test]
    fn k_equal_to_set_size_minus_one_hides_a_single_outlier() {
        // Every point's k-distance is its distance to the outlier, so the
        // density ratio collapses towards 1.
        let f = map(&[
            &[1.0, 0.02, 0.0],
            &[1.0, -0.03, 0.01],
            &[1.0, 0.0, 0.04],
            &[1.0, 0.05, -0.02],
            &[1.0, -0.01, -0.05],
            &[0.05, 1.0, 0.0],
        ]);
        let scores = lof_scores(&f, &[0, 1, 2, 3, 4, 5], 5).unwrap();
        assert!(scores[5] < 1.2, "{scores:?}");
    }

    #[test]
    fn partial_duplicates_give_infinite_ratio_for_neighbors() {
        let f = map(&[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[0.9, 0.1]]);
        let scores = lof_scores(&f, &[0, 1, 2, 3], 2).unwrap();
        assert_eq!(&scores[..3], &[1.0, 1.0, 1.0]);
        assert!(scores[3].is_infinite());
    }
}
