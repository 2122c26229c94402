use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{dim_mismatch, Result};
use crate::tensor::{cosine_distance, FeatureMap};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStat {
    pub label: usize,
    pub size: usize,
    /// Mean pairwise cosine distance of the raw semantic rows.
    pub before: f64,
    /// The same statistic on the fused rows.
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub clusters: Vec<ClusterStat>,
    pub before: f64,
    pub after: f64,
    /// `after <= before`; ties count as no regression.
    pub improved: bool,
}

impl CalibrationReport {
    /// Flat `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        writeln!(s, "clusters = {}", self.clusters.len()).unwrap();
        writeln!(s, "before = {}", self.before).unwrap();
        writeln!(s, "after = {}", self.after).unwrap();
        writeln!(s, "improved = {}", self.improved).unwrap();
        s
    }

    /// One whitespace-separated record per cluster.
    pub fn to_records(&self) -> String {
        let mut s = String::new();
        for c in &self.clusters {
            writeln!(s, "cluster={} size={} before={} after={}", c.label, c.size, c.before, c.after).unwrap();
        }
        s
    }
}

fn mean_pairwise_distance(f: &FeatureMap, rows: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            total += cosine_distance(f.row(i), f.row(j))?;
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { total / pairs as f64 })
}

/// Intra-cluster spread of semantic features before and after fusion.
/// Overall figures average the clusters that have at least two members.
pub fn calibration_report(f_sem: &FeatureMap, f_fused: &FeatureMap, labels: &[usize]) -> Result<CalibrationReport> {
    if f_sem.n() != f_fused.n() || labels.len() != f_sem.n() {
        return Err(dim_mismatch(format!(
            "semantic rows {}, fused rows {}, labels {}",
            f_sem.n(),
            f_fused.n(),
            labels.len()
        )));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let mut clusters = Vec::with_capacity(members.len());
    for (label, rows) in members {
        let before = mean_pairwise_distance(f_sem, &rows)?;
        let after = mean_pairwise_distance(f_fused, &rows)?;
        clusters.push(ClusterStat { label, size: rows.len(), before, after });
    }
    let counted: Vec<&ClusterStat> = clusters.iter().filter(|c| c.size >= 2).collect();
    let denom = counted.len().max(1) as f64;
    let before = counted.iter().map(|c| c.before).sum::<f64>() / denom;
    let after = counted.iter().map(|c| c.after).sum::<f64>() / denom;
    Ok(CalibrationReport { clusters, before, after, improved: after <= before })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fusion_ties() {
        let f = FeatureMap::from_rows(&[[1.0, 0.2], [0.9, 0.1], [0.0, 1.0], [0.1, 1.0]]).unwrap();
        let r = calibration_report(&f, &f, &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.before, r.after);
        assert!(r.improved);
        assert_eq!(r.clusters.len(), 2);
    }

    #[test]
    fn noiseless_clusters_are_zero() {
        let f = FeatureMap::from_rows(&[[1.0, 0.2], [1.0, 0.2], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        let r = calibration_report(&f, &f, &[0, 0, 1, 1]).unwrap();
        assert!(r.before.abs() < 1e-15 && r.after.abs() < 1e-15);
    }

    #[test]
    fn averaging_tightens_clusters() {
        let sem = FeatureMap::from_rows(&[[1.0, 0.3], [1.0, -0.3], [0.3, 1.0], [-0.3, 1.0]]).unwrap();
        let fused = FeatureMap::from_rows(&[[1.0, 0.1], [1.0, -0.1], [0.1, 1.0], [-0.1, 1.0]]).unwrap();
        let r = calibration_report(&sem, &fused, &[0, 0, 1, 1]).unwrap();
        assert!(r.after < r.before && r.improved);
        let c0 = 1.0 - (1.0 - 0.09) / 1.09;
        assert!((r.clusters[0].before - c0).abs() < 1e-15);
        assert!(r.to_records().starts_with("cluster=0 size=2"));
    }

    #[test]
    fn length_mismatch() {
        let f = FeatureMap::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(calibration_report(&f, &f, &[0]).is_err());
    }
}
