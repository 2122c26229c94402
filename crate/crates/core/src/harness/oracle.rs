//! Reference implementations used to check the fast paths.

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

/// LOF written straight from its definitions, with no caching, sorting or
/// shared code from the fusion module.
///
/// * `k-distance(p)`: the distance `d(p, o)` for which at least `k` other
///   points lie within `d` and fewer than `k` lie strictly closer.
/// * `N_k(p)`: every other point within `k-distance(p)`.
/// * `reach(p, o) = max(k-distance(o), d(p, o))`
/// * `lrd(p) = 1 / mean_{o ∈ N_k(p)} reach(p, o)` (infinite for zero mean)
/// * `LOF(p) = mean_{o ∈ N_k(p)} lrd(o) / lrd(p)` (1 when `lrd(p)` is infinite)
pub fn brute_force_lof(features: &FeatureMap, indices: &[usize], k: usize) -> Result<Vec<f64>> {
    let m = indices.len();
    if m < 2 {
        return Err(Error::TooFewPoints(m));
    }
    if m < 3 {
        return Ok(vec![1.0; m]);
    }
    let k = k.min(m - 1);

    let mut points: Vec<Vec<f64>> = Vec::new();
    for &i in indices {
        let row = features.row(i);
        let mut sq = 0.0;
        for v in row {
            sq += v * v;
        }
        let len = sq.sqrt();
        if len <= 1e-12 {
            return Err(Error::ZeroRow(i));
        }
        points.push(row.iter().map(|v| v / len).collect());
    }
    let d = |a: usize, b: usize| -> f64 {
        let mut sq = 0.0;
        for (x, y) in points[a].iter().zip(&points[b]) {
            sq += (x - y) * (x - y);
        }
        sq.sqrt()
    };

    let mut coincident = true;
    for a in 0..m {
        for b in 0..m {
            if a != b && d(a, b) > 1e-12 {
                coincident = false;
            }
        }
    }
    if coincident {
        return Ok(vec![1.0; m]);
    }

    let k_distance = |p: usize| -> f64 {
        for o in 0..m {
            if o == p {
                continue;
            }
            let candidate = d(p, o);
            let mut within = 0;
            let mut closer = 0;
            for q in 0..m {
                if q != p {
                    if d(p, q) <= candidate {
                        within += 1;
                    }
                    if d(p, q) < candidate {
                        closer += 1;
                    }
                }
            }
            if within >= k && closer < k {
                return candidate;
            }
        }
        unreachable!("some distance is the k-th smallest")
    };
    let neighbors = |p: usize| -> Vec<usize> {
        let kd = k_distance(p);
        (0..m).filter(|&o| o != p && d(p, o) <= kd).collect()
    };
    let lrd = |p: usize| -> f64 {
        let nb = neighbors(p);
        let mut sum = 0.0;
        for &o in &nb {
            sum += k_distance(o).max(d(p, o));
        }
        let mean = sum / nb.len() as f64;
        if mean <= 1e-12 {
            f64::INFINITY
        } else {
            1.0 / mean
        }
    };

    let mut out = Vec::with_capacity(m);
    for p in 0..m {
        let lp = lrd(p);
        if lp.is_infinite() {
            out.push(1.0);
            continue;
        }
        let nb = neighbors(p);
        let mut sum = 0.0;
        for &o in &nb {
            sum += lrd(o) / lp;
        }
        out.push(sum / nb.len() as f64);
    }
    Ok(out)
}

/// Central differences `(f(x + εe_k) - f(x - εe_k)) / 2ε` per coordinate.
pub fn finite_difference_gradient(mut loss: impl FnMut(&[f64]) -> f64, point: &[f64], epsilon: f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + epsilon;
            let up = loss(&x);
            x[k] = orig - epsilon;
            let down = loss(&x);
            x[k] = orig;
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub passed: bool,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Per-coordinate `|a - n| / max(1e-8, |a| + |n|)`; passes when the largest is
/// below `rel_tol`.
pub fn gradient_check(analytic: &[f64], numeric: &[f64], rel_tol: f64) -> Result<GradCheck> {
    if analytic.len() != numeric.len() {
        return Err(Error::LengthMismatch { expected: analytic.len(), actual: numeric.len() });
    }
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 || e.is_nan() { (i, e) } else { best });
    Ok(GradCheck { passed: max_rel_error < rel_tol, max_rel_error, worst_index })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_quadratic_and_flat() {
        let g = finite_difference_gradient(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-6);
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        assert_eq!(finite_difference_gradient(|_| 3.5, &[1.0, -2.0, 0.0], 1e-6), vec![0.0; 3]);
    }

    #[test]
    fn check_examples() {
        let r = gradient_check(&[1.0, -2.0], &[1.0, -2.0], 1e-4).unwrap();
        assert!(r.passed && r.max_rel_error == 0.0);
        let r = gradient_check(&[1.0, 0.0], &[1.0, 1.0], 1e-4).unwrap();
        assert!(!r.passed && r.worst_index == 1 && r.max_rel_error == 1.0);
        assert!(matches!(gradient_check(&[1.0], &[1.0, 2.0], 1e-4), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn brute_lof_identical_points() {
        let f = FeatureMap::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        assert_eq!(brute_force_lof(&f, &[0, 1, 2], 5).unwrap(), vec![1.0; 3]);
    }
}
