//! Seeded gradient-check suites for every analytic gradient.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use super::oracle::{finite_difference_gradient, gradient_check, GradCheck};
use super::rng::SplitMix64;
use crate::error::{Error, Result};
use crate::losses::{attention_distill_loss, cosine_distill_loss};
use crate::relational::{point_kd_loss, relational_distill_loss, DistillScope, Instance, MuParam};
use crate::tensor::FeatureMap;

pub const FD_EPSILON: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    Cosine,
    Attention,
    PointKd,
    Relational,
}

impl fmt::Display for GradTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradTarget::Cosine => "cosine",
            GradTarget::Attention => "attn",
            GradTarget::PointKd => "point",
            GradTarget::Relational => "relational",
        })
    }
}

impl FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(GradTarget::Cosine),
            "attn" | "attention" => Ok(GradTarget::Attention),
            "point" => Ok(GradTarget::PointKd),
            "relational" => Ok(GradTarget::Relational),
            other => Err(Error::InvalidConfig(format!("unknown gradcheck target {other:?}"))),
        }
    }
}

fn random_map(rng: &mut SplitMix64, n: usize, d: usize) -> Result<FeatureMap> {
    let data = Array2::from_shape_vec((n, d), rng.normal_vec(n * d)).expect("sized");
    FeatureMap::new(data)
}

fn with_student(like: &FeatureMap, flat: &[f64]) -> FeatureMap {
    FeatureMap::new(Array2::from_shape_vec(like.data().dim(), flat.to_vec()).expect("sized")).expect("finite")
}

/// A random batch with `n` instances spread over up to three images.
pub fn random_batch(rng: &mut SplitMix64, n: usize, d: usize) -> Result<Vec<Instance>> {
    (0..n)
        .map(|_| {
            let img = rng.range(0, 2);
            let cat = rng.range(0, 3);
            let (f_v, f_g, t, f_c) = (rng.normal_vec(d), rng.normal_vec(d), rng.normal_vec(d), rng.normal_vec(d));
            Instance::new(f_v, f_g, t, f_c, format!("img{img}"), format!("cat{cat}"))
        })
        .collect()
}

/// Runs one seeded check. `perturb` is added to the first analytic
/// coordinate, which lets callers confirm that the checker catches errors.
pub fn run_gradcheck(target: GradTarget, seed: u64, perturb: f64) -> Result<GradCheck> {
    let mut rng = SplitMix64::new(seed);
    let (mut analytic, numeric) = match target {
        GradTarget::Cosine => {
            let (n, d) = (rng.range(2, 16), rng.range(2, 8));
            let teacher = random_map(&mut rng, n, d)?;
            let student = random_map(&mut rng, n, d)?;
            let analytic = cosine_distill_loss(&teacher, &student)?.grad_student.iter().copied().collect::<Vec<_>>();
            let numeric = finite_difference_gradient(
                |x| cosine_distill_loss(&teacher, &with_student(&student, x)).map_or(f64::NAN, |r| r.value),
                student.as_slice(),
                FD_EPSILON,
            );
            (analytic, numeric)
        }
        GradTarget::Attention => {
            let n = rng.range(2, 16);
            let (dt, ds) = (rng.range(2, 8), rng.range(2, 8));
            let teacher = random_map(&mut rng, n, dt)?;
            let student = random_map(&mut rng, n, ds)?;
            let (tau_t, tau_s) = (0.1, 1.0);
            let analytic = attention_distill_loss(&teacher, &student, tau_t, tau_s)?
                .grad_student
                .iter()
                .copied()
                .collect::<Vec<_>>();
            let numeric = finite_difference_gradient(
                |x| {
                    attention_distill_loss(&teacher, &with_student(&student, x), tau_t, tau_s)
                        .map_or(f64::NAN, |r| r.value)
                },
                student.as_slice(),
                FD_EPSILON,
            );
            (analytic, numeric)
        }
        GradTarget::PointKd => {
            let (n, d) = (rng.range(1, 16), rng.range(2, 8));
            let batch = random_batch(&mut rng, n, d)?;
            let analytic: Vec<f64> = point_kd_loss(&batch)?.grad_fc.concat();
            let flat: Vec<f64> = batch.iter().flat_map(|b| b.f_c.clone()).collect();
            let numeric = finite_difference_gradient(
                |x| point_kd_loss(&replace_fc(&batch, x)).map_or(f64::NAN, |r| r.value),
                &flat,
                FD_EPSILON,
            );
            (analytic, numeric)
        }
        GradTarget::Relational => {
            // Layer norm maps every 2-vector to ±(1, -1), which leaves no ρ dependence to check.
            let (n, d) = (rng.range(1, 8), rng.range(3, 6));
            let batch = random_batch(&mut rng, n, d)?;
            let rho = rng.uniform(-2.0, 2.0);
            let scope = if rng.next_f64() < 0.5 { DistillScope::WithinBatch } else { DistillScope::WithinImage };
            let r = relational_distill_loss(&batch, MuParam::new(rho), scope)?;
            let mut analytic = r.grad_fc.concat();
            analytic.push(r.grad_rho);
            let mut flat: Vec<f64> = batch.iter().flat_map(|b| b.f_c.clone()).collect();
            flat.push(rho);
            let numeric = finite_difference_gradient(
                |x| {
                    let (fc, rho) = x.split_at(x.len() - 1);
                    relational_distill_loss(&replace_fc(&batch, fc), MuParam::new(rho[0]), scope)
                        .map_or(f64::NAN, |r| r.value)
                },
                &flat,
                FD_EPSILON,
            );
            (analytic, numeric)
        }
    };
    analytic[0] += perturb;
    gradient_check(&analytic, &numeric, REL_TOL)
}

/// Copy of `batch` with student features taken from a flat buffer.
pub fn replace_fc(batch: &[Instance], flat: &[f64]) -> Vec<Instance> {
    let d = batch.first().map_or(0, Instance::dim);
    batch.iter().zip(flat.chunks(d.max(1))).map(|(inst, fc)| Instance { f_c: fc.to_vec(), ..inst.clone() }).collect()
}
