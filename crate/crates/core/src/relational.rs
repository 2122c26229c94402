//! Textual and contextual prior distillation over a batch of ROI instances.
//!
//! The context-enhanced target of instance `j` is
//! `f_eh^j = LN(μ f_g^j + (1 - μ) f_v^j)` with a single learnable
//! `μ = logistic(ρ)`. The relational loss asks the cosine distance between
//! `f_c^i` and `f_eh^j` to equal the cosine distance between the text
//! embeddings `t^i` and `t^j`, averaged over the pairs in scope (self-pairs
//! included). Gradients flow into every `f_c` and into `ρ`; `f_v`, `f_g` and
//! `t` are frozen.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{dim_mismatch, Error, Result};
use crate::tensor::{dot, layer_normalize, norm, NORM_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Local visual feature of the ROI crop.
    pub f_v: Vec<f64>,
    /// Global feature of the image holding the ROI.
    pub f_g: Vec<f64>,
    /// Category text embedding.
    pub t: Vec<f64>,
    /// Student category feature.
    pub f_c: Vec<f64>,
    pub image_id: String,
    pub category_id: String,
}

impl Instance {
    pub fn new(
        f_v: Vec<f64>,
        f_g: Vec<f64>,
        t: Vec<f64>,
        f_c: Vec<f64>,
        image_id: impl Into<String>,
        category_id: impl Into<String>,
    ) -> Result<Self> {
        let inst = Self { f_v, f_g, t, f_c, image_id: image_id.into(), category_id: category_id.into() };
        inst.validate()?;
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        self.f_v.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.f_v.len();
        if d == 0 || self.f_g.len() != d || self.t.len() != d || self.f_c.len() != d {
            return Err(dim_mismatch(format!(
                "instance vectors have lengths f_v={} f_g={} t={} f_c={}",
                d,
                self.f_g.len(),
                self.t.len(),
                self.f_c.len()
            )));
        }
        let all = self.f_v.iter().chain(&self.f_g).chain(&self.t).chain(&self.f_c);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("instance feature".into()));
        }
        if norm(&self.t) <= NORM_EPS {
            return Err(Error::ZeroVector);
        }
        Ok(())
    }
}

/// Unconstrained parametrization of the context mix weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MuParam {
    pub rho: f64,
}

impl MuParam {
    pub fn new(rho: f64) -> Self {
        Self { rho }
    }

    /// `logistic(rho)`, strictly inside (0, 1) for finite rho.
    pub fn mu(&self) -> f64 {
        1.0 / (1.0 + (-self.rho).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistillScope {
    /// Independent `‖f_c - f_v‖²` alignment.
    PointWise,
    /// Relational pairs restricted to instances of the same image.
    WithinImage,
    /// Relational pairs over the whole batch.
    #[default]
    WithinBatch,
}

impl DistillScope {
    pub fn as_str(self) -> &'static str {
        match self {
            DistillScope::PointWise => "point",
            DistillScope::WithinImage => "image",
            DistillScope::WithinBatch => "batch",
        }
    }
}

impl fmt::Display for DistillScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistillScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" | "point-wise" => Ok(DistillScope::PointWise),
            "image" | "within-image" => Ok(DistillScope::WithinImage),
            "batch" | "within-batch" => Ok(DistillScope::WithinBatch),
            other => Err(Error::InvalidConfig(format!("unknown scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationalLoss {
    pub value: f64,
    /// `∂L/∂f_c^i`, one row per instance.
    pub grad_fc: Vec<Vec<f64>>,
    pub grad_rho: f64,
    pub pair_count: usize,
}

impl RelationalLoss {
    pub fn grad_norms(&self) -> Vec<f64> {
        self.grad_fc.iter().map(|g| norm(g)).collect()
    }
}

pub fn enhance_feature(f_g: &[f64], f_v: &[f64], mu: f64) -> Result<Vec<f64>> {
    if f_g.len() != f_v.len() {
        return Err(dim_mismatch(format!("f_g has {} entries, f_v {}", f_g.len(), f_v.len())));
    }
    let mixed: Vec<f64> = f_g.iter().zip(f_v).map(|(g, v)| mu * g + (1.0 - mu) * v).collect();
    layer_normalize(&mixed)
}

fn check_batch(batch: &[Instance]) -> Result<usize> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let d = first.dim();
    for (i, inst) in batch.iter().enumerate() {
        inst.validate()?;
        if inst.dim() != d {
            return Err(dim_mismatch(format!("instance {i} has dim {}, expected {d}", inst.dim())));
        }
    }
    Ok(d)
}

/// `(1/N) Σ_i ‖f_c^i - f_v^i‖²` and its gradient.
pub fn point_kd_loss(batch: &[Instance]) -> Result<RelationalLoss> {
    check_batch(batch)?;
    let inv_n = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let grad_fc = batch
        .iter()
        .map(|inst| {
            let diff: Vec<f64> = inst.f_c.iter().zip(&inst.f_v).map(|(c, v)| c - v).collect();
            total += dot(&diff, &diff);
            diff.into_iter().map(|x| 2.0 * inv_n * x).collect()
        })
        .collect();
    Ok(RelationalLoss { value: total * inv_n, grad_fc, grad_rho: 0.0, pair_count: batch.len() })
}

/// Number of `(i, j)` terms the scope sums over.
pub fn scope_pair_count(batch: &[Instance], scope: DistillScope) -> usize {
    let n = batch.len();
    match scope {
        DistillScope::PointWise => n,
        DistillScope::WithinBatch => n * n,
        DistillScope::WithinImage => image_sizes(batch).values().map(|c| c * c).sum(),
    }
}

fn image_sizes(batch: &[Instance]) -> BTreeMap<&str, usize> {
    let mut sizes = BTreeMap::new();
    for inst in batch {
        *sizes.entry(inst.image_id.as_str()).or_insert(0) += 1;
    }
    sizes
}

/// Gradient of `1 - cos(a, b)` with respect to `a`, accumulated as `out += scale * ∂`.
fn add_cos_distance_grad(out: &mut [f64], a: &[f64], b: &[f64], na: f64, nb: f64, cos: f64, scale: f64) {
    for k in 0..a.len() {
        out[k] -= scale * (b[k] / (na * nb) - cos * a[k] / (na * na));
    }
}

pub fn relational_distill_loss(batch: &[Instance], mu_param: MuParam, scope: DistillScope) -> Result<RelationalLoss> {
    if scope == DistillScope::PointWise {
        return point_kd_loss(batch);
    }
    let d = check_batch(batch)?;
    let n = batch.len();
    let mu = mu_param.mu();
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidConfig(format!("rho = {} saturates mu", mu_param.rho)));
    }

    let mut enhanced = Vec::with_capacity(n);
    let mut ln_std = Vec::with_capacity(n);
    for inst in batch {
        let mixed: Vec<f64> = inst.f_g.iter().zip(&inst.f_v).map(|(g, v)| mu * g + (1.0 - mu) * v).collect();
        let mean = mixed.iter().fold(0.0, |acc, x| acc + x) / d as f64;
        let std = (mixed.iter().fold(0.0, |acc, x| acc + (x - mean) * (x - mean)) / d as f64).sqrt();
        enhanced.push(layer_normalize(&mixed)?);
        ln_std.push(std);
    }

    let fc_norms: Vec<f64> = batch.iter().map(|inst| norm(&inst.f_c)).collect();
    if fc_norms.iter().any(|&v| v <= NORM_EPS) {
        return Err(Error::ZeroVector);
    }
    let eh_norms: Vec<f64> = enhanced.iter().map(|e| norm(e)).collect();
    if eh_norms.iter().any(|&v| v <= NORM_EPS) {
        return Err(Error::ZeroVector);
    }
    let t_norms: Vec<f64> = batch.iter().map(|inst| norm(&inst.t)).collect();

    let in_scope = |i: usize, j: usize| scope == DistillScope::WithinBatch || batch[i].image_id == batch[j].image_id;
    let pair_count = scope_pair_count(batch, scope);
    let inv_p = 1.0 / pair_count as f64;

    let mut total = 0.0;
    let mut grad_fc = vec![vec![0.0; d]; n];
    let mut grad_eh = vec![vec![0.0; d]; n];
    for i in 0..n {
        let fc = &batch[i].f_c;
        for j in (0..n).filter(|&j| in_scope(i, j)) {
            let eh = &enhanced[j];
            let cos_v = dot(fc, eh) / (fc_norms[i] * eh_norms[j]);
            let cos_t = dot(&batch[i].t, &batch[j].t) / (t_norms[i] * t_norms[j]);
            let residual = (1.0 - cos_v) - (1.0 - cos_t);
            total += residual * residual;
            let scale = 2.0 * residual * inv_p;
            add_cos_distance_grad(&mut grad_fc[i], fc, eh, fc_norms[i], eh_norms[j], cos_v, scale);
            add_cos_distance_grad(&mut grad_eh[j], eh, fc, eh_norms[j], fc_norms[i], cos_v, scale);
        }
    }

    // Back through LN and the mix: x = μ f_g + (1-μ) f_v, ∂x/∂μ = f_g - f_v.
    let mut grad_mu = 0.0;
    for j in 0..n {
        let (gy, y) = (&grad_eh[j], &enhanced[j]);
        let mean_g = gy.iter().fold(0.0, |acc, v| acc + v) / d as f64;
        let mean_gy = dot(gy, y) / d as f64;
        let inst = &batch[j];
        for k in 0..d {
            let gx = (gy[k] - mean_g - y[k] * mean_gy) / ln_std[j];
            grad_mu += gx * (inst.f_g[k] - inst.f_v[k]);
        }
    }

    Ok(RelationalLoss { value: total * inv_p, grad_fc, grad_rho: grad_mu * mu * (1.0 - mu), pair_count })
}
