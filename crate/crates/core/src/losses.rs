//! Backbone distillation objectives with analytic gradients with respect to
//! the student features.
//!
//! * cosine loss: `(1/N) Σ_i (1 - cos(f_t^i, f_s^i))`
//! * attention loss: row-averaged `KL(P_t || P_s)` with
//!   `P = softmax_rows(F Fᵀ / τ)` on raw (unnormalized) Gram matrices
//! * backbone loss: `λ_cos · L_cos + λ_attn · L_attn`

use ndarray::Array2;

use crate::error::{dim_mismatch, Error, Result};
use crate::tensor::{dot, norm, FeatureMap, NORM_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneLossConfig {
    pub tau_t: f64,
    pub tau_s: f64,
    pub lambda_cosine: f64,
    pub lambda_attn: f64,
}

impl Default for BackboneLossConfig {
    fn default() -> Self {
        Self { tau_t: 0.1, tau_s: 1.0, lambda_cosine: 1.0, lambda_attn: 1.0 }
    }
}

impl BackboneLossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("tau_t", self.tau_t), ("tau_s", self.tau_s)] {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {t}")));
            }
        }
        for (name, w) in [("lambda_cosine", self.lambda_cosine), ("lambda_attn", self.lambda_attn)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {w}")));
            }
        }
        if self.lambda_cosine == 0.0 && self.lambda_attn == 0.0 {
            return Err(Error::InvalidConfig("lambda_cosine and lambda_attn are both zero".into()));
        }
        Ok(())
    }
}

/// A loss value together with `∂loss/∂F_student`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_student: Array2<f64>,
}

impl LossResult {
    /// Frobenius norm of the gradient.
    pub fn grad_norm(&self) -> f64 {
        self.grad_student.iter().fold(0.0, |acc, g| acc + g * g).sqrt()
    }
}

/// Projects every student patch through `projection` (Ds×Dt), then resizes the
/// Hs×Ws grid to `target_grid` with bilinear interpolation (half-pixel
/// centers, edge clamped).
pub fn align_student(
    f_student: &FeatureMap,
    target_grid: (usize, usize),
    target_dim: usize,
    projection: &Array2<f64>,
) -> Result<FeatureMap> {
    let (hs, ws) = f_student.grid().ok_or(Error::MissingGrid)?;
    let (ht, wt) = target_grid;
    if ht == 0 || wt == 0 {
        return Err(dim_mismatch(format!("target grid {ht}x{wt} is empty")));
    }
    let (ds, dt) = projection.dim();
    if ds != f_student.dim() || dt != target_dim {
        return Err(dim_mismatch(format!(
            "projection is {ds}x{dt}, student dim {} and target dim {target_dim}",
            f_student.dim()
        )));
    }

    let projected: Vec<Vec<f64>> = (0..f_student.n())
        .map(|p| {
            let row = f_student.row(p);
            (0..dt).map(|c| (0..ds).fold(0.0, |acc, k| acc + row[k] * projection[[k, c]])).collect()
        })
        .collect();

    let ys: Vec<(usize, usize, f64)> = (0..ht).map(|o| source_coord(o, hs, ht)).collect();
    let xs: Vec<(usize, usize, f64)> = (0..wt).map(|o| source_coord(o, ws, wt)).collect();
    let mut out = Array2::zeros((ht * wt, dt));
    for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
            let (p00, p01) = (&projected[y0 * ws + x0], &projected[y0 * ws + x1]);
            let (p10, p11) = (&projected[y1 * ws + x0], &projected[y1 * ws + x1]);
            for c in 0..dt {
                let top = (1.0 - lx) * p00[c] + lx * p01[c];
                let bottom = (1.0 - lx) * p10[c] + lx * p11[c];
                out[[oy * wt + ox, c]] = (1.0 - ly) * top + ly * bottom;
            }
        }
    }
    FeatureMap::with_grid(out, ht, wt)
}

/// Source cell pair and blend weight for output index `o` when resizing
/// `src` cells to `dst` cells.
fn source_coord(o: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let scale = src as f64 / dst as f64;
    let x = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (x.floor() as usize).min(src - 1);
    let i1 = (i0 + 1).min(src - 1);
    let lambda = if i1 == i0 { 0.0 } else { x - i0 as f64 };
    (i0, i1, lambda)
}

fn same_shape(f_teacher: &FeatureMap, f_student: &FeatureMap) -> Result<()> {
    if f_teacher.data().dim() != f_student.data().dim() {
        return Err(dim_mismatch(format!(
            "teacher is {:?}, student is {:?}",
            f_teacher.data().dim(),
            f_student.data().dim()
        )));
    }
    Ok(())
}

pub fn cosine_distill_loss(f_teacher: &FeatureMap, f_student: &FeatureMap) -> Result<LossResult> {
    same_shape(f_teacher, f_student)?;
    let (n, d) = f_student.data().dim();
    let inv_n = 1.0 / n as f64;
    let mut grad = Array2::zeros((n, d));
    let mut total = 0.0;
    for i in 0..n {
        let (t, s) = (f_teacher.row(i), f_student.row(i));
        let (nt, ns) = (norm(t), norm(s));
        if nt <= NORM_EPS || ns <= NORM_EPS {
            return Err(Error::ZeroRow(i));
        }
        let cos = dot(t, s) / (nt * ns);
        total += 1.0 - cos;
        for k in 0..d {
            grad[[i, k]] = -inv_n * (t[k] / (nt * ns) - cos * s[k] / (ns * ns));
        }
    }
    Ok(LossResult { value: total * inv_n, grad_student: grad })
}

fn gram(f: &FeatureMap, tau: f64) -> Array2<f64> {
    let n = f.n();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = dot(f.row(i), f.row(j)) / tau;
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

fn log_softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().fold(0.0, |acc, v| acc + (v - max).exp()).ln();
        row.mapv_inplace(|v| v - lse);
    }
    logits
}

/// Row-averaged `KL(P_t || P_s)` between temperature softmaxes of the
/// teacher and student Gram matrices. Teacher and student may differ in D.
pub fn attention_distill_loss(
    f_teacher: &FeatureMap,
    f_student: &FeatureMap,
    tau_t: f64,
    tau_s: f64,
) -> Result<LossResult> {
    let n = f_student.n();
    if f_teacher.n() != n {
        return Err(dim_mismatch(format!("teacher has {} patches, student {n}", f_teacher.n())));
    }
    if n < 2 {
        return Err(dim_mismatch(format!("attention loss needs at least 2 patches, got {n}")));
    }
    for (name, t) in [("tau_t", tau_t), ("tau_s", tau_s)] {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidConfig(format!("{name} must be > 0, got {t}")));
        }
    }
    let log_pt = log_softmax_rows(gram(f_teacher, tau_t));
    let log_ps = log_softmax_rows(gram(f_student, tau_s));
    let inv_n = 1.0 / n as f64;

    let mut total = 0.0;
    // ∂L/∂G_s[i][j] = (P_s - P_t)[i][j] / N
    let mut dg = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let (lt, ls) = (log_pt[[i, j]], log_ps[[i, j]]);
            let pt = lt.exp();
            if pt > 0.0 {
                total += pt * (lt - ls);
            }
            dg[[i, j]] = (ls.exp() - pt) * inv_n;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("attention KL".into()));
    }

    // G_s = F Fᵀ / τ_s  ⇒  ∂L/∂F = (dG + dGᵀ) F / τ_s
    let d = f_student.dim();
    let mut grad = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..n {
            let w = (dg[[i, j]] + dg[[j, i]]) / tau_s;
            let fj = f_student.row(j);
            for k in 0..d {
                grad[[i, k]] += w * fj[k];
            }
        }
    }
    Ok(LossResult { value: (total * inv_n).max(0.0), grad_student: grad })
}

/// Weighted total plus the unweighted component values.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneLoss {
    pub total: LossResult,
    pub cosine: f64,
    pub attn: f64,
}

pub fn backbone_loss(f_teacher: &FeatureMap, f_student: &FeatureMap, cfg: &BackboneLossConfig) -> Result<BackboneLoss> {
    cfg.validate()?;
    same_shape(f_teacher, f_student)?;
    let (n, d) = f_student.data().dim();
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, d));
    let mut cosine = 0.0;
    let mut attn = 0.0;
    if cfg.lambda_cosine > 0.0 {
        let c = cosine_distill_loss(f_teacher, f_student)?;
        cosine = c.value;
        value += cfg.lambda_cosine * c.value;
        grad.scaled_add(cfg.lambda_cosine, &c.grad_student);
    }
    if cfg.lambda_attn > 0.0 {
        let a = attention_distill_loss(f_teacher, f_student, cfg.tau_t, cfg.tau_s)?;
        attn = a.value;
        value += cfg.lambda_attn * a.value;
        grad.scaled_add(cfg.lambda_attn, &a.grad_student);
    }
    Ok(BackboneLoss { total: LossResult { value, grad_student: grad }, cosine, attn })
}
