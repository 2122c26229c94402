use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub record_every: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, steps: 500, record_every: 1 }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.steps == 0 || self.record_every == 0 {
            return Err(Error::InvalidConfig("steps and record_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub params: Vec<f64>,
    /// `(step, loss before that step)`; the last entry is the loss after the
    /// final step, recorded at `step = steps`.
    pub trajectory: Vec<(usize, f64)>,
}

impl Descent {
    pub fn initial(&self) -> f64 {
        self.trajectory.first().map_or(f64::NAN, |r| r.1)
    }

    pub fn last(&self) -> f64 {
        self.trajectory.last().map_or(f64::NAN, |r| r.1)
    }

    /// Fraction of the initial loss removed, in `[0, 1]` for a decreasing run.
    pub fn reduction(&self) -> f64 {
        1.0 - self.last() / self.initial()
    }
}

/// Fixed-step gradient descent `p ← p - lr · ∇L(p)`.
pub fn toy_descent(
    mut loss_and_grad: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    params: &[f64],
    cfg: &DescentConfig,
) -> Result<Descent> {
    cfg.validate()?;
    let mut p = params.to_vec();
    let mut trajectory = Vec::with_capacity(cfg.steps / cfg.record_every + 2);
    for step in 0..cfg.steps {
        let (value, grad) = loss_and_grad(&p)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        if step % cfg.record_every == 0 {
            trajectory.push((step, value));
        }
        p.iter_mut().zip(&grad).for_each(|(x, g)| *x -= cfg.learning_rate * g);
    }
    let (value, _) = loss_and_grad(&p)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { step: cfg.steps });
    }
    trajectory.push((cfg.steps, value));
    Ok(Descent { params: p, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(p: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((p.iter().map(|x| x * x).sum(), p.iter().map(|x| 2.0 * x).collect()))
    }

    #[test]
    fn bowl_decreases_strictly() {
        let cfg = DescentConfig { learning_rate: 0.1, steps: 50, record_every: 1 };
        let run = toy_descent(bowl, &[3.0, -1.0], &cfg).unwrap();
        assert_eq!(run.trajectory.len(), 51);
        assert!(run.trajectory.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(run.reduction() > 0.999);
    }

    #[test]
    fn huge_step_diverges() {
        let cfg = DescentConfig { learning_rate: 1e6, steps: 500, record_every: 10 };
        assert!(matches!(toy_descent(bowl, &[3.0, -1.0], &cfg), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn record_every_thins_the_trajectory() {
        let cfg = DescentConfig { learning_rate: 0.1, steps: 10, record_every: 4 };
        let run = toy_descent(bowl, &[1.0], &cfg).unwrap();
        let steps: Vec<usize> = run.trajectory.iter().map(|r| r.0).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
    }
}
