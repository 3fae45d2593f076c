use serde::{Deserialize, Serialize};
use vdgpt_core::plan::guided_step_count;

use crate::latent::LatentGrid;
use crate::{shape_err, GroundingError};

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 2e-2;

/// Fixed forward process with `steps` noise levels. `betas[t-1]` is
/// `beta_t`; `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSchedule {
    pub steps: usize,
    pub betas: Vec<f64>,
    alpha_bar: Vec<f64>,
    pub guided_steps: usize,
}

impl DenoiseSchedule {
    /// Linear betas from 1e-4 to 2e-2, no guidance.
    pub fn linear(steps: usize) -> Result<Self, GroundingError> {
        Self::from_betas(linspace(BETA_START, BETA_END, steps))
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self, GroundingError> {
        if betas.is_empty() {
            return Err(shape_err("schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(shape_err(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        let mut acc = 1.0;
        alpha_bar.push(acc);
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self {
            steps: betas.len(),
            betas,
            alpha_bar,
            guided_steps: 0,
        })
    }

    /// Sets `guided_steps = round(alpha * steps)`.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.guided_steps = guided_step_count(alpha, self.steps);
        self
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar[1..]
    }

    fn check_step(&self, t: usize) -> Result<(), GroundingError> {
        if t == 0 || t > self.steps {
            return Err(GroundingError::Step { step: t, max: self.steps });
        }
        Ok(())
    }

    /// Mean coefficient and variance of `z_t | z_0` obtained by composing the
    /// one-step kernels `N(sqrt(1 - beta) z, beta I)`.
    pub fn stepwise_moments(&self, t: usize) -> Result<(f64, f64), GroundingError> {
        self.check_step(t)?;
        let (mut mean, mut var) = (1.0, 0.0);
        for b in &self.betas[..t] {
            mean *= (1.0 - b).sqrt();
            var = (1.0 - b) * var + b;
        }
        Ok((mean, var))
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Closed-form jump `z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) noise`.
pub fn forward_diffuse(
    z0: &LatentGrid,
    t: usize,
    schedule: &DenoiseSchedule,
    noise: &LatentGrid,
) -> Result<LatentGrid, GroundingError> {
    schedule.check_step(t)?;
    z0.check_same_shape(noise)?;
    let ab = schedule.alpha_bar(t);
    Ok(z0.combine(ab.sqrt(), noise, (1.0 - ab).sqrt()))
}

/// Applies the one-step kernel `t` times with `noises[s-1]` at step `s`.
pub fn forward_diffuse_stepwise(
    z0: &LatentGrid,
    t: usize,
    schedule: &DenoiseSchedule,
    noises: &[LatentGrid],
) -> Result<LatentGrid, GroundingError> {
    schedule.check_step(t)?;
    if noises.len() < t {
        return Err(shape_err(format!("need {t} noise draws, got {}", noises.len())));
    }
    let mut z = z0.clone();
    for (b, n) in schedule.betas[..t].iter().zip(noises) {
        z.check_same_shape(n)?;
        z = z.combine((1.0 - b).sqrt(), n, b.sqrt());
    }
    Ok(z)
}
