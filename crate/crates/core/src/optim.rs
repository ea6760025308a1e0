//! Bias-corrected Adam.

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment buffers, laid out like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: ParamSet,
    pub v: ParamSet,
}

impl AdamMoments {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like() }
    }
}

/// One Adam update at step index `t` (1-based).
pub fn adam_step(
    params: &ParamSet,
    grads: &ParamSet,
    moments: &AdamMoments,
    cfg: &AdamConfig,
    t: u64,
) -> Result<(ParamSet, AdamMoments)> {
    if t == 0 {
        return Err(Error::invalid("adam step index starts at 1"));
    }
    params.check_compatible(grads)?;
    params.check_compatible(&moments.m)?;
    params.check_compatible(&moments.v)?;
    let AdamConfig { lr, beta1, beta2, eps } = *cfg;
    let m = moments.m.zip_map(grads, |m, g| beta1 * m + (1.0 - beta1) * g)?;
    let v = moments.v.zip_map(grads, |v, g| beta2 * v + (1.0 - beta2) * g * g)?;
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    let step = m.zip_map(&v, |m, v| lr * (m / c1) / ((v / c2).sqrt() + eps))?;
    let updated = params.sub(&step)?;
    Ok((updated, AdamMoments { m, v }))
}

/// Adam with its moment buffers and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub moments: AdamMoments,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        Self { cfg, moments: AdamMoments::zeros_like(params), t: 0 }
    }

    pub fn step(&mut self, params: &ParamSet, grads: &ParamSet) -> Result<ParamSet> {
        let (updated, moments) = adam_step(params, grads, &self.moments, &self.cfg, self.t + 1)?;
        self.moments = moments;
        self.t += 1;
        Ok(updated)
    }
}
