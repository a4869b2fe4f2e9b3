//! Adaptive-moment optimizer with inverse-time step-size decay.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::Gradients;
use crate::error::{config_err, Result};
use crate::model::{Bindings, ParamStore};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// `lr_t = lr / (1 + decay * t)`, `t` counting completed updates.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, decay: 1e-6, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(config_err!("invalid optimizer settings {:?}", self))
        }
    }

    pub fn step_size(&self, t: u64) -> f64 {
        self.learning_rate / (1.0 + self.decay * t as f64)
    }
}

/// First and second moment estimates, aligned with a [`ParamStore`].
/// Running statistics get empty slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<S> {
    pub step: u64,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Real> AdamState<S> {
    pub fn new(params: &ParamStore<S>) -> Self {
        let zeros: Vec<Vec<S>> = params
            .entries()
            .iter()
            .map(|p| if p.kind.trainable() { vec![S::zero(); p.tensor.len()] } else { Vec::new() })
            .collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }

    /// Checks that the state matches `params` slot by slot.
    pub fn ensure_matches(&self, params: &ParamStore<S>) -> Result<()> {
        let fits = self.m.len() == params.len()
            && self.v.len() == params.len()
            && params.entries().iter().zip(self.m.iter().zip(&self.v)).all(|(p, (m, v))| {
                let n = if p.kind.trainable() { p.tensor.len() } else { 0 };
                m.len() == n && v.len() == n
            });
        if fits {
            Ok(())
        } else {
            Err(config_err!("optimizer state does not match the parameters"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub config: AdamConfig,
    pub state: AdamState<S>,
}

impl<S: Real> Adam<S> {
    pub fn new(config: AdamConfig, params: &ParamStore<S>) -> Self {
        Self { config, state: AdamState::new(params) }
    }

    /// One update of every trainable tensor bound in `bindings`. Tensors
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<S>, bindings: &Bindings, grads: &Gradients<S>) -> Result<()> {
        self.state.ensure_matches(params)?;
        if bindings.ids.len() != params.len() {
            return Err(config_err!("{} bindings for {} parameters", bindings.ids.len(), params.len()));
        }
        let c = self.config;
        let t = self.state.step;
        let lr = c.step_size(t);
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let corr1 = S::of(1.0 - libm::pow(c.beta1, (t + 1) as f64));
        let corr2 = S::of(1.0 - libm::pow(c.beta2, (t + 1) as f64));
        let (lr_s, eps) = (S::of(lr), S::of(c.eps));
        for (i, p) in params.entries_mut().iter_mut().enumerate() {
            if !p.kind.trainable() {
                continue;
            }
            let g = grads.get(bindings.ids[i]);
            let (m, v) = (&mut self.state.m[i], &mut self.state.v[i]);
            for (j, w) in p.tensor.values_mut().iter_mut().enumerate() {
                let gj = g.map_or(S::zero(), |g| g[j]);
                m[j] = b1 * m[j] + (S::one() - b1) * gj;
                v[j] = b2 * v[j] + (S::one() - b2) * gj * gj;
                if lr > 0.0 {
                    let mh = m[j] / corr1;
                    let vh = v[j] / corr2;
                    *w -= lr_s * mh / (vh.sqrt() + eps);
                }
            }
        }
        self.state.step += 1;
        Ok(())
    }
}
