//! AMSGrad with coupled L2 weight decay.
//!
//! Per parameter, with `g' = g + λθ`:
//!
//! ```text
//! m ← β1·m + (1 − β1)·g'
//! v ← β2·v + (1 − β2)·g'²
//! v̂ ← max(v̂, v)
//! θ ← θ − lr·m / (√v̂ + ε)
//! ```
//!
//! No bias correction is applied.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::Parameterized;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmsgradConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AmsgradConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AmsgradConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub v_hat: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            v_hat: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Amsgrad {
    pub config: AmsgradConfig,
    step: u64,
    /// One entry per parameter tensor, in visitation order.
    moments: Vec<Moments>,
}

impl Amsgrad {
    pub fn new(config: AmsgradConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            moments: Vec::new(),
        })
    }

    /// Rebuilds optimizer state, e.g. from a checkpoint.
    pub fn from_state(config: AmsgradConfig, step: u64, moments: Vec<Moments>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, step, moments })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &[Moments] {
        &self.moments
    }

    /// Applies one update to every parameter of `model` from its accumulated gradients.
    ///
    /// All gradients are checked before anything is modified; a non-finite
    /// gradient leaves parameters and state untouched.
    pub fn step<M: Parameterized + ?Sized>(&mut self, model: &mut M) -> Result<()> {
        let mut bad: Option<String> = None;
        let mut sizes = Vec::new();
        model.visit_params("", &mut |name, p| {
            sizes.push(p.value.len());
            if bad.is_none() && !p.grad.is_finite() {
                bad = Some(String::from(name));
            }
        });
        if let Some(param) = bad {
            return Err(Error::Divergence { param });
        }
        if self.moments.is_empty() {
            self.moments = sizes.iter().map(|&n| Moments::zeros(n)).collect();
        } else if self.moments.len() != sizes.len() || self.moments.iter().zip(&sizes).any(|(m, &n)| m.m.len() != n) {
            let have: Vec<usize> = self.moments.iter().map(|m| m.m.len()).collect();
            return Err(Error::shape("amsgrad state", &have, &sizes));
        }

        let AmsgradConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let mut idx = 0;
        let moments = &mut self.moments;
        model.visit_params("", &mut |_, p| {
            let st = &mut moments[idx];
            idx += 1;
            let grads = p.grad.data();
            for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
                let g = grads[i] + weight_decay * *theta;
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
                if st.v[i] > st.v_hat[i] {
                    st.v_hat[i] = st.v[i];
                }
                *theta -= lr * st.m[i] / (libm::sqrt(st.v_hat[i]) + eps);
            }
        });
        self.step += 1;
        Ok(())
    }
}
