//! Layers with explicit forward and backward passes.
//!
//! A layer's `forward` is pure; the caller keeps whatever the matching
//! `backward` needs (usually the forward input) and hands it back together
//! with the upstream gradient. Parameter gradients accumulate into
//! [`Param::grad`] until [`Parameterized::zero_grad`] is called.

mod activation;
mod conv;
mod dense;
mod mfm;
mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, softmax, softmax_backward, Activation};
pub use conv::Conv2d;
pub use dense::Dense;
pub use mfm::{mfm, mfm_backward};
pub use pool::{max_pool2d, max_pool2d_backward};

use alloc::format;
use alloc::string::String;
use rand::Rng;

use crate::rng::uniform;
use crate::tensor::Tensor;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything holding named parameters, visited in a fixed order.
pub trait Parameterized {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |_, p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.value.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform He fan-in scaling, for ReLU and MFM layers.
    He,
    /// Uniform Xavier scaling, for sigmoid and softmax outputs.
    Xavier,
}

impl Init {
    pub(crate) fn fill<R: Rng + ?Sized>(self, t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut R) {
        let bound = match self {
            Init::He => libm::sqrt(6.0 / fan_in as f64),
            Init::Xavier => libm::sqrt(6.0 / (fan_in + fan_out) as f64),
        };
        for v in t.data_mut() {
            *v = uniform(rng, -bound, bound);
        }
    }
}
