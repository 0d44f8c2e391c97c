use alloc::vec::Vec;
use rand::Rng;

use crate::error::Result;
use crate::layers::{join, relu, relu_backward, sigmoid_scalar, Dense, Init, Param, Parameterized};
use crate::loss::{bce_logits, LossReport};
use crate::tensor::Tensor;

/// Bona fide detector over fixed embeddings: one ReLU hidden layer and a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct PadClassifier {
    pub hidden: Dense,
    pub out: Dense,
}

impl PadClassifier {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            hidden: Dense::new(input_dim, hidden, Init::He, rng),
            out: Dense::new(hidden, 1, Init::Xavier, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.inputs()
    }

    /// Bona fide probability per row of `[batch × dim]`.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let h = relu(&self.hidden.forward(x)?);
        Ok(self.out.forward(&h)?.data().iter().map(|&z| sigmoid_scalar(z)).collect())
    }

    pub fn loss_and_backward(&mut self, x: &Tensor, targets: &[f64], backward: bool) -> Result<LossReport> {
        let z = self.hidden.forward(x)?;
        let h = relu(&z);
        let logits = self.out.forward(&h)?.into_data();
        let (l, g) = bce_logits(&logits, targets)?;
        if backward {
            let gh = self.out.backward(&h, &Tensor::matrix(g.len(), 1, g)?)?;
            let gz = relu_backward(&z, &gh)?;
            self.hidden.backward(x, &gz)?;
        }
        let mut report = LossReport::new(targets.len());
        report.pad = Some(l);
        report.total = l;
        Ok(report)
    }
}

impl Parameterized for PadClassifier {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.hidden.visit_params(&join(prefix, "hidden"), f);
        self.out.visit_params(&join(prefix, "out"), f);
    }
}
