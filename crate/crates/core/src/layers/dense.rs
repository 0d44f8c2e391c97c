use rand::Rng;

use super::{join, Init, Param, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_a_bt, matmul_at_b_acc, Tensor};

/// Fully connected layer: `y = x·W + b` with `W` stored `[in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, init: Init, rng: &mut R) -> Self {
        let mut w = Tensor::zeros(&[inputs, outputs]);
        init.fill(&mut w, inputs, outputs, rng);
        Self {
            weight: Param::new(w),
            bias: Param::new(Tensor::zeros(&[outputs])),
        }
    }

    /// Layer from explicit parameters; `weight` is `[in × out]`, `bias` is `[out]`.
    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (_, out) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(Error::shape("dense bias", weight.shape(), bias.shape()));
        }
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (batch, width) = input.dims2()?;
        if width != self.inputs() {
            return Err(Error::shape("dense", input.shape(), self.weight.value.shape()));
        }
        let out = self.outputs();
        let mut y = Tensor::zeros(&[batch, out]);
        matmul(input.data(), self.weight.value.data(), batch, width, out, y.data_mut());
        let b = self.bias.value.data();
        for row in y.data_mut().chunks_mut(out) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        Ok(y)
    }

    /// Accumulates `dW`, `db` and returns the gradient w.r.t. `input`.
    pub fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (batch, width) = input.dims2()?;
        let out = self.outputs();
        if grad_out.shape() != [batch, out] {
            return Err(Error::shape("dense backward", grad_out.shape(), &[batch, out]));
        }
        matmul_at_b_acc(input.data(), grad_out.data(), batch, width, out, self.weight.grad.data_mut());
        let db = self.bias.grad.data_mut();
        for row in grad_out.data().chunks(out) {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        let mut grad_in = Tensor::zeros(&[batch, width]);
        matmul_a_bt(grad_out.data(), self.weight.value.data(), batch, out, width, grad_in.data_mut());
        Ok(grad_in)
    }
}

impl Parameterized for Dense {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
