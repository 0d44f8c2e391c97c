use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Normalizes along the given axis.
    Softmax { axis: usize },
}

impl Activation {
    pub fn apply(self, input: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Relu => Ok(relu(input)),
            Activation::Sigmoid => Ok(sigmoid(input)),
            Activation::Softmax { axis } => softmax(input, axis),
        }
    }

    /// Gradient w.r.t. the activation input, given its forward `input` and `output`.
    pub fn backward(self, input: &Tensor, output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Relu => relu_backward(input, grad_out),
            Activation::Sigmoid => sigmoid_backward(output, grad_out),
            Activation::Softmax { axis } => softmax_backward(output, grad_out, axis),
        }
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    check_same("relu backward", input, grad_out)?;
    let mut g = grad_out.clone();
    for (gv, x) in g.data_mut().iter_mut().zip(input.data()) {
        if *x <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = sigmoid_scalar(*v));
    out
}

pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    check_same("sigmoid backward", output, grad_out)?;
    let mut g = grad_out.clone();
    for (gv, y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv *= y * (1.0 - y);
    }
    Ok(g)
}

/// (outer, axis length, inner) strides for reducing along `axis`.
fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape("softmax axis", shape, &[axis]));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

pub fn softmax(input: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = axis_layout(input.shape(), axis)?;
    let mut out = input.clone();
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| data[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for k in 0..len {
                let e = libm::exp(data[at(k)] - max);
                data[at(k)] = e;
                sum += e;
            }
            for k in 0..len {
                data[at(k)] /= sum;
            }
        }
    }
    Ok(out)
}

/// `dx = y ⊙ (g − Σ g⊙y)` along the axis.
pub fn softmax_backward(output: &Tensor, grad_out: &Tensor, axis: usize) -> Result<Tensor> {
    check_same("softmax backward", output, grad_out)?;
    let (outer, len, inner) = axis_layout(output.shape(), axis)?;
    let y = output.data();
    let mut g = grad_out.clone();
    let gd = g.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let dot: f64 = (0..len).map(|k| gd[at(k)] * y[at(k)]).sum();
            for k in 0..len {
                gd[at(k)] = y[at(k)] * (gd[at(k)] - dot);
            }
        }
    }
    Ok(g)
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}
