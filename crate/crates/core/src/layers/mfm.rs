//! Max feature map: channel axis (axis 1) split in two halves, elementwise
//! max. Ties resolve to the first half, in both passes.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape("mfm", shape, &[0, 0]));
    }
    let channels = shape[1];
    if !channels.is_multiple_of(2) {
        return Err(Error::OddChannels { channels });
    }
    let inner = shape[2..].iter().product();
    Ok((shape[0], channels / 2, inner))
}

/// `out[b, i, ..] = max(in[b, i, ..], in[b, i + k, ..])` for `i < k`.
pub fn mfm(input: &Tensor) -> Result<Tensor> {
    let (batch, half, inner) = layout(input.shape())?;
    let x = input.data();
    let mut data = Vec::with_capacity(x.len() / 2);
    for b in 0..batch {
        let base = b * 2 * half * inner;
        for i in 0..half * inner {
            let lo = x[base + i];
            let hi = x[base + half * inner + i];
            data.push(if lo >= hi { lo } else { hi });
        }
    }
    let mut shape = input.shape().to_vec();
    shape[1] = half;
    Tensor::new(&shape, data)
}

pub fn mfm_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (batch, half, inner) = layout(input.shape())?;
    if grad_out.len() * 2 != input.len() || grad_out.shape()[0] != batch {
        return Err(Error::shape("mfm backward", grad_out.shape(), input.shape()));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut grad_in = Tensor::zeros(input.shape());
    let gi = grad_in.data_mut();
    for b in 0..batch {
        let base = b * 2 * half * inner;
        let gbase = b * half * inner;
        for i in 0..half * inner {
            let lo = base + i;
            let hi = base + half * inner + i;
            let target = if x[lo] >= x[hi] { lo } else { hi };
            gi[target] = g[gbase + i];
        }
    }
    Ok(grad_in)
}
