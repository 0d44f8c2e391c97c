use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn dims4(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match t.shape()[..] {
        [b, c, h, w] => Ok((b, c, h, w)),
        _ => Err(Error::shape(op, t.shape(), &[0, 0, 0, 0])),
    }
}

/// Non-overlapping 2×2 max pooling over `[batch, ch, H, W]`; odd trailing rows/cols are dropped.
pub fn max_pool2d(input: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = dims4(input, "max_pool2d")?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::KernelTooLarge {
            kernel: (2, 2),
            padded: (h, w),
        });
    }
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                out.push(x[base + argmax_window(x, base, w, i, j)]);
            }
        }
    }
    Tensor::new(&[b, c, oh, ow], out)
}

pub fn max_pool2d_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = dims4(input, "max_pool2d backward")?;
    let (oh, ow) = (h / 2, w / 2);
    if grad_out.shape() != [b, c, oh, ow] {
        return Err(Error::shape("max_pool2d backward", grad_out.shape(), &[b, c, oh, ow]));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut grad_in = Tensor::zeros(input.shape());
    let gi = grad_in.data_mut();
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                gi[base + argmax_window(x, base, w, i, j)] += g[(plane * oh + i) * ow + j];
            }
        }
    }
    Ok(grad_in)
}

/// Offset (within the plane) of the first maximum in the 2×2 window at `(i, j)`.
fn argmax_window(x: &[f64], base: usize, w: usize, i: usize, j: usize) -> usize {
    let candidates = [
        2 * i * w + 2 * j,
        2 * i * w + 2 * j + 1,
        (2 * i + 1) * w + 2 * j,
        (2 * i + 1) * w + 2 * j + 1,
    ];
    let mut best = candidates[0];
    for &k in &candidates[1..] {
        if x[base + k] > x[base + best] {
            best = k;
        }
    }
    best
}
