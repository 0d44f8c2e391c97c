use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::{join, Init, Param, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_a_bt, matmul_at_b_acc, Tensor};

/// 2-D cross-correlation over `[batch, ch, H, W]` with weights `[out, in, kH, kW]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
}

struct Geometry {
    batch: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let mut w = Tensor::zeros(&[out_ch, in_ch, kernel.0, kernel.1]);
        let fan_in = in_ch * kernel.0 * kernel.1;
        init.fill(&mut w, fan_in, out_ch * kernel.0 * kernel.1, rng);
        Self {
            weight: Param::new(w),
            bias: Param::new(Tensor::zeros(&[out_ch])),
            stride: stride.max(1),
            padding,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        if weight.rank() != 4 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("conv2d params", weight.shape(), bias.shape()));
        }
        Ok(Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            stride: stride.max(1),
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ws = self.weight.value.shape();
        let (kh, kw) = (ws[2], ws[3]);
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if kh > hp || kw > wp {
            return Err(Error::KernelTooLarge {
                kernel: (kh, kw),
                padded: (hp, wp),
            });
        }
        Ok(((hp - kh) / self.stride + 1, (wp - kw) / self.stride + 1))
    }

    fn geometry(&self, input: &Tensor) -> Result<Geometry> {
        let ws = self.weight.value.shape();
        let (batch, in_ch, h, w) = match input.shape()[..] {
            [b, c, h, w] => (b, c, h, w),
            _ => return Err(Error::shape("conv2d", input.shape(), ws)),
        };
        if in_ch != ws[1] {
            return Err(Error::shape("conv2d", input.shape(), ws));
        }
        let (oh, ow) = self.output_hw(h, w)?;
        Ok(Geometry {
            batch,
            in_ch,
            h,
            w,
            kh: ws[2],
            kw: ws[3],
            oh,
            ow,
        })
    }

    /// Unfolds one batch item into `[in·kH·kW × oH·oW]`.
    fn im2col(&self, g: &Geometry, x: &[f64], col: &mut [f64]) {
        let p = self.padding as isize;
        let s = self.stride;
        let positions = g.positions();
        for c in 0..g.in_ch {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (c * g.kh + ki) * g.kw + kj;
                    let dst = &mut col[row * positions..(row + 1) * positions];
                    for oi in 0..g.oh {
                        let yi = (oi * s + ki) as isize - p;
                        for oj in 0..g.ow {
                            let xj = (oj * s + kj) as isize - p;
                            dst[oi * g.ow + oj] = if yi >= 0 && (yi as usize) < g.h && xj >= 0 && (xj as usize) < g.w {
                                x[(c * g.h + yi as usize) * g.w + xj as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im_acc(&self, g: &Geometry, col: &[f64], dx: &mut [f64]) {
        let p = self.padding as isize;
        let s = self.stride;
        let positions = g.positions();
        for c in 0..g.in_ch {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let row = (c * g.kh + ki) * g.kw + kj;
                    let src = &col[row * positions..(row + 1) * positions];
                    for oi in 0..g.oh {
                        let yi = (oi * s + ki) as isize - p;
                        if yi < 0 || yi as usize >= g.h {
                            continue;
                        }
                        for oj in 0..g.ow {
                            let xj = (oj * s + kj) as isize - p;
                            if xj >= 0 && (xj as usize) < g.w {
                                dx[(c * g.h + yi as usize) * g.w + xj as usize] += src[oi * g.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let g = self.geometry(input)?;
        let out_ch = self.out_channels();
        let (patch, positions) = (g.patch(), g.positions());
        let in_size = g.in_ch * g.h * g.w;
        let mut col = vec![0.0; patch * positions];
        let mut out = Vec::with_capacity(g.batch * out_ch * positions);
        let mut item = vec![0.0; out_ch * positions];
        for b in 0..g.batch {
            self.im2col(&g, &input.data()[b * in_size..(b + 1) * in_size], &mut col);
            matmul(self.weight.value.data(), &col, out_ch, patch, positions, &mut item);
            for (o, chunk) in item.chunks_mut(positions).enumerate() {
                let bias = self.bias.value.data()[o];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
            out.extend_from_slice(&item);
        }
        Tensor::new(&[g.batch, out_ch, g.oh, g.ow], out)
    }

    pub fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let g = self.geometry(input)?;
        let out_ch = self.out_channels();
        if grad_out.shape() != [g.batch, out_ch, g.oh, g.ow] {
            return Err(Error::shape("conv2d backward", grad_out.shape(), &[g.batch, out_ch, g.oh, g.ow]));
        }
        let (patch, positions) = (g.patch(), g.positions());
        let in_size = g.in_ch * g.h * g.w;
        let mut col = vec![0.0; patch * positions];
        let mut dcol = vec![0.0; patch * positions];
        let mut dw = vec![0.0; out_ch * patch];
        let mut grad_in = Tensor::zeros(input.shape());
        for b in 0..g.batch {
            let go = &grad_out.data()[b * out_ch * positions..(b + 1) * out_ch * positions];
            self.im2col(&g, &input.data()[b * in_size..(b + 1) * in_size], &mut col);
            matmul_a_bt(go, &col, out_ch, positions, patch, &mut dw);
            for (acc, d) in self.weight.grad.data_mut().iter_mut().zip(&dw) {
                *acc += d;
            }
            for (o, chunk) in go.chunks(positions).enumerate() {
                self.bias.grad.data_mut()[o] += chunk.iter().sum::<f64>();
            }
            dcol.iter_mut().for_each(|v| *v = 0.0);
            matmul_at_b_acc(self.weight.value.data(), go, out_ch, patch, positions, &mut dcol);
            self.col2im_acc(&g, &dcol, &mut grad_in.data_mut()[b * in_size..(b + 1) * in_size]);
        }
        Ok(grad_in)
    }
}

impl Parameterized for Conv2d {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, stream};

    #[test]
    fn unit_kernel_is_identity() {
        let conv = Conv2d::from_parts(Tensor::full(&[1, 1, 1, 1], 1.0), Tensor::zeros(&[1]), 1, 0).unwrap();
        let x = Tensor::new(&[1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_sums() {
        let conv = Conv2d::from_parts(Tensor::full(&[1, 1, 2, 2], 1.0), Tensor::zeros(&[1]), 1, 0).unwrap();
        let y = conv.forward(&Tensor::full(&[1, 1, 2, 2], 1.0)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn kernel_larger_than_padded_input() {
        let conv = Conv2d::from_parts(Tensor::zeros(&[1, 1, 5, 5]), Tensor::zeros(&[1]), 1, 1).unwrap();
        let err = conv.forward(&Tensor::zeros(&[1, 1, 2, 2])).unwrap_err();
        assert_eq!(
            err,
            Error::KernelTooLarge {
                kernel: (5, 5),
                padded: (4, 4)
            }
        );
    }

    fn naive(x: &[f64], w: &[f64], bias: &[f64], dims: [usize; 8]) -> Vec<f64> {
        let [b, ci, h, wd, co, k, s, p] = dims;
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (wd + 2 * p - k) / s + 1;
        let mut out = vec![0.0; b * co * oh * ow];
        for n in 0..b {
            for o in 0..co {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = bias[o];
                        for c in 0..ci {
                            for u in 0..k {
                                for v in 0..k {
                                    let y = (i * s + u) as isize - p as isize;
                                    let xx = (j * s + v) as isize - p as isize;
                                    if y >= 0 && (y as usize) < h && xx >= 0 && (xx as usize) < wd {
                                        acc += x[((n * ci + c) * h + y as usize) * wd + xx as usize]
                                            * w[((o * ci + c) * k + u) * k + v];
                                    }
                                }
                            }
                        }
                        out[((n * co + o) * oh + i) * ow + j] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_loop_oracle() {
        let mut rng = stream(5, 0);
        for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
            let x: Vec<f64> = (0..2 * 3 * 5 * 5).map(|_| normal(&mut rng)).collect();
            let w: Vec<f64> = (0..4 * 3 * 3 * 3).map(|_| normal(&mut rng)).collect();
            let b: Vec<f64> = (0..4).map(|_| normal(&mut rng)).collect();
            let conv = Conv2d::from_parts(
                Tensor::new(&[4, 3, 3, 3], w.clone()).unwrap(),
                Tensor::new(&[4], b.clone()).unwrap(),
                stride,
                pad,
            )
            .unwrap();
            let y = conv.forward(&Tensor::new(&[2, 3, 5, 5], x.clone()).unwrap()).unwrap();
            let expect = naive(&x, &w, &b, [2, 3, 5, 5, 4, 3, stride, pad]);
            let oh = (5 + 2 * pad - 3) / stride + 1;
            assert_eq!(y.shape(), &[2, 4, oh, oh]);
            for (a, e) in y.data().iter().zip(&expect) {
                assert!((a - e).abs() < 1e-10);
            }
        }
    }
}
