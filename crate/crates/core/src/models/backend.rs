//! Modular back-end: a same-speaker branch over an embedding pair, fused
//! with a bona fide input into a two-node accept/reject decision.
//!
//! ```text
//! [e, t, e⊙t] ─ FC+ReLU ×L ─ FC(1) ─ raw ─┬─ sigmoid ───────────── sv probability
//!                                         └─ sigmoid(relu(raw)) ── s ─┐
//!                                            pad input p ─────────────┼─ FC(3→2) ─ softmax
//!                                                          s·p ───────┘
//! ```

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{join, relu, relu_backward, sigmoid_scalar, softmax, Dense, Init, Param, Parameterized};
use crate::loss::{modular_loss, LossReport};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendConfig {
    pub embedding_dim: usize,
    pub hidden_layers: usize,
    pub hidden_nodes: usize,
    /// Weight of the same-speaker BCE term.
    pub alpha: f64,
    /// Feed ground-truth bona fide labels (rather than PAD predictions) while training.
    pub use_pad_labels: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            hidden_layers: 4,
            hidden_nodes: 256,
            alpha: 20.0,
            use_pad_labels: true,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_nodes == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("back-end needs >= 1 hidden layer and positive widths".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `sigmoid(relu(x))`: 0.5 for every non-positive input, approaching 1 above.
/// Capped at the largest double below 1, where the sigmoid would round up.
pub fn shape_sv_score(x: f64) -> f64 {
    sigmoid_scalar(x.max(0.0)).min(1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendOutput {
    pub raw_sv: f64,
    pub sv_prob: f64,
    pub shaped_sv: f64,
    /// `[accept, reject]`.
    pub isv_probs: [f64; 2],
    /// Acceptance probability.
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backend {
    pub config: BackendConfig,
    pub sv_hidden: Vec<Dense>,
    pub sv_out: Dense,
    pub fusion: Dense,
}

pub struct BackendCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    raw: Vec<f64>,
    pad: Vec<f64>,
    fusion_in: Tensor,
}

/// One training or scoring example: an embedding pair and the bona fide input.
#[derive(Debug, Clone, Copy)]
pub struct BackendExample<'a> {
    pub enroll: &'a [f64],
    pub test: &'a [f64],
    pub pad: f64,
}

impl Backend {
    pub fn new<R: Rng + ?Sized>(config: BackendConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut width = 3 * config.embedding_dim;
        let mut sv_hidden = Vec::new();
        for _ in 0..config.hidden_layers {
            sv_hidden.push(Dense::new(width, config.hidden_nodes, Init::He, rng));
            width = config.hidden_nodes;
        }
        Ok(Self {
            config,
            sv_hidden,
            sv_out: Dense::new(width, 1, Init::Xavier, rng),
            fusion: Dense::new(3, 2, Init::Xavier, rng),
        })
    }

    fn check_pair(&self, enroll: &[f64], test: &[f64]) -> Result<()> {
        let dim = self.config.embedding_dim;
        if enroll.len() != test.len() || enroll.len() != dim {
            return Err(Error::shape("back-end embeddings", &[enroll.len()], &[test.len()]));
        }
        Ok(())
    }

    fn sv_input(&self, batch: &[BackendExample<'_>]) -> Result<Tensor> {
        let dim = self.config.embedding_dim;
        let mut data = Vec::with_capacity(batch.len() * 3 * dim);
        for ex in batch {
            self.check_pair(ex.enroll, ex.test)?;
            data.extend_from_slice(ex.enroll);
            data.extend_from_slice(ex.test);
            data.extend(ex.enroll.iter().zip(ex.test).map(|(a, b)| a * b));
        }
        Tensor::matrix(batch.len(), 3 * dim, data)
    }

    fn sv_forward(&self, x: Tensor) -> Result<(Vec<f64>, Vec<Tensor>, Vec<Tensor>)> {
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        let mut x = x;
        for layer in &self.sv_hidden {
            let z = layer.forward(&x)?;
            let a = relu(&z);
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        let raw = self.sv_out.forward(&x)?.into_data();
        inputs.push(x);
        Ok((raw, inputs, pre))
    }

    /// Raw same-speaker scalar and its sigmoid probability.
    pub fn backend_sv_branch(&self, enroll: &[f64], test: &[f64]) -> Result<(f64, f64)> {
        let x = self.sv_input(&[BackendExample { enroll, test, pad: 1.0 }])?;
        let (raw, _, _) = self.sv_forward(x)?;
        Ok((raw[0], sigmoid_scalar(raw[0])))
    }

    pub fn forward_batch(&self, batch: &[BackendExample<'_>]) -> Result<(Vec<BackendOutput>, BackendCache)> {
        if let Some(bad) = batch.iter().find(|ex| !(0.0..=1.0).contains(&ex.pad)) {
            return Err(Error::PadRange(bad.pad));
        }
        let x = self.sv_input(batch)?;
        let (raw, inputs, pre) = self.sv_forward(x)?;
        let mut fusion = Vec::with_capacity(batch.len() * 3);
        for (r, ex) in raw.iter().zip(batch) {
            let s = shape_sv_score(*r);
            fusion.extend_from_slice(&[s, ex.pad, s * ex.pad]);
        }
        let fusion_in = Tensor::matrix(batch.len(), 3, fusion)?;
        let probs = softmax(&self.fusion.forward(&fusion_in)?, 1)?;
        let outputs = raw
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let p = probs.row(i);
                BackendOutput {
                    raw_sv: r,
                    sv_prob: sigmoid_scalar(r),
                    shaped_sv: fusion_in.row(i)[0],
                    isv_probs: [p[0], p[1]],
                    final_score: p[0],
                }
            })
            .collect();
        let cache = BackendCache {
            inputs,
            pre,
            raw,
            pad: batch.iter().map(|ex| ex.pad).collect(),
            fusion_in,
        };
        Ok((outputs, cache))
    }

    pub fn backend_forward(&self, enroll: &[f64], test: &[f64], pad: f64) -> Result<BackendOutput> {
        Ok(self.forward_batch(&[BackendExample { enroll, test, pad }])?.0[0])
    }

    /// Backpropagates gradients w.r.t. the raw sv scalars and the fusion logits.
    pub fn backward(&mut self, cache: &BackendCache, grad_sv_raw: &[f64], grad_isv_logits: &Tensor) -> Result<()> {
        let n = cache.raw.len();
        let g_fusion = self.fusion.backward(&cache.fusion_in, grad_isv_logits)?;
        let mut g_raw = Vec::with_capacity(n);
        for i in 0..n {
            let g = g_fusion.row(i);
            let g_shaped = g[0] + g[2] * cache.pad[i];
            let r = cache.raw[i];
            let shaped = cache.fusion_in.row(i)[0];
            let through_shape = if r > 0.0 { g_shaped * shaped * (1.0 - shaped) } else { 0.0 };
            g_raw.push(through_shape + grad_sv_raw[i]);
        }
        let layers = self.sv_hidden.len();
        let mut g = self.sv_out.backward(&cache.inputs[layers], &Tensor::matrix(n, 1, g_raw)?)?;
        for i in (0..layers).rev() {
            g = relu_backward(&cache.pre[i], &g)?;
            g = self.sv_hidden[i].backward(&cache.inputs[i], &g)?;
        }
        Ok(())
    }

    /// `α·BCE(sv) + CCE(isv)` over a batch; `same_speaker` and `isv_class` are the per-example labels.
    pub fn loss_and_backward(
        &mut self,
        batch: &[BackendExample<'_>],
        same_speaker: &[f64],
        isv_class: &[usize],
        backward: bool,
    ) -> Result<(LossReport, Vec<BackendOutput>)> {
        let (outputs, cache) = self.forward_batch(batch)?;
        let logits = self.fusion.forward(&cache.fusion_in)?;
        let (report, grads) = modular_loss(&cache.raw, same_speaker, &logits, isv_class, self.config.alpha)?;
        if backward {
            self.backward(&cache, &grads.sv_logits, &grads.isv_logits)?;
        }
        Ok((report, outputs))
    }
}

impl Parameterized for Backend {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, layer) in self.sv_hidden.iter_mut().enumerate() {
            layer.visit_params(&join(prefix, &format!("sv{i}")), f);
        }
        self.sv_out.visit_params(&join(prefix, "sv_out"), f);
        self.fusion.visit_params(&join(prefix, "fusion"), f);
    }
}
