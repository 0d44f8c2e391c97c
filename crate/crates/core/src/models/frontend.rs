use alloc::vec::Vec;
use rand::Rng;

use super::encoder::{Encoder, EncoderCache, EncoderConfig};
use crate::error::{Error, Result};
use crate::layers::{join, sigmoid_scalar, softmax, Dense, Init, Param, Parameterized};
use crate::loss::{bce_logits, cce, LossReport};
use crate::tensor::Tensor;

/// Which heads a front-end trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrontendTask {
    /// Speaker identification only (the SV system).
    Sid,
    /// Presentation attack detection only.
    Pad,
    /// Both heads on one shared encoder.
    Mtl,
}

impl FrontendTask {
    pub fn as_str(self) -> &'static str {
        match self {
            FrontendTask::Sid => "sid",
            FrontendTask::Pad => "pad",
            FrontendTask::Mtl => "mtl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sid" => Ok(FrontendTask::Sid),
            "pad" => Ok(FrontendTask::Pad),
            "mtl" => Ok(FrontendTask::Mtl),
            other => Err(Error::Config(alloc::format!("unknown front-end task `{other}`"))),
        }
    }

    fn has_sid(self) -> bool {
        self != FrontendTask::Pad
    }

    fn has_pad(self) -> bool {
        self != FrontendTask::Sid
    }
}

/// Encoder with a softmax speaker head and/or a one-node sigmoid bona fide head.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendModel {
    pub task: FrontendTask,
    pub n_speakers: usize,
    pub encoder: Encoder,
    pub sid_head: Option<Dense>,
    pub pad_head: Option<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlOutput {
    pub embeddings: Tensor,
    /// `[batch × n_speakers]`.
    pub sid_logits: Option<Tensor>,
    /// Bona fide head output before the sigmoid.
    pub pad_logits: Option<Vec<f64>>,
    /// Probability that each utterance is bona fide.
    pub pad_probs: Option<Vec<f64>>,
}

impl MtlOutput {
    pub fn sid_probs(&self) -> Option<Tensor> {
        self.sid_logits.as_ref().map(|l| softmax(l, 1).expect("rank-2 logits"))
    }
}

pub struct FrontendCache {
    encoder: EncoderCache,
}

impl FrontendModel {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, task: FrontendTask, n_speakers: usize, rng: &mut R) -> Result<Self> {
        if task.has_sid() && n_speakers < 2 {
            return Err(Error::Config(alloc::format!("speaker head needs >= 2 speakers, got {n_speakers}")));
        }
        let encoder = Encoder::new(config, rng)?;
        let dim = encoder.embedding_dim();
        let sid_head = task.has_sid().then(|| Dense::new(dim, n_speakers, Init::Xavier, rng));
        let pad_head = task.has_pad().then(|| Dense::new(dim, 1, Init::Xavier, rng));
        Ok(Self {
            task,
            n_speakers,
            encoder,
            sid_head,
            pad_head,
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<(MtlOutput, FrontendCache)> {
        let (embeddings, encoder) = self.encoder.forward(input)?;
        let sid_logits = self.sid_head.as_ref().map(|h| h.forward(&embeddings)).transpose()?;
        let pad_logits = match &self.pad_head {
            Some(h) => Some(h.forward(&embeddings)?.into_data()),
            None => None,
        };
        let pad_probs = pad_logits.as_ref().map(|z| z.iter().map(|&z| sigmoid_scalar(z)).collect());
        Ok((
            MtlOutput {
                embeddings,
                sid_logits,
                pad_logits,
                pad_probs,
            },
            FrontendCache { encoder },
        ))
    }

    /// Speaker logits, bona fide probability and embeddings for a batch.
    pub fn mtl_forward(&self, input: &Tensor) -> Result<MtlOutput> {
        Ok(self.forward(input)?.0)
    }

    /// Backpropagates head gradients (and an optional extra embedding gradient) into all parameters.
    pub fn backward(
        &mut self,
        cache: &FrontendCache,
        out: &MtlOutput,
        grad_sid_logits: Option<&Tensor>,
        grad_pad_logits: Option<&[f64]>,
        grad_embeddings: Option<&Tensor>,
    ) -> Result<()> {
        let mut g_emb = match grad_embeddings {
            Some(g) => g.clone(),
            None => Tensor::zeros(out.embeddings.shape()),
        };
        if let (Some(head), Some(g)) = (self.sid_head.as_mut(), grad_sid_logits) {
            g_emb.add_assign(&head.backward(&out.embeddings, g)?)?;
        }
        if let (Some(head), Some(g)) = (self.pad_head.as_mut(), grad_pad_logits) {
            let g_logit = Tensor::matrix(g.len(), 1, g.to_vec())?;
            g_emb.add_assign(&head.backward(&out.embeddings, &g_logit)?)?;
        }
        self.encoder.backward(&cache.encoder, &g_emb)
    }

    /// Forward, task loss (CCE for speakers, BCE for bona fide, their sum for MTL) and backward.
    pub fn loss_and_backward(&mut self, input: &Tensor, speakers: &[usize], pad_targets: &[f64], backward: bool) -> Result<LossReport> {
        let (out, cache) = self.forward(input)?;
        let mut report = LossReport::new(speakers.len().max(pad_targets.len()));
        let mut g_sid = None;
        let mut g_pad = None;
        if let Some(logits) = &out.sid_logits {
            let (l, g) = cce(logits, speakers)?;
            report.sid = Some(l);
            g_sid = Some(g);
        }
        if let Some(z) = &out.pad_logits {
            let (l, g) = bce_logits(z, pad_targets)?;
            report.pad = Some(l);
            g_pad = Some(g);
        }
        report.total = report.sid.unwrap_or(0.0) + report.pad.unwrap_or(0.0);
        if backward {
            self.backward(&cache, &out, g_sid.as_ref(), g_pad.as_deref(), None)?;
        }
        Ok(report)
    }
}

impl Parameterized for FrontendModel {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_params(&join(prefix, "encoder"), f);
        if let Some(h) = self.sid_head.as_mut() {
            h.visit_params(&join(prefix, "sid_head"), f);
        }
        if let Some(h) = self.pad_head.as_mut() {
            h.visit_params(&join(prefix, "pad_head"), f);
        }
    }
}
