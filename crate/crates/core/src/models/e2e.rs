//! Joint model: a shared MFM-CNN encoder trained for speaker identification,
//! bona fide detection, and integrated verification of in-batch trials.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::encoder::EncoderConfig;
use super::frontend::{FrontendCache, FrontendModel, FrontendTask, MtlOutput};
use crate::error::{Error, Result};
use crate::label::SpoofLabel;
use crate::layers::{join, relu, relu_backward, softmax, Dense, Init, Param, Parameterized};
use crate::loss::{e2e_loss, E2eWeights, LossReport};
use crate::tensor::Tensor;
use crate::trials::{balance_trials, compose_inbatch_trials, PairTrial};

#[derive(Debug, Clone, PartialEq)]
pub struct E2eConfig {
    pub encoder: EncoderConfig,
    pub n_speakers: usize,
    /// Hidden widths of the trial-scoring stack.
    pub isv_hidden: Vec<usize>,
    /// Cap each trial type at the rarest present type per batch.
    pub balance_trials: bool,
    pub weights: E2eWeights,
}

impl Default for E2eConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            n_speakers: 12,
            isv_hidden: vec![256, 256],
            balance_trials: true,
            weights: E2eWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eModel {
    pub config: E2eConfig,
    pub frontend: FrontendModel,
    pub isv_hidden: Vec<Dense>,
    pub isv_out: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eOutput {
    pub mtl: MtlOutput,
    pub trials: Vec<PairTrial>,
    /// `[trials × 2]`; column 0 is acceptance.
    pub isv_logits: Tensor,
}

struct IsvCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
}

impl E2eModel {
    pub fn new<R: Rng + ?Sized>(config: E2eConfig, rng: &mut R) -> Result<Self> {
        let frontend = FrontendModel::new(config.encoder.clone(), FrontendTask::Mtl, config.n_speakers, rng)?;
        let mut width = 2 * config.encoder.embedding_dim;
        let mut isv_hidden = Vec::new();
        for &h in &config.isv_hidden {
            if h == 0 {
                return Err(Error::Config("ISV hidden layers need at least one node".into()));
            }
            isv_hidden.push(Dense::new(width, h, Init::He, rng));
            width = h;
        }
        let isv_out = Dense::new(width, 2, Init::Xavier, rng);
        Ok(Self {
            config,
            frontend,
            isv_hidden,
            isv_out,
        })
    }

    fn pair_input(embeddings: &Tensor, trials: &[PairTrial]) -> Result<Tensor> {
        let (_, dim) = embeddings.dims2()?;
        let mut data = Vec::with_capacity(trials.len() * 2 * dim);
        for t in trials {
            data.extend_from_slice(embeddings.row(t.enroll));
            data.extend_from_slice(embeddings.row(t.test));
        }
        Tensor::matrix(trials.len(), 2 * dim, data)
    }

    fn isv_forward(&self, pairs: Tensor) -> Result<(Tensor, IsvCache)> {
        let mut cache = IsvCache {
            inputs: Vec::new(),
            pre: Vec::new(),
        };
        let mut x = pairs;
        for layer in &self.isv_hidden {
            let z = layer.forward(&x)?;
            let a = relu(&z);
            cache.inputs.push(x);
            cache.pre.push(z);
            x = a;
        }
        let logits = self.isv_out.forward(&x)?;
        cache.inputs.push(x);
        Ok((logits, cache))
    }

    fn isv_backward(&mut self, cache: &IsvCache, grad_logits: &Tensor) -> Result<Tensor> {
        let n = self.isv_hidden.len();
        let mut g = self.isv_out.backward(&cache.inputs[n], grad_logits)?;
        for i in (0..n).rev() {
            g = relu_backward(&cache.pre[i], &g)?;
            g = self.isv_hidden[i].backward(&cache.inputs[i], &g)?;
        }
        Ok(g)
    }

    /// Trials the batch contributes, after optional per-type balancing.
    pub fn batch_trials(&self, speakers: &[usize], labels: &[SpoofLabel], balance_seed: u64) -> Result<Vec<PairTrial>> {
        let mut trials = compose_inbatch_trials(speakers, labels)?;
        if self.config.balance_trials {
            trials = balance_trials(&trials, balance_seed);
        }
        if trials.is_empty() {
            return Err(Error::Composition(format!("no valid trial in a batch of {}", speakers.len())));
        }
        Ok(trials)
    }

    fn forward_cached(&self, input: &Tensor, trials: Vec<PairTrial>) -> Result<(E2eOutput, FrontendCache, IsvCache)> {
        let (mtl, fcache) = self.frontend.forward(input)?;
        let pairs = Self::pair_input(&mtl.embeddings, &trials)?;
        let (isv_logits, icache) = self.isv_forward(pairs)?;
        Ok((E2eOutput { mtl, trials, isv_logits }, fcache, icache))
    }

    /// Speaker logits, bona fide probabilities and in-batch trial predictions.
    pub fn e2e_forward(&self, input: &Tensor, speakers: &[usize], labels: &[SpoofLabel], balance_seed: u64) -> Result<E2eOutput> {
        let trials = self.batch_trials(speakers, labels, balance_seed)?;
        Ok(self.forward_cached(input, trials)?.0)
    }

    /// Joint loss over a batch, with gradients accumulated when `backward` is set.
    pub fn loss_and_backward(
        &mut self,
        input: &Tensor,
        speakers: &[usize],
        labels: &[SpoofLabel],
        balance_seed: u64,
        backward: bool,
    ) -> Result<LossReport> {
        let trials = self.batch_trials(speakers, labels, balance_seed)?;
        let (out, fcache, icache) = self.forward_cached(input, trials)?;
        let pad_targets: Vec<f64> = labels.iter().map(|l| l.pad_target()).collect();
        let isv_labels: Vec<usize> = out.trials.iter().map(|t| t.kind.isv_class()).collect();
        let (report, grads) = e2e_loss(
            out.mtl.sid_logits.as_ref().expect("joint model has a speaker head"),
            speakers,
            out.mtl.pad_logits.as_ref().expect("joint model has a PAD head"),
            &pad_targets,
            &out.isv_logits,
            &isv_labels,
            self.config.weights,
        )?;
        if backward {
            let g_pairs = self.isv_backward(&icache, &grads.isv_logits)?;
            let (batch, dim) = out.mtl.embeddings.dims2()?;
            let mut g_emb = Tensor::zeros(&[batch, dim]);
            for (row, t) in out.trials.iter().enumerate() {
                let g = g_pairs.row(row);
                let ge = g_emb.data_mut();
                for k in 0..dim {
                    ge[t.enroll * dim + k] += g[k];
                    ge[t.test * dim + k] += g[dim + k];
                }
            }
            self.frontend
                .backward(&fcache, &out.mtl, Some(&grads.sid_logits), Some(&grads.pad_logits), Some(&g_emb))?;
        }
        Ok(report)
    }

    pub fn embed(&self, input: &Tensor) -> Result<Tensor> {
        self.frontend.encoder.embed(input)
    }

    /// Acceptance probability for an (enroll, test) embedding pair.
    pub fn score_pair(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        let dim = self.config.encoder.embedding_dim;
        if enroll.len() != dim || test.len() != dim {
            return Err(Error::shape("e2e score", &[enroll.len()], &[test.len()]));
        }
        let mut data = enroll.to_vec();
        data.extend_from_slice(test);
        let (logits, _) = self.isv_forward(Tensor::matrix(1, 2 * dim, data)?)?;
        Ok(softmax(&logits, 1)?.data()[0])
    }
}

impl Parameterized for E2eModel {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.frontend.visit_params(prefix, f);
        for (i, layer) in self.isv_hidden.iter_mut().enumerate() {
            layer.visit_params(&join(prefix, &format!("isv{i}")), f);
        }
        self.isv_out.visit_params(&join(prefix, "isv_out"), f);
    }
}
