//! Seeded training loops.
//!
//! Each step draws its batch from an RNG derived from `(seed, step)` alone,
//! so a run resumed from saved parameters and optimizer state continues
//! exactly as an uninterrupted one would.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::label::SpoofLabel;
use crate::layers::Parameterized;
use crate::loss::LossReport;
use crate::models::{Backend, BackendExample, E2eModel, Encoder, FrontendModel, PadClassifier};
use crate::optim::{Amsgrad, AmsgradConfig};
use crate::rng::{partial_shuffle, stream, IsvRng, STREAM_BATCH};
use crate::synth::SynthSplit;
use crate::tensor::Tensor;
use crate::trials::{classify_pair, TrialType};

/// RNG for the batch of `step`.
pub fn batch_rng(seed: u64, step: u64) -> IsvRng {
    stream(seed ^ step.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15), STREAM_BATCH)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    /// 1-based index of the completed step.
    pub step: u64,
    pub report: LossReport,
    /// Bona fide inputs fed to the back-end fusion layer (back-end steps only).
    pub pad_inputs: Vec<f64>,
    /// Matching ground-truth bona fide labels (back-end steps only).
    pub pad_labels: Vec<f64>,
}

impl StepLog {
    fn new(step: u64, report: LossReport) -> Self {
        Self {
            step,
            report,
            pad_inputs: Vec::new(),
            pad_labels: Vec::new(),
        }
    }
}

/// A model with its optimizer and run seed.
#[derive(Debug, Clone)]
pub struct Trainer<M> {
    pub model: M,
    pub optimizer: Amsgrad,
    pub seed: u64,
}

impl<M: Parameterized> Trainer<M> {
    pub fn new(model: M, optimizer: AmsgradConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            model,
            optimizer: Amsgrad::new(optimizer)?,
            seed,
        })
    }

    /// Steps completed so far.
    pub fn step(&self) -> u64 {
        self.optimizer.step_count()
    }

    /// Zeroes gradients, runs `f` on this step's RNG, checks the loss and updates.
    pub fn apply<F>(&mut self, f: F) -> Result<StepLog>
    where
        F: FnOnce(&mut M, &mut IsvRng) -> Result<LossReport>,
    {
        let mut rng = batch_rng(self.seed, self.step());
        self.model.zero_grad();
        let report = f(&mut self.model, &mut rng)?;
        if !report.components_finite() || !report.total.is_finite() {
            return Err(Error::Divergence { param: String::from("loss") });
        }
        self.optimizer.step(&mut self.model)?;
        Ok(StepLog::new(self.step(), report))
    }
}

/// Utterance features with speaker indices and spoof labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<FeatureMatrix>,
    pub speakers: Vec<usize>,
    pub labels: Vec<SpoofLabel>,
}

impl FeatureSet {
    pub fn from_split(split: &SynthSplit<FeatureMatrix>) -> Self {
        Self {
            features: split.items.iter().map(|i| i.data.clone()).collect(),
            speakers: split.items.iter().map(|i| i.speaker_index).collect(),
            labels: split.items.iter().map(|i| i.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn gather(&self, encoder: &Encoder, idx: &[usize]) -> Result<(Tensor, Vec<usize>, Vec<SpoofLabel>)> {
        let feats: Vec<&FeatureMatrix> = idx.iter().map(|&i| &self.features[i]).collect();
        Ok((
            encoder.batch_input(&feats)?,
            idx.iter().map(|&i| self.speakers[i]).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        ))
    }
}

fn sample_indices(n: usize, batch: usize, rng: &mut IsvRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let take = batch.min(n);
    partial_shuffle(&mut idx, take, rng);
    idx.truncate(take);
    idx
}

/// One front-end step on a uniformly drawn batch.
pub fn frontend_step(trainer: &mut Trainer<FrontendModel>, data: &FeatureSet, batch: usize) -> Result<StepLog> {
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    trainer.apply(|model, rng| {
        let idx = sample_indices(data.len(), batch, rng);
        let (x, spk, labels) = data.gather(&model.encoder, &idx)?;
        let pad: Vec<f64> = labels.iter().map(|l| l.pad_target()).collect();
        model.loss_and_backward(&x, &spk, &pad, true)
    })
}

/// Indices for a joint-model batch: `speakers` speakers with `per_speaker`
/// utterances each, the first of every group bona fide.
pub fn e2e_batch_indices(data: &FeatureSet, speakers: usize, per_speaker: usize, rng: &mut IsvRng) -> Result<Vec<usize>> {
    let n_spk = data.speakers.iter().copied().max().map_or(0, |m| m + 1);
    let mut spk_order: Vec<usize> = (0..n_spk).collect();
    partial_shuffle(&mut spk_order, speakers.min(n_spk), rng);
    let mut idx = Vec::with_capacity(speakers * per_speaker);
    for &s in spk_order.iter().take(speakers) {
        let own: Vec<usize> = (0..data.len()).filter(|&i| data.speakers[i] == s).collect();
        let bona: Vec<usize> = own.iter().copied().filter(|&i| data.labels[i].is_bonafide()).collect();
        if bona.is_empty() {
            return Err(Error::Composition(alloc::format!("speaker {s} has no bona fide utterance")));
        }
        let first = bona[rng.random_range(0..bona.len())];
        idx.push(first);
        let mut rest: Vec<usize> = own.into_iter().filter(|&i| i != first).collect();
        let take = (per_speaker - 1).min(rest.len());
        partial_shuffle(&mut rest, take, rng);
        idx.extend_from_slice(&rest[..take]);
    }
    Ok(idx)
}

/// One joint-model step on a speaker-grouped batch.
pub fn e2e_step(trainer: &mut Trainer<E2eModel>, data: &FeatureSet, speakers: usize, per_speaker: usize) -> Result<StepLog> {
    trainer.apply(|model, rng| {
        let idx = e2e_batch_indices(data, speakers, per_speaker, rng)?;
        let (x, spk, labels) = data.gather(&model.frontend.encoder, &idx)?;
        let balance_seed = rng.random();
        model.loss_and_backward(&x, &spk, &labels, balance_seed, true)
    })
}

/// One bona fide classifier step on fixed embeddings.
pub fn pad_step(trainer: &mut Trainer<PadClassifier>, embeddings: &[Vec<f64>], targets: &[f64], batch: usize) -> Result<StepLog> {
    if embeddings.is_empty() || embeddings.len() != targets.len() {
        return Err(Error::Config("bona fide classifier needs one target per embedding".into()));
    }
    trainer.apply(|model, rng| {
        let idx = sample_indices(embeddings.len(), batch, rng);
        let x = rows_tensor(embeddings, &idx)?;
        let t: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
        model.loss_and_backward(&x, &t, true)
    })
}

fn rows_tensor(rows: &[Vec<f64>], idx: &[usize]) -> Result<Tensor> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        if rows[i].len() != dim {
            return Err(Error::shape("embedding rows", &[dim], &[rows[i].len()]));
        }
        data.extend_from_slice(&rows[i]);
    }
    Tensor::matrix(idx.len(), dim, data)
}

/// Training pairs for the back-end, grouped by trial type.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendData {
    pub embeddings: Vec<Vec<f64>>,
    /// Value fed as the bona fide input for each utterance when it is a test.
    pub pad_input: Vec<f64>,
    pub pad_labels: Vec<f64>,
    pub pairs: [Vec<(usize, usize)>; 3],
}

impl BackendData {
    /// All valid pairs over utterances; `pad_input` defaults to the labels.
    pub fn new(embeddings: Vec<Vec<f64>>, speakers: &[usize], labels: &[SpoofLabel]) -> Result<Self> {
        if embeddings.len() != speakers.len() || speakers.len() != labels.len() {
            return Err(Error::Config("embeddings, speakers and labels differ in length".into()));
        }
        let mut pairs: [Vec<(usize, usize)>; 3] = Default::default();
        for e in (0..labels.len()).filter(|&i| labels[i].is_bonafide()) {
            for t in 0..labels.len() {
                if t == e {
                    continue;
                }
                if let Some(kind) = classify_pair((&speakers[e], labels[e]), (&speakers[t], labels[t])) {
                    pairs[kind.index()].push((e, t));
                }
            }
        }
        if pairs.iter().any(Vec::is_empty) {
            return Err(Error::InsufficientTrials("back-end training needs all three trial types".into()));
        }
        let pad_labels: Vec<f64> = labels.iter().map(|l| l.pad_target()).collect();
        Ok(Self {
            embeddings,
            pad_input: pad_labels.clone(),
            pad_labels,
            pairs,
        })
    }

    /// Replaces the labels fed to the fusion layer with predicted probabilities.
    pub fn with_pad_predictions(mut self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.embeddings.len() {
            return Err(Error::Config("one bona fide prediction per utterance required".into()));
        }
        self.pad_input = probs;
        Ok(self)
    }

    /// A type-balanced batch of `(enroll, test, type)` drawn with replacement.
    pub fn sample(&self, batch: usize, rng: &mut IsvRng) -> Vec<(usize, usize, TrialType)> {
        let per = (batch / 3).max(1);
        let mut out = Vec::with_capacity(3 * per);
        for kind in TrialType::ALL {
            let list = &self.pairs[kind.index()];
            for _ in 0..per {
                let (e, t) = list[rng.random_range(0..list.len())];
                out.push((e, t, kind));
            }
        }
        out
    }
}

/// One back-end step: α-weighted same-speaker BCE plus the fusion CCE.
pub fn backend_step(trainer: &mut Trainer<Backend>, data: &BackendData, batch: usize) -> Result<StepLog> {
    let mut fed = Vec::new();
    let mut truth = Vec::new();
    let mut log = trainer.apply(|model, rng| {
        let picked = data.sample(batch, rng);
        let examples: Vec<BackendExample<'_>> = picked
            .iter()
            .map(|&(e, t, _)| BackendExample {
                enroll: &data.embeddings[e],
                test: &data.embeddings[t],
                pad: data.pad_input[t],
            })
            .collect();
        fed = examples.iter().map(|ex| ex.pad).collect();
        truth = picked.iter().map(|&(_, t, _)| data.pad_labels[t]).collect();
        let same: Vec<f64> = picked.iter().map(|p| if p.2.same_speaker() { 1.0 } else { 0.0 }).collect();
        let isv: Vec<usize> = picked.iter().map(|p| p.2.isv_class()).collect();
        Ok(model.loss_and_backward(&examples, &same, &isv, true)?.0)
    })?;
    log.pad_inputs = fed;
    log.pad_labels = truth;
    Ok(log)
}

/// Embeddings for many utterances, computed in chunks.
pub fn embed_all(encoder: &Encoder, features: &[FeatureMatrix], chunk: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(features.len());
    for part in features.chunks(chunk.max(1)) {
        let refs: Vec<&FeatureMatrix> = part.iter().collect();
        let emb = encoder.embed(&encoder.batch_input(&refs)?)?;
        out.extend((0..part.len()).map(|i| emb.row(i).to_vec()));
    }
    Ok(out)
}

/// Bona fide probabilities from a front-end with a PAD head.
pub fn frontend_pad_probs(model: &FrontendModel, features: &[FeatureMatrix], chunk: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(features.len());
    for part in features.chunks(chunk.max(1)) {
        let refs: Vec<&FeatureMatrix> = part.iter().collect();
        let o = model.mtl_forward(&model.encoder.batch_input(&refs)?)?;
        let p = o
            .pad_probs
            .ok_or_else(|| Error::Config(alloc::format!("{} front-end has no PAD head", model.task.as_str())))?;
        out.extend(p);
    }
    Ok(out)
}

/// Bona fide probabilities from an embedding-level classifier.
pub fn classifier_pad_probs(model: &PadClassifier, embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    if embeddings.is_empty() {
        return Ok(Vec::new());
    }
    let idx: Vec<usize> = (0..embeddings.len()).collect();
    model.predict(&rows_tensor(embeddings, &idx)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BackendConfig, EncoderConfig, FrontendTask};
    use crate::synth::{synth_embedding_world, synth_feature_world, SynthWorldConfig};
    use alloc::vec;

    fn tiny_world() -> SynthWorldConfig {
        SynthWorldConfig {
            speakers_train: 3,
            speakers_eval: 2,
            bonafide_per_speaker: 3,
            replay_per_speaker: 3,
            ..Default::default()
        }
    }

    fn tiny_encoder() -> EncoderConfig {
        EncoderConfig {
            frames: 16,
            block_channels: vec![4, 4],
            pool: vec![true, true],
            embedding_dim: 8,
            ..Default::default()
        }
    }

    #[test]
    fn batch_rng_depends_only_on_seed_and_step() {
        let a: u64 = batch_rng(5, 9).random();
        let b: u64 = batch_rng(5, 9).random();
        let c: u64 = batch_rng(5, 10).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_run_equals_straight_run() {
        let w = synth_feature_world(&tiny_world()).unwrap();
        let data = FeatureSet::from_split(&w.train);
        let model = FrontendModel::new(tiny_encoder(), FrontendTask::Mtl, 3, &mut stream(1, 1)).unwrap();
        let mut straight = Trainer::new(model.clone(), AmsgradConfig::default(), 7).unwrap();
        let mut first = Trainer::new(model, AmsgradConfig::default(), 7).unwrap();
        let mut logs_a = Vec::new();
        for _ in 0..4 {
            logs_a.push(frontend_step(&mut straight, &data, 6).unwrap());
        }
        let mut logs_b = Vec::new();
        for _ in 0..2 {
            logs_b.push(frontend_step(&mut first, &data, 6).unwrap());
        }
        let mut resumed = Trainer {
            model: first.model.clone(),
            optimizer: Amsgrad::from_state(AmsgradConfig::default(), first.step(), first.optimizer.moments().to_vec()).unwrap(),
            seed: 7,
        };
        for _ in 0..2 {
            logs_b.push(frontend_step(&mut resumed, &data, 6).unwrap());
        }
        assert_eq!(logs_a, logs_b);
        assert_eq!(straight.model, resumed.model);
    }

    #[test]
    fn e2e_batches_group_speakers() {
        let w = synth_feature_world(&tiny_world()).unwrap();
        let data = FeatureSet::from_split(&w.train);
        let idx = e2e_batch_indices(&data, 2, 3, &mut stream(0, 0)).unwrap();
        assert_eq!(idx.len(), 6);
        assert!(data.labels[idx[0]].is_bonafide() && data.labels[idx[3]].is_bonafide());
        assert_eq!(data.speakers[idx[0]], data.speakers[idx[2]]);
    }

    #[test]
    fn backend_feeds_labels_by_default() {
        let w = synth_embedding_world(&tiny_world()).unwrap();
        let emb: Vec<Vec<f64>> = w.train.items.iter().map(|i| i.data.clone()).collect();
        let spk: Vec<usize> = w.train.items.iter().map(|i| i.speaker_index).collect();
        let labels: Vec<SpoofLabel> = w.train.items.iter().map(|i| i.label).collect();
        let data = BackendData::new(emb, &spk, &labels).unwrap();
        let cfg = BackendConfig {
            hidden_nodes: 8,
            hidden_layers: 1,
            ..Default::default()
        };
        let model = Backend::new(cfg, &mut stream(0, 1)).unwrap();
        let mut t = Trainer::new(model, AmsgradConfig::default(), 3).unwrap();
        let log = backend_step(&mut t, &data, 9).unwrap();
        assert_eq!(log.pad_inputs, log.pad_labels);
        assert_eq!(log.pad_inputs.len(), 9);
        let total = log.report.alpha.unwrap() * log.report.sv.unwrap() + log.report.isv.unwrap();
        assert!((log.report.total - total).abs() < 1e-12);
    }
}
