//! Synthetic speaker worlds for desk-scale experiments.
//!
//! Both worlds draw a set of training speakers and a disjoint set of
//! evaluation speakers. Every speaker records bona fide utterances and has
//! some of them replayed through one of a few playback devices.
//!
//! In the embedding world a vector splits into a speaker subspace and a
//! channel subspace. Bona fide utterances carry a random session channel
//! vector; replays carry a device vector of the same length pointing near a
//! shared replay axis. Cosine scoring therefore sees the speaker and not the
//! playback, while a classifier can learn the replay axis.
//!
//! In the feature world each speaker owns a few smooth spectral templates
//! that are sequenced over time. Replay attenuates spectral dynamics in a
//! band-dependent, device-specific way and smears frames in time. Bona fide
//! sessions vary their per-band dynamics gain too, so the cue that reveals
//! replay also perturbs the speaker pattern.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{mean_normalize, FeatureMatrix, BANDS};
use crate::label::SpoofLabel;
use crate::rng::{normal, partial_shuffle, stream, uniform, STREAM_WORLD};
use crate::trials::{classify_pair, Trial};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorldConfig {
    pub speakers_train: usize,
    pub speakers_eval: usize,
    /// Embedding width (embedding world only).
    pub dim: usize,
    /// Trailing dimensions reserved for channel effects (embedding world only).
    pub channel_dims: usize,
    /// Norm of speaker centroids, or amplitude of spectral templates.
    pub speaker_spread: f64,
    pub noise: f64,
    /// Replay artifact strength; 0 makes replay indistinguishable from bona fide.
    pub channel_shift: f64,
    /// Scale of the speaker component kept by a replay.
    pub replay_preservation: f64,
    pub devices: usize,
    pub bonafide_per_speaker: usize,
    pub replay_per_speaker: usize,
    /// Frames per utterance (feature world only).
    pub frames: usize,
    /// Spectral templates per speaker (feature world only).
    pub phones: usize,
    pub seed: u64,
}

impl Default for SynthWorldConfig {
    fn default() -> Self {
        Self {
            speakers_train: 12,
            speakers_eval: 6,
            dim: 64,
            channel_dims: 16,
            speaker_spread: 1.0,
            noise: 0.2,
            channel_shift: 1.0,
            replay_preservation: 1.0,
            devices: 3,
            bonafide_per_speaker: 12,
            replay_per_speaker: 12,
            frames: 32,
            phones: 4,
            seed: 0,
        }
    }
}

impl SynthWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.speakers_train < 2 || self.speakers_eval < 2 {
            return bad(format!(
                "need >= 2 speakers per split, got train={} eval={}",
                self.speakers_train, self.speakers_eval
            ));
        }
        if self.bonafide_per_speaker == 0 {
            return bad("bonafide_per_speaker must be positive".into());
        }
        if self.replay_per_speaker > 0 && self.devices == 0 {
            return bad("replays need at least one device".into());
        }
        if self.channel_dims == 0 || self.channel_dims >= self.dim {
            return bad(format!("channel_dims must be in 1..dim, got {} of {}", self.channel_dims, self.dim));
        }
        if self.frames == 0 || self.phones == 0 {
            return bad("frames and phones must be positive".into());
        }
        for (name, v) in [
            ("speaker_spread", self.speaker_spread),
            ("noise", self.noise),
            ("channel_shift", self.channel_shift),
            ("replay_preservation", self.replay_preservation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.speaker_spread == 0.0 {
            return bad("speaker_spread must be > 0".into());
        }
        Ok(())
    }

    fn speaker_dims(&self) -> usize {
        self.dim - self.channel_dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem<T> {
    pub id: String,
    pub speaker: String,
    pub speaker_index: usize,
    pub label: SpoofLabel,
    /// Playback device of a replay.
    pub device: Option<usize>,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplit<T> {
    pub speakers: Vec<String>,
    /// Per-speaker centroid (embeddings) or mean template (features).
    pub centroids: Vec<Vec<f64>>,
    pub items: Vec<SynthItem<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld<T> {
    pub config: SynthWorldConfig,
    pub train: SynthSplit<T>,
    pub eval: SynthSplit<T>,
}

pub type EmbeddingWorld = SynthWorld<Vec<f64>>;
pub type FeatureWorld = SynthWorld<FeatureMatrix>;

impl<T> SynthSplit<T> {
    pub fn count(&self, label: SpoofLabel) -> usize {
        self.items.iter().filter(|i| i.label == label).count()
    }

    /// Every valid (bona fide enroll, test) pair, optionally capped per type.
    pub fn trials(&self, cap_per_type: Option<usize>, seed: u64) -> Vec<Trial> {
        let mut by_type: [Vec<Trial>; 3] = Default::default();
        for e in self.items.iter().filter(|i| i.label.is_bonafide()) {
            for t in &self.items {
                if e.id == t.id {
                    continue;
                }
                if let Some(kind) = classify_pair((e.speaker.as_str(), e.label), (t.speaker.as_str(), t.label)) {
                    by_type[kind.index()].push(Trial {
                        enroll: e.id.clone(),
                        test: t.id.clone(),
                        kind,
                    });
                }
            }
        }
        let mut rng = stream(seed, STREAM_WORLD);
        let mut out = Vec::new();
        for mut list in by_type {
            if let Some(cap) = cap_per_type {
                if list.len() > cap {
                    partial_shuffle(&mut list, cap, &mut rng);
                    list.truncate(cap);
                }
            }
            out.extend(list);
        }
        out
    }

    pub fn get(&self, id: &str) -> Option<&SynthItem<T>> {
        self.items.iter().find(|i| i.id == id)
    }
}

impl<T> SynthWorld<T> {
    /// Speaker-id sets of the two splits share no element.
    pub fn splits_disjoint(&self) -> bool {
        self.train.speakers.iter().all(|s| !self.eval.speakers.contains(s))
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, norm: f64) -> Vec<f64> {
    let sd = norm / libm::sqrt(len as f64);
    (0..len).map(|_| sd * normal(rng)).collect()
}

fn normalized(mut v: Vec<f64>, norm: f64) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / n);
    }
    v
}

fn speaker_name(index: usize) -> String {
    format!("spk{index:03}")
}

fn utt_id(speaker: &str, label: SpoofLabel, n: usize) -> String {
    let tag = if label.is_bonafide() { "bf" } else { "rp" };
    format!("{speaker}_{tag}{n:03}")
}

/// Embedding-level world: labeled vectors for disjoint train and eval speakers.
pub fn synth_embedding_world(config: &SynthWorldConfig) -> Result<EmbeddingWorld> {
    config.validate()?;
    let mut rng = stream(config.seed, STREAM_WORLD);
    let s_dims = config.speaker_dims();
    let k = config.channel_dims;
    let replay_axis = normalized(gaussian_vec(&mut rng, k, 1.0), 1.0);
    let devices: Vec<Vec<f64>> = (0..config.devices)
        .map(|_| {
            let jitter = gaussian_vec(&mut rng, k, 0.5);
            let dir: Vec<f64> = replay_axis.iter().zip(&jitter).map(|(a, j)| a + j).collect();
            normalized(dir, config.channel_shift)
        })
        .collect();

    let make_split = |first: usize, count: usize, rng: &mut crate::rng::IsvRng| {
        let mut split = SynthSplit {
            speakers: Vec::new(),
            centroids: Vec::new(),
            items: Vec::new(),
        };
        for si in 0..count {
            let name = speaker_name(first + si);
            let mut centroid = gaussian_vec(rng, s_dims, config.speaker_spread);
            centroid.resize(config.dim, 0.0);
            for n in 0..config.bonafide_per_speaker {
                let mut v: Vec<f64> = gaussian_vec(rng, config.dim, config.noise);
                v.iter_mut().zip(&centroid).for_each(|(x, c)| *x += c);
                let session = gaussian_vec(rng, k, config.channel_shift);
                v[s_dims..].iter_mut().zip(&session).for_each(|(x, c)| *x += c);
                split.items.push(SynthItem {
                    id: utt_id(&name, SpoofLabel::Bonafide, n),
                    speaker: name.clone(),
                    speaker_index: si,
                    label: SpoofLabel::Bonafide,
                    device: None,
                    data: v,
                });
            }
            for n in 0..config.replay_per_speaker {
                let device = rng.random_range(0..config.devices);
                let mut v: Vec<f64> = gaussian_vec(rng, config.dim, config.noise);
                v.iter_mut()
                    .zip(&centroid)
                    .for_each(|(x, c)| *x += config.replay_preservation * c);
                v[s_dims..].iter_mut().zip(&devices[device]).for_each(|(x, c)| *x += c);
                split.items.push(SynthItem {
                    id: utt_id(&name, SpoofLabel::Replay, n),
                    speaker: name.clone(),
                    speaker_index: si,
                    label: SpoofLabel::Replay,
                    device: Some(device),
                    data: v,
                });
            }
            split.speakers.push(name);
            split.centroids.push(centroid);
        }
        split
    };
    let train = make_split(0, config.speakers_train, &mut rng);
    let eval = make_split(config.speakers_train, config.speakers_eval, &mut rng);
    Ok(SynthWorld {
        config: config.clone(),
        train,
        eval,
    })
}

/// Smooth random curve over the bands: a sum of three Gaussian bumps.
fn smooth_curve<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let mut curve = vec![0.0; BANDS];
    for _ in 0..3 {
        let amp = normal(rng);
        let centre = uniform(rng, 0.0, BANDS as f64);
        let width = uniform(rng, 3.0, 8.0);
        for (b, c) in curve.iter_mut().enumerate() {
            let d = (b as f64 - centre) / width;
            *c += amp * libm::exp(-0.5 * d * d);
        }
    }
    curve
}

/// Template sequence plus frame noise, before any channel effect.
fn clean_frames<R: Rng + ?Sized>(rng: &mut R, templates: &[Vec<f64>], frames: usize, noise: f64) -> Vec<f64> {
    let mut data = Vec::with_capacity(frames * BANDS);
    let mut t = 0;
    while t < frames {
        let phone = &templates[rng.random_range(0..templates.len())];
        let len = rng.random_range(3..=6).min(frames - t);
        for _ in 0..len {
            data.extend(phone.iter().map(|v| v + noise * normal(rng)));
        }
        t += len;
    }
    data
}

/// Scales each band's deviation from its utterance mean by `gain[b]`.
fn scale_dynamics(data: &mut [f64], gain: &[f64]) {
    let frames = data.len() / BANDS;
    for (b, g) in gain.iter().enumerate() {
        let mean = (0..frames).map(|t| data[t * BANDS + b]).sum::<f64>() / frames as f64;
        for t in 0..frames {
            let v = &mut data[t * BANDS + b];
            *v = mean + g * (*v - mean);
        }
    }
}

/// First-order recursive smoothing along time.
fn smear(data: &mut [f64], beta: f64) {
    let frames = data.len() / BANDS;
    for t in 1..frames {
        for b in 0..BANDS {
            data[t * BANDS + b] = (1.0 - beta) * data[t * BANDS + b] + beta * data[(t - 1) * BANDS + b];
        }
    }
}

/// Feature-level world: normalized `frames × 64` matrices with replay coloration.
pub fn synth_feature_world(config: &SynthWorldConfig) -> Result<FeatureWorld> {
    config.validate()?;
    let mut rng = stream(config.seed, STREAM_WORLD);
    let shift = config.channel_shift;
    // Per-device log-gain profile: replay compresses dynamics, high bands most.
    let devices: Vec<Vec<f64>> = (0..config.devices)
        .map(|_| {
            let tilt = uniform(&mut rng, 0.6, 1.4);
            let wobble = smooth_curve(&mut rng);
            (0..BANDS)
                .map(|b| {
                    let ramp = b as f64 / (BANDS - 1) as f64;
                    -shift * (tilt * (0.3 + ramp) + 0.15 * wobble[b])
                })
                .collect()
        })
        .collect();
    let beta = (0.25 * shift).min(0.6);

    let make_split = |first: usize, count: usize, rng: &mut crate::rng::IsvRng| -> Result<SynthSplit<FeatureMatrix>> {
        let mut split = SynthSplit {
            speakers: Vec::new(),
            centroids: Vec::new(),
            items: Vec::new(),
        };
        for si in 0..count {
            let name = speaker_name(first + si);
            let templates: Vec<Vec<f64>> = (0..config.phones)
                .map(|_| smooth_curve(rng).into_iter().map(|v| config.speaker_spread * v).collect())
                .collect();
            let mean_template = (0..BANDS)
                .map(|b| templates.iter().map(|t| t[b]).sum::<f64>() / templates.len() as f64)
                .collect();
            let mut push = |rng: &mut crate::rng::IsvRng, label: SpoofLabel, n: usize| -> Result<()> {
                let mut data = clean_frames(rng, &templates, config.frames, config.noise);
                // Session variation of the same log-gain kind a device applies.
                let session = smooth_curve(rng);
                let mut log_gain: Vec<f64> = session.iter().map(|s| 0.35 * shift * s).collect();
                let device = match label {
                    SpoofLabel::Bonafide => None,
                    SpoofLabel::Replay => {
                        let d = rng.random_range(0..config.devices);
                        log_gain.iter_mut().zip(&devices[d]).for_each(|(g, dg)| *g += dg);
                        data.iter_mut().for_each(|v| *v *= config.replay_preservation);
                        Some(d)
                    }
                };
                let gain: Vec<f64> = log_gain.iter().map(|g| libm::exp(*g)).collect();
                scale_dynamics(&mut data, &gain);
                if device.is_some() && beta > 0.0 {
                    smear(&mut data, beta);
                }
                let fm = FeatureMatrix::new(config.frames, data, 0, 0)?;
                split.items.push(SynthItem {
                    id: utt_id(&name, label, n),
                    speaker: name.clone(),
                    speaker_index: si,
                    label,
                    device,
                    data: mean_normalize(&fm),
                });
                Ok(())
            };
            for n in 0..config.bonafide_per_speaker {
                push(rng, SpoofLabel::Bonafide, n)?;
            }
            for n in 0..config.replay_per_speaker {
                push(rng, SpoofLabel::Replay, n)?;
            }
            split.speakers.push(name);
            split.centroids.push(mean_template);
        }
        Ok(split)
    };
    let train = make_split(0, config.speakers_train, &mut rng)?;
    let eval = make_split(config.speakers_train, config.speakers_eval, &mut rng)?;
    Ok(SynthWorld {
        config: config.clone(),
        train,
        eval,
    })
}

/// Trial counts per type, in `TrialType::ALL` order.
pub fn trial_counts(trials: &[Trial]) -> [usize; 3] {
    let mut counts = [0; 3];
    for t in trials {
        counts[t.kind.index()] += 1;
    }
    counts
}

/// Index of the centroid nearest (Euclidean) to `v`.
pub fn nearest_centroid(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let dist = |c: &Vec<f64>| c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate() {
        if dist(c) < dist(&centroids[best]) {
            best = i;
        }
    }
    best
}
