//! Flat `key = value` run configuration.
//!
//! Every key has a default; a config file only lists the keys it changes.
//! Unknown keys are rejected. The resolved config (all keys, defaults
//! included) is written next to each run's outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use isv_core::features::MelConfig;
use isv_core::loss::E2eWeights;
use isv_core::models::{BackendConfig, E2eConfig, EncoderConfig};
use isv_core::optim::AmsgradConfig;
use isv_core::synth::SynthWorldConfig;

use crate::error::{Error, Result};
use crate::fsio::read_text;

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("precision", "f64"),
    ("work_dir", "run"),
    ("data.source", "synth"),
    ("data.train_protocol", ""),
    ("data.eval_protocol", ""),
    ("data.features", ""),
    ("data.wav_dir", ""),
    ("data.trials", ""),
    ("data.trial_columns", ""),
    ("data.trial_tokens", ""),
    ("synth.speakers_train", "12"),
    ("synth.speakers_eval", "6"),
    ("synth.dim", "64"),
    ("synth.channel_dims", "16"),
    ("synth.speaker_spread", "1"),
    ("synth.noise", "0.2"),
    ("synth.channel_shift", "1"),
    ("synth.replay_preservation", "1"),
    ("synth.devices", "3"),
    ("synth.bonafide_per_speaker", "12"),
    ("synth.replay_per_speaker", "12"),
    ("synth.frames", "32"),
    ("synth.phones", "4"),
    ("synth.feature_spread", "1"),
    ("synth.feature_noise", "0.5"),
    ("synth.feature_shift", "0.3"),
    ("eval.trials_per_type", "0"),
    ("eval.scorers", "cosine,modular"),
    ("eval.hist_bins", "20"),
    ("mel.sample_rate", "16000"),
    ("mel.window", "400"),
    ("mel.hop", "160"),
    ("encoder.frames", "32"),
    ("encoder.channels", "8,16,16"),
    ("encoder.mfm", "true"),
    ("encoder.pool", "1,1,1"),
    ("encoder.embedding_dim", "64"),
    ("frontend.mode", "separate"),
    ("frontend.steps", "300"),
    ("frontend.batch", "32"),
    ("e2e.steps", "300"),
    ("e2e.speakers_per_batch", "4"),
    ("e2e.utts_per_speaker", "4"),
    ("e2e.isv_hidden", "256,256"),
    ("e2e.balance_trials", "true"),
    ("e2e.weights", "1,1,1"),
    ("backend.embeddings", "synth"),
    ("backend.hidden_layers", "4"),
    ("backend.hidden_nodes", "256"),
    ("backend.alpha", "20"),
    ("backend.pad_input", "labels"),
    ("backend.steps", "1500"),
    ("backend.batch", "60"),
    ("pad.source", "classifier"),
    ("pad.hidden", "32"),
    ("pad.steps", "300"),
    ("pad.batch", "32"),
    ("optim.lr", "0.001"),
    ("optim.beta1", "0.9"),
    ("optim.beta2", "0.999"),
    ("optim.eps", "1e-8"),
    ("optim.weight_decay", "0.0001"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synth,
    Files,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadInput {
    Labels,
    Predictions,
}

impl PadInput {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(PadInput::Labels),
            "predictions" => Ok(PadInput::Predictions),
            other => Err(Error::Config(format!("pad input must be labels or predictions, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{source}:{}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("{source}:{}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    /// Sets a known key; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("every key has a default")
    }

    fn parse_key<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("`{key}` has invalid value `{raw}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` has invalid list `{raw}`")))
            })
            .collect()
    }

    /// Parses every typed view so errors surface before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.get("precision") != "f64" {
            return Err(Error::Config(format!(
                "precision `{}` not supported; only f64 is implemented",
                self.get("precision")
            )));
        }
        self.seed()?;
        self.data_source()?;
        self.embedding_world()?.validate()?;
        self.feature_world()?.validate()?;
        self.mel()?;
        self.encoder()?.validate()?;
        self.e2e()?;
        self.backend(1)?.validate()?;
        self.optimizer()?.validate()?;
        self.pad_input()?;
        for key in [
            "eval.trials_per_type",
            "eval.hist_bins",
            "frontend.steps",
            "frontend.batch",
            "e2e.steps",
            "e2e.speakers_per_batch",
            "e2e.utts_per_speaker",
            "backend.steps",
            "backend.batch",
            "pad.hidden",
            "pad.steps",
            "pad.batch",
        ] {
            self.usize(key)?;
        }
        if self.usize("eval.hist_bins")? == 0 {
            return Err(Error::Config("eval.hist_bins must be positive".into()));
        }
        self.frontend_mtl()?;
        self.scorers()?;
        match self.get("backend.embeddings") {
            "synth" | "frontend" => {}
            other => return Err(Error::Config(format!("backend.embeddings must be synth or frontend, got `{other}`"))),
        }
        match self.get("pad.source") {
            "classifier" | "frontend" => {}
            other => return Err(Error::Config(format!("pad.source must be classifier or frontend, got `{other}`"))),
        }
        Ok(())
    }

    /// Canonical text of every key, sorted.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse_key(key)
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse_key("seed")
    }

    pub fn work_dir(&self) -> PathBuf {
        PathBuf::from(self.get("work_dir"))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn data_source(&self) -> Result<DataSource> {
        match self.get("data.source") {
            "synth" => Ok(DataSource::Synth),
            "files" => Ok(DataSource::Files),
            other => Err(Error::Config(format!("data.source must be synth or files, got `{other}`"))),
        }
    }

    fn world_common(&self) -> Result<SynthWorldConfig> {
        Ok(SynthWorldConfig {
            speakers_train: self.usize("synth.speakers_train")?,
            speakers_eval: self.usize("synth.speakers_eval")?,
            dim: self.usize("synth.dim")?,
            channel_dims: self.usize("synth.channel_dims")?,
            speaker_spread: self.parse_key("synth.speaker_spread")?,
            noise: self.parse_key("synth.noise")?,
            channel_shift: self.parse_key("synth.channel_shift")?,
            replay_preservation: self.parse_key("synth.replay_preservation")?,
            devices: self.usize("synth.devices")?,
            bonafide_per_speaker: self.usize("synth.bonafide_per_speaker")?,
            replay_per_speaker: self.usize("synth.replay_per_speaker")?,
            frames: self.usize("synth.frames")?,
            phones: self.usize("synth.phones")?,
            seed: self.seed()?,
        })
    }

    pub fn embedding_world(&self) -> Result<SynthWorldConfig> {
        self.world_common()
    }

    /// The feature world takes its spread, noise and shift from `synth.feature_*`.
    pub fn feature_world(&self) -> Result<SynthWorldConfig> {
        Ok(SynthWorldConfig {
            speaker_spread: self.parse_key("synth.feature_spread")?,
            noise: self.parse_key("synth.feature_noise")?,
            channel_shift: self.parse_key("synth.feature_shift")?,
            ..self.world_common()?
        })
    }

    pub fn mel(&self) -> Result<MelConfig> {
        let cfg = MelConfig {
            sample_rate: self.parse_key("mel.sample_rate")?,
            window: self.usize("mel.window")?,
            hop: self.usize("mel.hop")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn encoder(&self) -> Result<EncoderConfig> {
        Ok(EncoderConfig {
            frames: self.usize("encoder.frames")?,
            block_channels: self.list("encoder.channels")?,
            use_mfm: self.parse_key("encoder.mfm")?,
            pool: self.list::<u8>("encoder.pool")?.into_iter().map(|p| p != 0).collect(),
            embedding_dim: self.usize("encoder.embedding_dim")?,
        })
    }

    pub fn frontend_mtl(&self) -> Result<bool> {
        match self.get("frontend.mode") {
            "separate" => Ok(false),
            "mtl" => Ok(true),
            other => Err(Error::Config(format!("frontend.mode must be separate or mtl, got `{other}`"))),
        }
    }

    pub fn e2e(&self) -> Result<E2eConfig> {
        let w: Vec<f64> = self.list("e2e.weights")?;
        let [sid, pad, isv] = w[..] else {
            return Err(Error::Config("e2e.weights needs three values".into()));
        };
        Ok(E2eConfig {
            encoder: self.encoder()?,
            n_speakers: self.usize("synth.speakers_train")?,
            isv_hidden: self.list("e2e.isv_hidden")?,
            balance_trials: self.parse_key("e2e.balance_trials")?,
            weights: E2eWeights { sid, pad, isv },
        })
    }

    pub fn pad_input(&self) -> Result<PadInput> {
        PadInput::parse(self.get("backend.pad_input"))
    }

    pub fn backend(&self, embedding_dim: usize) -> Result<BackendConfig> {
        Ok(BackendConfig {
            embedding_dim,
            hidden_layers: self.usize("backend.hidden_layers")?,
            hidden_nodes: self.usize("backend.hidden_nodes")?,
            alpha: self.parse_key("backend.alpha")?,
            use_pad_labels: self.pad_input()? == PadInput::Labels,
        })
    }

    pub fn optimizer(&self) -> Result<AmsgradConfig> {
        Ok(AmsgradConfig {
            lr: self.parse_key("optim.lr")?,
            beta1: self.parse_key("optim.beta1")?,
            beta2: self.parse_key("optim.beta2")?,
            eps: self.parse_key("optim.eps")?,
            weight_decay: self.parse_key("optim.weight_decay")?,
        })
    }

    pub fn scorers(&self) -> Result<Vec<String>> {
        let list: Vec<String> = self.list("eval.scorers")?;
        if list.is_empty() {
            return Err(Error::Config("eval.scorers is empty".into()));
        }
        for s in &list {
            if !["cosine", "modular", "e2e"].contains(&s.as_str()) {
                return Err(Error::Config(format!("unknown scorer `{s}` (cosine, modular, e2e)")));
            }
        }
        Ok(list)
    }
}
