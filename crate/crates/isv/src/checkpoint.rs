//! Model checkpoints: architecture, parameters, optimizer state, seed.
//!
//! ```text
//! "ISVCKPT1"
//! descriptor str                      key=value lines
//! seed u64 | step u64
//! lr, beta1, beta2, eps, weight_decay f64
//! tensors u64, per tensor: name str | rank u32 | dims u64… | values f64…
//! moments u64, per entry: len u64 | m f64… | v f64… | v_hat f64…
//! sha256 of everything above (32 bytes)
//! ```

use std::path::Path;

use isv_core::layers::Parameterized;
use isv_core::loss::E2eWeights;
use isv_core::models::{Backend, BackendConfig, E2eConfig, E2eModel, EncoderConfig, FrontendModel, FrontendTask, PadClassifier};
use isv_core::optim::{Amsgrad, AmsgradConfig, Moments};
use isv_core::rng::stream;
use isv_core::Tensor;
use sha2::{Digest, Sha256};

use crate::binio::{expect_magic, Reader, Writer};
use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_bytes};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ISVCKPT1";

/// Ordered architecture description.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Descriptor(pub Vec<(String, String)>);

impl Descriptor {
    fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("architecture descriptor lacks `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("descriptor `{key}` has bad value `{raw}`")))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.get(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|p| p.parse().map_err(|_| Error::Format(format!("descriptor `{key}` has bad list `{raw}`"))))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        text.lines()
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Corrupt(format!("descriptor line `{l}`")))
            })
            .collect::<Result<_>>()
            .map(Descriptor)
    }
}

fn join_list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn describe_encoder(d: &mut Descriptor, c: &EncoderConfig) {
    d.push("encoder.frames", c.frames);
    d.push("encoder.channels", join_list(&c.block_channels));
    d.push("encoder.mfm", c.use_mfm);
    d.push("encoder.pool", join_list(&c.pool.iter().map(|&p| p as usize).collect::<Vec<_>>()));
    d.push("encoder.embedding_dim", c.embedding_dim);
}

fn encoder_from(d: &Descriptor) -> Result<EncoderConfig> {
    Ok(EncoderConfig {
        frames: d.parse("encoder.frames")?,
        block_channels: d.list("encoder.channels")?,
        use_mfm: d.parse("encoder.mfm")?,
        pool: d.list("encoder.pool")?.into_iter().map(|p| p != 0).collect(),
        embedding_dim: d.parse("encoder.embedding_dim")?,
    })
}

/// Any network the pipeline trains.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Frontend(FrontendModel),
    E2e(E2eModel),
    Backend(Backend),
    Pad(PadClassifier),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::Frontend(_) => "frontend",
            AnyModel::E2e(_) => "e2e",
            AnyModel::Backend(_) => "backend",
            AnyModel::Pad(_) => "pad",
        }
    }

    pub fn descriptor(&self) -> Descriptor {
        let mut d = Descriptor::default();
        d.push("kind", self.kind());
        match self {
            AnyModel::Frontend(m) => {
                d.push("task", m.task.as_str());
                d.push("n_speakers", m.n_speakers);
                describe_encoder(&mut d, &m.encoder.config);
            }
            AnyModel::E2e(m) => {
                d.push("n_speakers", m.config.n_speakers);
                d.push("isv_hidden", join_list(&m.config.isv_hidden));
                d.push("balance_trials", m.config.balance_trials);
                let w = m.config.weights;
                d.push("weights", format!("{},{},{}", w.sid, w.pad, w.isv));
                describe_encoder(&mut d, &m.config.encoder);
            }
            AnyModel::Backend(m) => {
                let c = m.config;
                d.push("embedding_dim", c.embedding_dim);
                d.push("hidden_layers", c.hidden_layers);
                d.push("hidden_nodes", c.hidden_nodes);
                d.push("alpha", c.alpha);
                d.push("use_pad_labels", c.use_pad_labels);
            }
            AnyModel::Pad(m) => {
                d.push("input_dim", m.input_dim());
                d.push("hidden", m.hidden.outputs());
            }
        }
        d
    }

    /// A freshly initialized model of the described architecture.
    pub fn from_descriptor(d: &Descriptor) -> Result<Self> {
        let mut rng = stream(0, 0);
        Ok(match d.get("kind")? {
            "frontend" => {
                let task = FrontendTask::parse(d.get("task")?).map_err(|e| Error::Format(e.to_string()))?;
                AnyModel::Frontend(FrontendModel::new(encoder_from(d)?, task, d.parse("n_speakers")?, &mut rng)?)
            }
            "e2e" => {
                let w: Vec<f64> = d
                    .get("weights")?
                    .split(',')
                    .map(|p| p.parse().map_err(|_| Error::Format(format!("bad weight `{p}`"))))
                    .collect::<Result<_>>()?;
                let [sid, pad, isv] = w[..] else {
                    return Err(Error::Format("e2e weights need three values".into()));
                };
                let config = E2eConfig {
                    encoder: encoder_from(d)?,
                    n_speakers: d.parse("n_speakers")?,
                    isv_hidden: d.list("isv_hidden")?,
                    balance_trials: d.parse("balance_trials")?,
                    weights: E2eWeights { sid, pad, isv },
                };
                AnyModel::E2e(E2eModel::new(config, &mut rng)?)
            }
            "backend" => {
                let config = BackendConfig {
                    embedding_dim: d.parse("embedding_dim")?,
                    hidden_layers: d.parse("hidden_layers")?,
                    hidden_nodes: d.parse("hidden_nodes")?,
                    alpha: d.parse("alpha")?,
                    use_pad_labels: d.parse("use_pad_labels")?,
                };
                AnyModel::Backend(Backend::new(config, &mut rng)?)
            }
            "pad" => AnyModel::Pad(PadClassifier::new(d.parse("input_dim")?, d.parse("hidden")?, &mut rng)),
            other => return Err(Error::Format(format!("unknown model kind `{other}`"))),
        })
    }

    pub fn params(&mut self) -> &mut dyn Parameterized {
        match self {
            AnyModel::Frontend(m) => m,
            AnyModel::E2e(m) => m,
            AnyModel::Backend(m) => m,
            AnyModel::Pad(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub optimizer: Amsgrad,
    pub seed: u64,
}

impl Checkpoint {
    pub fn step(&self) -> u64 {
        self.optimizer.step_count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.str(&self.model.descriptor().to_text());
        w.u64(self.seed);
        w.u64(self.optimizer.step_count());
        let c = self.optimizer.config;
        for v in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
            w.f64(v);
        }
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        self.model
            .clone()
            .params()
            .visit_params("", &mut |name, p| tensors.push((name.to_string(), p.value.clone())));
        w.u64(tensors.len() as u64);
        for (name, t) in &tensors {
            w.str(name);
            w.u32(t.rank() as u32);
            t.shape().iter().for_each(|&d| w.u64(d as u64));
            w.f64s(t.data());
        }
        w.u64(self.optimizer.moments().len() as u64);
        for m in self.optimizer.moments() {
            w.u64(m.m.len() as u64);
            w.f64s(&m.m);
            w.f64s(&m.v);
            w.f64s(&m.v_hat);
        }
        let digest = Sha256::digest(&w.buf);
        w.bytes(&digest);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        expect_magic(&mut r, CHECKPOINT_MAGIC, "checkpoint")?;
        if bytes.len() < CHECKPOINT_MAGIC.len() + 32 {
            return Err(Error::Corrupt("checkpoint truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Corrupt("checkpoint checksum mismatch (truncated or damaged)".into()));
        }
        let mut r = Reader::new(&body[CHECKPOINT_MAGIC.len()..], "checkpoint");
        let descriptor = Descriptor::from_text(&r.str()?)?;
        let seed = r.u64()?;
        let step = r.u64()?;
        let config = AmsgradConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
            weight_decay: r.f64()?,
        };
        let count = r.len(16)?;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let shape: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
            let len = shape.iter().product();
            tensors.push((name, Tensor::new(&shape, r.f64s(len)?).map_err(|e| Error::Corrupt(e.to_string()))?));
        }
        let n_moments = r.len(8)?;
        let mut moments = Vec::with_capacity(n_moments);
        for _ in 0..n_moments {
            let len = r.len(24)?;
            moments.push(Moments {
                m: r.f64s(len)?,
                v: r.f64s(len)?,
                v_hat: r.f64s(len)?,
            });
        }
        r.expect_end()?;

        let mut model = AnyModel::from_descriptor(&descriptor)?;
        let mut expected = Vec::new();
        model
            .params()
            .visit_params("", &mut |name, p| expected.push((name.to_string(), p.value.shape().to_vec())));
        let found: Vec<(String, Vec<usize>)> = tensors.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
        if expected != found {
            return Err(Error::Format("checkpoint tensors do not match the described architecture".into()));
        }
        let mut it = tensors.into_iter();
        model.params().visit_params("", &mut |_, p| p.value = it.next().expect("checked").1);
        let optimizer = Amsgrad::from_state(config, step, moments)?;
        Ok(Checkpoint { model, optimizer, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}
