use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, BANDS};
use crate::layers::{join, max_pool2d, max_pool2d_backward, mfm, mfm_backward, relu, relu_backward, Conv2d, Dense, Init, Param, Parameterized};
use crate::tensor::Tensor;

/// Miniature MFM-CNN: `conv 3×3 → MFM → 2×2 max-pool` blocks, then one
/// dense layer (with MFM) to the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Frames per input; utterances are cropped or tiled to this length.
    pub frames: usize,
    /// Conv output channels per block, before MFM halves them.
    pub block_channels: Vec<usize>,
    /// MFM activations; ReLU when disabled.
    pub use_mfm: bool,
    /// Whether each block ends with 2×2 max pooling.
    pub pool: Vec<bool>,
    pub embedding_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            frames: 32,
            block_channels: vec![8, 16, 16],
            use_mfm: true,
            pool: vec![true, true, true],
            embedding_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.frames == 0 {
            return Err(Error::Config("embedding dimension and frame count must be positive".into()));
        }
        if self.block_channels.is_empty() || self.pool.len() != self.block_channels.len() {
            return Err(Error::Config(format!(
                "{} conv blocks but {} pooling entries",
                self.block_channels.len(),
                self.pool.len()
            )));
        }
        if self.use_mfm && self.block_channels.iter().any(|c| c % 2 != 0) {
            return Err(Error::Config(format!("MFM needs even channel counts, got {:?}", self.block_channels)));
        }
        if self.block_channels.contains(&0) {
            return Err(Error::Config("conv blocks need at least one channel".into()));
        }
        let (h, w) = self.output_hw();
        if h == 0 || w == 0 {
            return Err(Error::Config(format!("{} frames pooled {} times leaves nothing", self.frames, self.pool.len())));
        }
        Ok(())
    }

    fn output_hw(&self) -> (usize, usize) {
        self.pool
            .iter()
            .fold((self.frames, BANDS), |(h, w), &p| if p { (h / 2, w / 2) } else { (h, w) })
    }

    fn activated(&self, channels: usize) -> usize {
        if self.use_mfm {
            channels / 2
        } else {
            channels
        }
    }

    pub fn flat_width(&self) -> usize {
        let (h, w) = self.output_hw();
        self.activated(*self.block_channels.last().expect("validated")) * h * w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub convs: Vec<Conv2d>,
    pub fc: Dense,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    conv_in: Vec<Tensor>,
    conv_out: Vec<Tensor>,
    act_out: Vec<Tensor>,
    flat: Tensor,
    fc_out: Tensor,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::new();
        let mut in_ch = 1;
        for &c in &config.block_channels {
            convs.push(Conv2d::new(in_ch, c, (3, 3), 1, 1, Init::He, rng));
            in_ch = config.activated(c);
        }
        let fc_out = if config.use_mfm { 2 * config.embedding_dim } else { config.embedding_dim };
        let fc = Dense::new(config.flat_width(), fc_out, Init::He, rng);
        Ok(Self { config, convs, fc })
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    /// Stacks utterances into a `[batch, 1, frames, 64]` input.
    pub fn batch_input(&self, features: &[&FeatureMatrix]) -> Result<Tensor> {
        let frames = self.config.frames;
        let mut data = Vec::with_capacity(features.len() * frames * BANDS);
        for f in features {
            if f.frames() == frames {
                data.extend_from_slice(f.data());
            } else {
                data.extend_from_slice(f.fit_frames(frames).data());
            }
        }
        Tensor::new(&[features.len(), 1, frames, BANDS], data)
    }

    fn activate(&self, x: &Tensor) -> Result<Tensor> {
        if self.config.use_mfm {
            mfm(x)
        } else {
            Ok(relu(x))
        }
    }

    fn activate_backward(&self, x: &Tensor, g: &Tensor) -> Result<Tensor> {
        if self.config.use_mfm {
            mfm_backward(x, g)
        } else {
            relu_backward(x, g)
        }
    }

    /// `[batch, 1, frames, 64]` → `[batch, embedding_dim]`.
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, EncoderCache)> {
        let expect = [input.shape()[0], 1, self.config.frames, BANDS];
        if input.shape() != expect {
            return Err(Error::shape("encoder input", input.shape(), &expect));
        }
        let mut cache = EncoderCache {
            conv_in: Vec::new(),
            conv_out: Vec::new(),
            act_out: Vec::new(),
            flat: Tensor::zeros(&[1]),
            fc_out: Tensor::zeros(&[1]),
        };
        let mut x = input.clone();
        for (conv, &pool) in self.convs.iter().zip(&self.config.pool) {
            let y = conv.forward(&x)?;
            let a = self.activate(&y)?;
            let next = if pool { max_pool2d(&a)? } else { a.clone() };
            cache.conv_in.push(x);
            cache.conv_out.push(y);
            cache.act_out.push(a);
            x = next;
        }
        let batch = input.shape()[0];
        let flat = x.reshape(&[batch, self.config.flat_width()])?;
        let fc_out = self.fc.forward(&flat)?;
        let emb = self.activate(&fc_out)?;
        cache.flat = flat;
        cache.fc_out = fc_out;
        Ok((emb, cache))
    }

    pub fn embed(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward(input)?.0)
    }

    /// Accumulates parameter gradients from `grad_emb` (`[batch, embedding_dim]`).
    pub fn backward(&mut self, cache: &EncoderCache, grad_emb: &Tensor) -> Result<()> {
        let g = self.activate_backward(&cache.fc_out, grad_emb)?;
        let g_flat = self.fc.backward(&cache.flat, &g)?;
        let last = cache.act_out.len() - 1;
        let pooled_shape = if self.config.pool[last] {
            let s = cache.act_out[last].shape();
            [s[0], s[1], s[2] / 2, s[3] / 2]
        } else {
            let s = cache.act_out[last].shape();
            [s[0], s[1], s[2], s[3]]
        };
        let mut g = g_flat.reshape(&pooled_shape)?;
        for i in (0..self.convs.len()).rev() {
            if self.config.pool[i] {
                g = max_pool2d_backward(&cache.act_out[i], &g)?;
            }
            g = self.activate_backward(&cache.conv_out[i], &g)?;
            g = self.convs[i].backward(&cache.conv_in[i], &g)?;
        }
        Ok(())
    }
}

impl Parameterized for Encoder {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.visit_params(&join(prefix, &format!("conv{i}")), f);
        }
        self.fc.visit_params(&join(prefix, "fc"), f);
    }
}
