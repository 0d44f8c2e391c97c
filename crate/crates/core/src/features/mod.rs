//! Log-Mel filterbank front-end with utterance-level mean normalization.

mod fft;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::label::SpoofLabel;

/// Number of Mel bands in every feature matrix.
pub const BANDS: usize = 64;

/// Energies below this are floored before the log.
pub const LOG_FLOOR: f64 = 1e-10;

/// STFT and filterbank settings. Defaults: 25 ms window, 10 ms hop at 16 kHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window: 400,
            hop: 160,
        }
    }
}

impl MelConfig {
    pub fn n_fft(&self) -> usize {
        self.window.next_power_of_two()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hop == 0 || self.hop > self.window || self.sample_rate == 0 {
            return Err(Error::Config(alloc::format!(
                "window ({}) must be >= hop ({}) and both positive",
                self.window,
                self.hop
            )));
        }
        Ok(())
    }
}

/// `frames × 64` log-Mel energies, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    data: Vec<f64>,
    pub window: usize,
    pub hop: usize,
}

impl FeatureMatrix {
    pub fn new(frames: usize, data: Vec<f64>, window: usize, hop: usize) -> Result<Self> {
        if frames == 0 || data.len() != frames * BANDS {
            return Err(Error::shape("feature matrix", &[frames, BANDS], &[data.len()]));
        }
        Ok(Self { frames, data, window, hop })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * BANDS..(t + 1) * BANDS]
    }

    pub fn band_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; BANDS];
        for frame in self.data.chunks(BANDS) {
            for (m, v) in means.iter_mut().zip(frame) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.frames as f64);
        means
    }

    /// Center-crops or cyclically repeats frames to exactly `frames`.
    pub fn fit_frames(&self, frames: usize) -> FeatureMatrix {
        let mut data = Vec::with_capacity(frames * BANDS);
        let offset = self.frames.saturating_sub(frames) / 2;
        for t in 0..frames {
            let src = (offset + t) % self.frames;
            data.extend_from_slice(self.frame(src));
        }
        FeatureMatrix {
            frames,
            data,
            window: self.window,
            hop: self.hop,
        }
    }
}

/// Raw audio or already-extracted features.
#[derive(Debug, Clone, PartialEq)]
pub enum UtteranceData {
    Samples { samples: Vec<f64>, sample_rate: u32 },
    Features(FeatureMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub label: SpoofLabel,
    pub data: UtteranceData,
}

impl Utterance {
    /// Normalized features: extracted from samples when needed.
    pub fn features(&self, config: &MelConfig) -> Result<FeatureMatrix> {
        match &self.data {
            UtteranceData::Features(f) => Ok(mean_normalize(f)),
            UtteranceData::Samples { samples, sample_rate } => {
                let cfg = MelConfig {
                    sample_rate: *sample_rate,
                    ..*config
                };
                Ok(mean_normalize(&extract_melfbank(samples, &cfg)?))
            }
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// The `BANDS + 2` filter edge frequencies, evenly spaced on the Mel scale from 0 Hz to Nyquist.
pub fn filter_edges_hz(sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..BANDS + 2)
        .map(|i| mel_to_hz(top * i as f64 / (BANDS + 1) as f64))
        .collect()
}

/// Peak frequency of band `b`'s triangular filter.
pub fn band_center_hz(b: usize, sample_rate: u32) -> f64 {
    filter_edges_hz(sample_rate)[b + 1]
}

/// `[BANDS × (n_fft/2 + 1)]` triangular filter weights.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize) -> Vec<Vec<f64>> {
    let edges = filter_edges_hz(sample_rate);
    let bins = n_fft / 2 + 1;
    (0..BANDS)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / n_fft as f64;
                    let up = (f - lo) / (mid - lo);
                    let down = (hi - f) / (hi - mid);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Hamming-windowed STFT power through the Mel filterbank, then `ln(max(e, 1e-10))`.
pub fn extract_melfbank(samples: &[f64], config: &MelConfig) -> Result<FeatureMatrix> {
    config.validate()?;
    if samples.len() < config.window {
        return Err(Error::TooShort {
            samples: samples.len(),
            window: config.window,
        });
    }
    let n_fft = config.n_fft();
    let filters = mel_filterbank(config.sample_rate, n_fft);
    let window: Vec<f64> = (0..config.window)
        .map(|n| 0.54 - 0.46 * libm::cos(2.0 * PI * n as f64 / (config.window - 1) as f64))
        .collect();
    let frames = 1 + (samples.len() - config.window) / config.hop;
    let mut data = Vec::with_capacity(frames * BANDS);
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    let mut power = vec![0.0; n_fft / 2 + 1];
    for t in 0..frames {
        let start = t * config.hop;
        re.iter_mut().for_each(|v| *v = 0.0);
        im.iter_mut().for_each(|v| *v = 0.0);
        for (n, w) in window.iter().enumerate() {
            re[n] = samples[start + n] * w;
        }
        fft::fft(&mut re, &mut im);
        for (k, p) in power.iter_mut().enumerate() {
            *p = re[k] * re[k] + im[k] * im[k];
        }
        for filter in &filters {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            data.push(libm::log(energy.max(LOG_FLOOR)));
        }
    }
    FeatureMatrix::new(frames, data, config.window, config.hop)
}

/// Subtracts each band's mean over frames.
pub fn mean_normalize(features: &FeatureMatrix) -> FeatureMatrix {
    let means = features.band_means();
    let mut out = features.clone();
    for frame in out.data.chunks_mut(BANDS) {
        for (v, m) in frame.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}
