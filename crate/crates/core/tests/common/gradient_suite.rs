//! Finite-difference checks over randomly sized layers, losses and models.
//! Shared by the core gradient tests and the acceptance suite.

use isv_core::features::{FeatureMatrix, BANDS};
use isv_core::gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
use isv_core::layers::{
    Parameterized,
    max_pool2d, max_pool2d_backward, mfm, mfm_backward, sigmoid_backward, Activation, Conv2d, Dense, Init,
};
use isv_core::loss::{bce, bce_logits, cce, E2eWeights};
use isv_core::models::{
    Backend, BackendConfig, BackendExample, E2eConfig, E2eModel, EncoderConfig, FrontendModel, FrontendTask, PadClassifier,
};
use isv_core::rng::{normal, stream, uniform, IsvRng};
use isv_core::{Result, SpoofLabel, Tensor};
use rand::Rng;

pub struct Case {
    pub name: String,
    pub report: GradCheckReport,
}

fn randn(rng: &mut IsvRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| normal(rng)).collect()).unwrap()
}

/// Weighted sum `Σ r·y` and its gradient `r`.
fn probe_loss(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Zero-initialized biases can park ReLU inputs exactly on the kink when an
/// upstream layer is dead; random biases move every check off it.
fn jitter_biases(model: &mut dyn Parameterized, rng: &mut IsvRng) {
    model.visit_params("", &mut |name, p| {
        if name.ends_with("bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.1 * normal(rng));
        }
    });
}

fn cfg(rng: &mut IsvRng) -> GradCheckConfig {
    GradCheckConfig {
        eps: 1e-5,
        max_per_tensor: 8,
        seed: rng.random(),
    }
}

fn dense_case(rng: &mut IsvRng, act: Option<Activation>) -> Result<GradCheckReport> {
    let (b, i, o) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(2..7));
    let mut layer = Dense::new(i, o, Init::Xavier, rng);
    layer.bias.value = randn(rng, &[o]);
    let x = randn(rng, &[b, i]);
    let r = randn(rng, &[b, o]);
    let c = cfg(rng);
    finite_diff_check(
        &mut layer,
        |m, backward| {
            let y = m.forward(&x)?;
            let a = match act {
                Some(f) => f.apply(&y)?,
                None => y.clone(),
            };
            if backward {
                let g = match act {
                    Some(f) => f.backward(&y, &a, &r)?,
                    None => r.clone(),
                };
                m.backward(&x, &g)?;
            }
            Ok(probe_loss(&a, &r))
        },
        c,
    )
}

#[derive(Clone, Copy)]
enum After {
    Nothing,
    Mfm,
    Pool,
}

fn conv_case(rng: &mut IsvRng, after: After) -> Result<GradCheckReport> {
    let b = rng.random_range(1..3);
    let in_ch = rng.random_range(1..4);
    let out_ch = 2 * rng.random_range(1..3);
    let k = (rng.random_range(1..4), rng.random_range(1..4));
    let stride = if matches!(after, After::Pool) { 1 } else { rng.random_range(1..3) };
    let padding = rng.random_range(0..2);
    let (h, w) = (rng.random_range(4..8), rng.random_range(4..8));
    let mut conv = Conv2d::new(in_ch, out_ch, k, stride, padding, Init::He, rng);
    conv.bias.value = randn(rng, &[out_ch]);
    let x = randn(rng, &[b, in_ch, h, w]);
    let y0 = conv.forward(&x)?;
    let out_shape = match after {
        After::Nothing => y0.shape().to_vec(),
        After::Mfm => mfm(&y0)?.shape().to_vec(),
        After::Pool => max_pool2d(&y0)?.shape().to_vec(),
    };
    let r = randn(rng, &out_shape);
    let c = cfg(rng);
    finite_diff_check(
        &mut conv,
        |m, backward| {
            let y = m.forward(&x)?;
            let a = match after {
                After::Nothing => y.clone(),
                After::Mfm => mfm(&y)?,
                After::Pool => max_pool2d(&y)?,
            };
            if backward {
                let g = match after {
                    After::Nothing => r.clone(),
                    After::Mfm => mfm_backward(&y, &r)?,
                    After::Pool => max_pool2d_backward(&y, &r)?,
                };
                m.backward(&x, &g)?;
            }
            Ok(probe_loss(&a, &r))
        },
        c,
    )
}

fn bce_case(rng: &mut IsvRng) -> Result<GradCheckReport> {
    let (b, i) = (rng.random_range(2..8), rng.random_range(1..6));
    let mut layer = Dense::new(i, 1, Init::Xavier, rng);
    let x = randn(rng, &[b, i]);
    let labels: Vec<f64> = (0..b).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
    let c = cfg(rng);
    finite_diff_check(
        &mut layer,
        |m, backward| {
            let z = m.forward(&x)?;
            let p = Activation::Sigmoid.apply(&z)?;
            let (loss, g) = bce(p.data(), &labels)?;
            if backward {
                let gp = Tensor::new(p.shape(), g)?;
                m.backward(&x, &sigmoid_backward(&p, &gp)?)?;
            }
            Ok(loss)
        },
        c,
    )
}

fn bce_logits_case(rng: &mut IsvRng) -> Result<GradCheckReport> {
    let (b, i) = (rng.random_range(2..8), rng.random_range(1..6));
    let mut layer = Dense::new(i, 1, Init::Xavier, rng);
    let x = randn(rng, &[b, i]);
    let labels: Vec<f64> = (0..b).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
    let c = cfg(rng);
    finite_diff_check(
        &mut layer,
        |m, backward| {
            let z = m.forward(&x)?;
            let (loss, g) = bce_logits(z.data(), &labels)?;
            if backward {
                m.backward(&x, &Tensor::new(z.shape(), g)?)?;
            }
            Ok(loss)
        },
        c,
    )
}

fn cce_case(rng: &mut IsvRng) -> Result<GradCheckReport> {
    let (b, i, k) = (rng.random_range(1..8), rng.random_range(1..6), rng.random_range(2..6));
    let mut layer = Dense::new(i, k, Init::Xavier, rng);
    let x = randn(rng, &[b, i]);
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    let c = cfg(rng);
    finite_diff_check(
        &mut layer,
        |m, backward| {
            let z = m.forward(&x)?;
            let (loss, g) = cce(&z, &labels)?;
            if backward {
                m.backward(&x, &g)?;
            }
            Ok(loss)
        },
        c,
    )
}

fn small_encoder(rng: &mut IsvRng) -> EncoderConfig {
    let use_mfm = rng.random::<bool>();
    let blocks = rng.random_range(1..3);
    EncoderConfig {
        frames: 8,
        block_channels: (0..blocks).map(|_| 2 * rng.random_range(1..3)).collect(),
        use_mfm,
        pool: (0..blocks).map(|_| rng.random::<bool>()).collect(),
        embedding_dim: rng.random_range(3..7),
    }
}

fn feature_batch(enc: &EncoderConfig, n: usize, rng: &mut IsvRng) -> Vec<FeatureMatrix> {
    (0..n)
        .map(|_| FeatureMatrix::new(enc.frames, (0..enc.frames * BANDS).map(|_| normal(rng)).collect(), 400, 160).unwrap())
        .collect()
}

fn frontend_case(rng: &mut IsvRng) -> Result<GradCheckReport> {
    let enc = small_encoder(rng);
    let task = [FrontendTask::Sid, FrontendTask::Pad, FrontendTask::Mtl][rng.random_range(0..3)];
    let n_spk = rng.random_range(2..4);
    let mut model = FrontendModel::new(enc.clone(), task, n_spk, rng)?;
    jitter_biases(&mut model, rng);
    let feats = feature_batch(&enc, 4, rng);
    let refs: Vec<&FeatureMatrix> = feats.iter().collect();
    let x = model.encoder.batch_input(&refs)?;
    let speakers: Vec<usize> = (0..4).map(|i| i % n_spk).collect();
    let pad = [1.0, 0.0, 1.0, 0.0];
    let c = cfg(rng);
    finite_diff_check(&mut model, |m, backward| Ok(m.loss_and_backward(&x, &speakers, &pad, backward)?.total), c)
}

fn e2e_case(rng: &mut IsvRng) -> Result<GradCheckReport> {
    let enc = small_encoder(rng);
    let config = E2eConfig {
        encoder: enc.clone(),
        n_speakers: 3,
        isv_hidden: (0..rng.random_range(1..3)).map(|_| rng.random_range(3..7)).collect(),
        balance_trials: rng.random::<bool>(),
        weights: E2eWeights {
            sid: uniform(rng, 0.5, 2.0),
            pad: uniform(rng, 0.5, 2.0),
            isv: uniform(rng, 0.5, 2.0),
        },
    };
    let mut model = E2eModel::new(config, rng)?;
    jitter_biases(&mut model, rng);
    let feats = feature_batch(&enc, 4, rng);
    let refs: Vec<&FeatureMatrix> = feats.iter().collect();
    let x = model.frontend.encoder.batch_input(&refs)?;
    let speakers = [0, 0, 1, 1];
    let labels = [SpoofLabel::Bonafide, SpoofLabel::Replay, SpoofLabel::Bonafide, SpoofLabel::Bonafide];
    let seed: u64 = rng.random();
    let c = cfg(rng);
    finite_diff_check(
        &mut model,
        |m, backward| Ok(m.loss_and_backward(&x, &speakers, &labels, seed, backward)?.total),
        c,
    )
}

fn backend_case(rng: &mut IsvRng) -> Result<GradCheckReport> {
    let dim = rng.random_range(2..6);
    let config = BackendConfig {
        embedding_dim: dim,
        hidden_layers: rng.random_range(1..5),
        hidden_nodes: rng.random_range(3..9),
        alpha: uniform(rng, 0.0, 20.0),
        use_pad_labels: true,
    };
    let mut model = Backend::new(config, rng)?;
    jitter_biases(&mut model, rng);
    let n = rng.random_range(2..7);
    let emb: Vec<Vec<f64>> = (0..2 * n).map(|_| (0..dim).map(|_| normal(rng)).collect()).collect();
    let pads: Vec<f64> = (0..n).map(|_| uniform(rng, 0.0, 1.0)).collect();
    let same: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let isv: Vec<usize> = (0..n).map(|i| (i % 3 != 0) as usize).collect();
    let c = cfg(rng);
    finite_diff_check(
        &mut model,
        |m, backward| {
            let batch: Vec<BackendExample<'_>> = (0..n)
                .map(|i| BackendExample {
                    enroll: &emb[2 * i],
                    test: &emb[2 * i + 1],
                    pad: pads[i],
                })
                .collect();
            Ok(m.loss_and_backward(&batch, &same, &isv, backward)?.0.total)
        },
        c,
    )
}

fn pad_classifier_case(rng: &mut IsvRng) -> Result<GradCheckReport> {
    let (dim, hidden, b) = (rng.random_range(2..7), rng.random_range(2..7), rng.random_range(2..8));
    let mut model = PadClassifier::new(dim, hidden, rng);
    jitter_biases(&mut model, rng);
    let x = randn(rng, &[b, dim]);
    let t: Vec<f64> = (0..b).map(|i| (i % 2) as f64).collect();
    let c = cfg(rng);
    finite_diff_check(&mut model, |m, backward| Ok(m.loss_and_backward(&x, &t, backward)?.total), c)
}

pub const KINDS: [&str; 14] = [
    "dense",
    "dense+relu",
    "dense+sigmoid",
    "dense+softmax",
    "conv",
    "conv+mfm",
    "conv+maxpool",
    "bce",
    "bce_logits",
    "cce",
    "frontend",
    "e2e_loss",
    "modular_loss",
    "pad_classifier",
];

/// Runs `configs` randomly drawn cases, cycling through every kind.
pub fn run_suite(configs: usize, seed: u64) -> Result<Vec<Case>> {
    let mut rng = stream(seed, 99);
    let mut out = Vec::with_capacity(configs);
    for i in 0..configs {
        let kind = KINDS[i % KINDS.len()];
        let report = match kind {
            "dense" => dense_case(&mut rng, None)?,
            "dense+relu" => dense_case(&mut rng, Some(Activation::Relu))?,
            "dense+sigmoid" => dense_case(&mut rng, Some(Activation::Sigmoid))?,
            "dense+softmax" => dense_case(&mut rng, Some(Activation::Softmax { axis: 1 }))?,
            "conv" => conv_case(&mut rng, After::Nothing)?,
            "conv+mfm" => conv_case(&mut rng, After::Mfm)?,
            "conv+maxpool" => conv_case(&mut rng, After::Pool)?,
            "bce" => bce_case(&mut rng)?,
            "bce_logits" => bce_logits_case(&mut rng)?,
            "cce" => cce_case(&mut rng)?,
            "frontend" => frontend_case(&mut rng)?,
            "e2e_loss" => e2e_case(&mut rng)?,
            "modular_loss" => backend_case(&mut rng)?,
            _ => pad_classifier_case(&mut rng)?,
        };
        out.push(Case {
            name: format!("{kind}#{i}"),
            report,
        });
    }
    Ok(out)
}
