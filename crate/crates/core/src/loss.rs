//! Cross-entropy losses and the two composite training objectives.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::layers::sigmoid_scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient w.r.t. the predictions.
pub fn bce(pred: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != labels.len() || pred.is_empty() {
        return Err(Error::shape("bce", &[pred.len()], &[labels.len()]));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Label(format!("binary label {bad} not in {{0, 1}}")));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(labels) {
        let inside = (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= y * libm::log(pc) + (1.0 - y) * libm::log(1.0 - pc);
        grad.push(if inside { (-y / pc + (1.0 - y) / (1.0 - pc)) / n } else { 0.0 });
    }
    Ok((loss / n, grad))
}

/// Mean binary cross-entropy of `sigmoid(logits)`, and its gradient w.r.t.
/// the logits. Unlike [`bce`] it has no clamp, so a saturated wrong
/// prediction still gets a full-size gradient.
pub fn bce_logits(logits: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::shape("bce", &[logits.len()], &[labels.len()]));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Label(format!("binary label {bad} not in {{0, 1}}")));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        let softplus = z.max(0.0) + libm::log1p(libm::exp(-z.abs()));
        loss += softplus - y * z;
        grad.push((sigmoid_scalar(z) - y) / n);
    }
    Ok((loss / n, grad))
}

/// Mean categorical cross-entropy over rows of `[n × C]` logits, and the gradient w.r.t. the logits.
pub fn cce(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, classes) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::shape("cce", logits.shape(), &[labels.len()]));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label(format!("class {bad} out of range for {classes} classes")));
    }
    let mut grad = Tensor::zeros(&[n, classes]);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| libm::exp(z - max)).sum();
        let lse = max + libm::log(sum);
        loss += lse - row[label];
        let g = &mut grad.data_mut()[i * classes..(i + 1) * classes];
        for (k, gv) in g.iter_mut().enumerate() {
            *gv = libm::exp(row[k] - lse) / n as f64;
        }
        g[label] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// Per-component loss values of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub sid: Option<f64>,
    pub pad: Option<f64>,
    pub isv: Option<f64>,
    pub sv: Option<f64>,
    /// SV weight, for the modular objective.
    pub alpha: Option<f64>,
    pub total: f64,
    pub batch_size: usize,
}

impl LossReport {
    pub fn new(batch_size: usize) -> Self {
        Self {
            sid: None,
            pad: None,
            isv: None,
            sv: None,
            alpha: None,
            total: 0.0,
            batch_size,
        }
    }

    /// `key=value` pairs, components first, in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (key, value) in [("sid", self.sid), ("pad", self.pad), ("isv", self.isv), ("sv", self.sv), ("alpha", self.alpha)] {
            if let Some(v) = value {
                let _ = write!(s, "{key}={v:e} ");
            }
        }
        let _ = write!(s, "total={:e} batch={}", self.total, self.batch_size);
        s
    }

    pub fn components_finite(&self) -> bool {
        [self.sid, self.pad, self.isv, self.sv].iter().flatten().all(|v| v.is_finite()) && self.total.is_finite()
    }
}

/// Weights of the joint objective; unit weights unless overridden for experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct E2eWeights {
    pub sid: f64,
    pub pad: f64,
    pub isv: f64,
}

impl Default for E2eWeights {
    fn default() -> Self {
        Self {
            sid: 1.0,
            pad: 1.0,
            isv: 1.0,
        }
    }
}

pub fn e2e_total(sid: f64, pad: f64, isv: f64, w: E2eWeights) -> f64 {
    w.sid * sid + w.pad * pad + w.isv * isv
}

pub fn modular_total(sv: f64, isv: f64, alpha: f64) -> f64 {
    alpha * sv + isv
}

/// Gradients of the joint objective w.r.t. its three heads.
#[derive(Debug, Clone, PartialEq)]
pub struct E2eGrads {
    pub sid_logits: Tensor,
    pub pad_logits: Vec<f64>,
    pub isv_logits: Tensor,
}

/// Joint objective `sid + pad + isv`: CCE over speaker logits, BCE over
/// bona fide logits, and 2-class CCE over in-batch trial logits.
pub fn e2e_loss(
    sid_logits: &Tensor,
    sid_labels: &[usize],
    pad_logits: &[f64],
    pad_labels: &[f64],
    isv_logits: &Tensor,
    isv_labels: &[usize],
    weights: E2eWeights,
) -> Result<(LossReport, E2eGrads)> {
    if isv_labels.is_empty() {
        return Err(Error::Composition("no trials in batch".into()));
    }
    let (sid, mut g_sid) = cce(sid_logits, sid_labels)?;
    let (pad, mut g_pad) = bce_logits(pad_logits, pad_labels)?;
    let (isv, mut g_isv) = cce(isv_logits, isv_labels)?;
    g_sid.data_mut().iter_mut().for_each(|g| *g *= weights.sid);
    g_pad.iter_mut().for_each(|g| *g *= weights.pad);
    g_isv.data_mut().iter_mut().for_each(|g| *g *= weights.isv);
    let mut report = LossReport::new(sid_labels.len());
    report.sid = Some(sid);
    report.pad = Some(pad);
    report.isv = Some(isv);
    report.total = e2e_total(sid, pad, isv, weights);
    Ok((
        report,
        E2eGrads {
            sid_logits: g_sid,
            pad_logits: g_pad,
            isv_logits: g_isv,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModularGrads {
    pub sv_logits: Vec<f64>,
    pub isv_logits: Tensor,
}

/// Back-end objective `α·sv + isv`: BCE of the same-speaker branch (given
/// as raw logits) plus 2-class CCE of the fused decision.
pub fn modular_loss(
    sv_logits: &[f64],
    sv_labels: &[f64],
    isv_logits: &Tensor,
    isv_labels: &[usize],
    alpha: f64,
) -> Result<(LossReport, ModularGrads)> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let (sv, mut g_sv) = bce_logits(sv_logits, sv_labels)?;
    let (isv, g_isv) = cce(isv_logits, isv_labels)?;
    g_sv.iter_mut().for_each(|g| *g *= alpha);
    let mut report = LossReport::new(isv_labels.len());
    report.sv = Some(sv);
    report.isv = Some(isv);
    report.alpha = Some(alpha);
    report.total = modular_total(sv, isv, alpha);
    Ok((
        report,
        ModularGrads {
            sv_logits: g_sv,
            isv_logits: g_isv,
        },
    ))
}
