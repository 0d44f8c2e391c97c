//! Central finite-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::Result;
use crate::layers::Parameterized;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Entries sampled per parameter tensor; smaller tensors are checked exhaustively.
    pub max_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_per_tensor: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
    pub checked: usize,
    /// Entries left out because the perturbation straddled a kink.
    pub kinks: usize,
    /// Entries whose analytic and numeric values are both below roundoff.
    pub unresolved: usize,
}

/// Relative error used throughout: `|a − c| / max(|a|, |c|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradients produced by `objective(model, true)` with central
/// differences of `objective(model, false)`.
///
/// With `backward = true` the objective must accumulate parameter gradients;
/// they are zeroed beforehand. Parameters are restored bitwise afterwards.
///
/// When the forward and backward one-sided slopes disagree the step is
/// shrunk; an entry whose slopes never settle sits on a non-differentiable
/// point (ReLU, max-pool or MFM switch) and is counted in `kinks` instead of
/// the error. Entries too small to resolve at the objective's scale are
/// counted in `unresolved`.
pub fn finite_diff_check<M, F>(model: &mut M, mut objective: F, config: GradCheckConfig) -> Result<GradCheckReport>
where
    M: Parameterized + ?Sized,
    F: FnMut(&mut M, bool) -> Result<f64>,
{
    model.zero_grad();
    objective(model, true)?;
    let center = objective(model, false)?;

    let mut names = Vec::new();
    let mut analytic = Vec::new();
    model.visit_params("", &mut |name, p| {
        names.push(String::from(name));
        analytic.push(p.grad.data().to_vec());
    });

    let mut rng = stream(config.seed, 0);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        kinks: 0,
        unresolved: 0,
    };
    for (t, grads) in analytic.iter().enumerate() {
        let indices: Vec<usize> = if grads.len() <= config.max_per_tensor {
            (0..grads.len()).collect()
        } else {
            (0..config.max_per_tensor).map(|_| rng.random_range(0..grads.len())).collect()
        };
        for i in indices {
            let original = nudge(model, t, i, None);
            let mut probe = Probe::default();
            let mut step = config.eps;
            for _ in 0..REFINEMENTS {
                probe = Probe::at(model, &mut objective, t, i, original, step, center)?;
                if !probe.kink {
                    break;
                }
                step /= 4.0;
            }
            nudge(model, t, i, Some(original));

            let numeric = probe.numeric;
            let exact_zero = grads[i] == 0.0 && numeric == 0.0;
            if !exact_zero && grads[i].abs() < probe.noise && numeric.abs() < probe.noise {
                report.unresolved += 1;
                continue;
            }
            if probe.kink {
                report.kinks += 1;
                continue;
            }
            let err = relative_error(grads[i], numeric);
            report.checked += 1;
            if report.worst.is_empty() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = alloc::format!("{}[{}]", names[t], i);
            }
        }
    }
    Ok(report)
}

/// Returns the current value of entry `i` of tensor `t`, optionally overwriting it.
/// Step shrinks by 4 up to this many times while the one-sided slopes disagree.
const REFINEMENTS: usize = 4;

#[derive(Default)]
struct Probe {
    numeric: f64,
    noise: f64,
    kink: bool,
}

impl Probe {
    fn at<M, F>(model: &mut M, objective: &mut F, t: usize, i: usize, original: f64, step: f64, center: f64) -> Result<Self>
    where
        M: Parameterized + ?Sized,
        F: FnMut(&mut M, bool) -> Result<f64>,
    {
        nudge(model, t, i, Some(original + step));
        let plus = objective(model, false)?;
        nudge(model, t, i, Some(original - step));
        let minus = objective(model, false)?;
        // Smallest gradient a difference quotient resolves to 1e-4 at this scale.
        let noise = 16384.0 * f64::EPSILON * plus.abs().max(minus.abs()).max(center.abs()) / step;
        let (up, down) = ((plus - center) / step, (center - minus) / step);
        Ok(Self {
            numeric: (plus - minus) / (2.0 * step),
            noise,
            kink: (up - down).abs() > 1e-4 * up.abs().max(down.abs()) + noise,
        })
    }
}

fn nudge<M: Parameterized + ?Sized>(model: &mut M, t: usize, i: usize, value: Option<f64>) -> f64 {
    let mut k = 0;
    let mut old = 0.0;
    model.visit_params("", &mut |_, p| {
        if k == t {
            old = p.value.data()[i];
            if let Some(v) = value {
                p.value.data_mut()[i] = v;
            }
        }
        k += 1;
    });
    old
}
