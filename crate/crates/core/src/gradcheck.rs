//! Central-difference verification of the analytic contrastive gradients.

use serde::Serialize;

use crate::contrastive::{batch_loss, batch_objective, ContrastiveConfig, PositiveSet, Projections};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub step: f64,
    pub loss: f64,
    /// `max_i |g_i - fd_i| / max(max|g|, max|fd|)`.
    pub max_relative_error: f64,
    /// `max_i |g_i - fd_i| / max(|g_i|, |fd_i|, 1)`.
    pub max_elementwise_relative_error: f64,
    pub max_abs_error: f64,
    pub gradient_scale: f64,
    pub worst_index: usize,
}

enum Slot {
    Visual(usize, usize, usize),
    Audio(usize, usize, usize),
    Weight(usize, usize),
    Bias(usize, usize),
}

/// Locates parameter `index` in `Gradients::flatten` order.
fn locate(batch: &[PositiveSet], proj: &Projections, mut index: usize) -> Slot {
    for (j, s) in batch.iter().enumerate() {
        for (p, v) in s.visual.iter().enumerate() {
            let n = v.as_slice().len();
            if index < n {
                return Slot::Visual(j, p, index);
            }
            index -= n;
        }
    }
    for (j, s) in batch.iter().enumerate() {
        for (q, a) in s.audio.iter().enumerate() {
            if index < a.dim() {
                return Slot::Audio(j, q, index);
            }
            index -= a.dim();
        }
    }
    for (h, head) in [&proj.visual, &proj.audio].into_iter().enumerate() {
        if index < head.weight().len() {
            return Slot::Weight(h, index);
        }
        index -= head.weight().len();
        if index < head.bias().len() {
            return Slot::Bias(h, index);
        }
        index -= head.bias().len();
    }
    panic!("parameter index out of range")
}

fn parameter_mut<'a>(batch: &'a mut [PositiveSet], proj: &'a mut Projections, index: usize) -> &'a mut f64 {
    let head = |proj: &'a mut Projections, h: usize| if h == 0 { &mut proj.visual } else { &mut proj.audio };
    match locate(batch, proj, index) {
        Slot::Visual(j, p, k) => &mut batch[j].visual[p].as_mut_slice()[k],
        Slot::Audio(j, q, k) => &mut batch[j].audio[q].as_mut_slice()[k],
        Slot::Weight(h, k) => &mut head(proj, h).weight_mut()[k],
        Slot::Bias(h, k) => &mut head(proj, h).bias_mut()[k],
    }
}

pub fn finite_difference_check(
    batch: &[PositiveSet],
    proj: &Projections,
    cfg: &ContrastiveConfig,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let objective = batch_objective(batch, cfg, proj, true)?;
    let analytic = objective.gradients.expect("requested").flatten();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut b = batch.to_vec();
    let mut p = proj.clone();
    for i in 0..analytic.len() {
        let orig = *parameter_mut(&mut b, &mut p, i);
        *parameter_mut(&mut b, &mut p, i) = orig + step;
        let plus = batch_loss(&b, cfg, &p)?;
        *parameter_mut(&mut b, &mut p, i) = orig - step;
        let minus = batch_loss(&b, cfg, &p)?;
        *parameter_mut(&mut b, &mut p, i) = orig;
        numeric.push((plus - minus) / (2.0 * step));
    }

    let scale = analytic.iter().chain(&numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut report = GradCheckReport {
        parameters: analytic.len(),
        step,
        loss: objective.total,
        max_relative_error: 0.0,
        max_elementwise_relative_error: 0.0,
        max_abs_error: 0.0,
        gradient_scale: scale,
        worst_index: 0,
    };
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - n).abs();
        if err > report.max_abs_error {
            report.max_abs_error = err;
            report.worst_index = i;
        }
        report.max_elementwise_relative_error =
            report.max_elementwise_relative_error.max(err / a.abs().max(n.abs()).max(1.0));
    }
    report.max_relative_error = if scale > 0.0 { report.max_abs_error / scale } else { report.max_abs_error };
    Ok(report)
}
