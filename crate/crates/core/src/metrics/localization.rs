use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalConfig, EvalSample, ThresholdAt, Variant};
use crate::error::{Error, Result};
use crate::kernels::{bilinear_resize, top_count_mask, top_fraction_mask, Grid, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iou {
    pub value: f64,
    /// Both masks were empty; `value` is then 0.
    pub empty_union: bool,
}

pub fn iou(pred: &Mask, gt: &Mask) -> Result<Iou> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!("prediction {:?} vs ground truth {:?}", pred.dims(), gt.dims())));
    }
    let union = pred.union_count(gt);
    if union == 0 {
        return Ok(Iou { value: 0.0, empty_union: true });
    }
    Ok(Iou { value: pred.intersection_count(gt) as f64 / union as f64, empty_union: false })
}

/// Outcome of localizing one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub iou: f64,
    pub success: bool,
}

/// Binary prediction at the resolution `target`, keeping `fraction` of the pixels
/// or `count` pixels measured at that resolution.
pub(crate) fn threshold_heatmap(
    heatmap: &Grid,
    target: (usize, usize),
    keep: Keep,
    threshold_at: ThresholdAt,
) -> Result<Mask> {
    let (th, tw) = target;
    match threshold_at {
        ThresholdAt::GroundTruth => {
            let resized = bilinear_resize(heatmap, th, tw)?;
            match keep {
                Keep::Fraction(f) => top_fraction_mask(&resized, f),
                Keep::Count(n) => top_count_mask(&resized, n),
            }
        }
        ThresholdAt::Heatmap => {
            let mask = match keep {
                Keep::Fraction(f) => top_fraction_mask(heatmap, f)?,
                Keep::Count(n) => {
                    let scaled = n as f64 * heatmap.len() as f64 / (th * tw) as f64;
                    let scaled = (scaled.round() as usize).clamp(1, heatmap.len());
                    top_count_mask(heatmap, scaled)?
                }
            };
            Ok(mask.resize_nearest(th, tw))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Keep {
    Fraction(f64),
    Count(usize),
}

/// Predicted region of `sample` under `variant`.
pub fn predicted_mask(sample: &EvalSample, variant: Variant, cfg: &EvalConfig) -> Result<Mask> {
    let keep = match variant {
        Variant::Ciou => Keep::Fraction(cfg.fraction),
        Variant::Adaptive => Keep::Count(nonempty_area(sample)?),
    };
    threshold_heatmap(&sample.heatmap, sample.gt.resolution(), keep, cfg.threshold_at)
}

fn nonempty_area(sample: &EvalSample) -> Result<usize> {
    let area = sample.gt.area();
    if area == 0 {
        return Err(Error::Empty(format!("ground truth of sample {}", sample.id)));
    }
    Ok(area)
}

pub fn localize(sample: &EvalSample, variant: Variant, cfg: &EvalConfig) -> Result<Localization> {
    nonempty_area(sample)?;
    let pred = predicted_mask(sample, variant, cfg)?;
    let value = iou(&pred, &sample.gt.region())?.value;
    Ok(Localization { iou: value, success: cfg.is_success(value) })
}

pub fn ciou(sample: &EvalSample, cfg: &EvalConfig) -> Result<Localization> {
    localize(sample, Variant::Ciou, cfg)
}

pub fn adaptive_ciou(sample: &EvalSample, cfg: &EvalConfig) -> Result<Localization> {
    localize(sample, Variant::Adaptive, cfg)
}

pub(crate) fn localize_all(samples: &[EvalSample], variant: Variant, cfg: &EvalConfig) -> Result<Vec<Localization>> {
    samples.par_iter().map(|s| localize(s, variant, cfg)).collect()
}

/// Area under the success-rate curve as the IoU threshold sweeps `0, step, ..., 1`.
///
/// Trapezoidal rule; a sample succeeds at threshold `t` when its IoU is at least `t`.
pub fn auc(ious: &[f64], cfg: &EvalConfig) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::Empty("AUC needs at least one IoU".into()));
    }
    let steps = cfg.auc_steps();
    let n = ious.len() as f64;
    let rate = |k: usize| {
        let t = k as f64 / steps as f64;
        ious.iter().filter(|&&v| v >= t).count() as f64 / n
    };
    let rates: Vec<f64> = (0..=steps).map(rate).collect();
    let area: f64 = rates.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
    Ok(area / steps as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub group: String,
    pub sources: usize,
    pub success: bool,
    pub min_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractiveOutcome {
    pub iiou: f64,
    pub iauc: f64,
    /// Per-source success rate over the same samples.
    pub source_success_rate: f64,
    pub groups: Vec<GroupOutcome>,
    pub per_sample: Vec<Localization>,
}

/// A group counts only when every one of its sources is localized.
pub fn interactive_iou(samples: &[EvalSample], variant: Variant, cfg: &EvalConfig) -> Result<InteractiveOutcome> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let g = s
            .group
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("sample {} has no group id", s.id)))?;
        groups.entry(g).or_default().push(i);
    }
    if let Some((g, _)) = groups.iter().find(|(_, members)| members.len() < 2) {
        return Err(Error::InvalidArgument(format!("group {g} has a single source")));
    }
    let per_sample = localize_all(samples, variant, cfg)?;
    let outcomes: Vec<GroupOutcome> = groups
        .into_iter()
        .map(|(g, members)| GroupOutcome {
            group: g.to_string(),
            sources: members.len(),
            success: members.iter().all(|&i| per_sample[i].success),
            min_iou: members.iter().map(|&i| per_sample[i].iou).fold(f64::INFINITY, f64::min),
        })
        .collect();
    let successes = outcomes.iter().filter(|g| g.success).count();
    let mins: Vec<f64> = outcomes.iter().map(|g| g.min_iou).collect();
    Ok(InteractiveOutcome {
        iiou: successes as f64 / outcomes.len() as f64,
        iauc: auc(&mins, cfg)?,
        source_success_rate: per_sample.iter().filter(|l| l.success).count() as f64 / per_sample.len() as f64,
        groups: outcomes,
        per_sample,
    })
}
