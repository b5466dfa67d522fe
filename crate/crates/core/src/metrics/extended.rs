use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::localization::localize;
use super::{Confidence, EvalConfig, EvalSample, Variant};
use crate::error::{Error, Result};
use crate::kernels::{bilinear_resize, pairwise_mean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedOutcome {
    pub ap: f64,
    pub max_f1: f64,
    /// Localization success rate over the positive samples.
    pub loc_acc: f64,
    /// Confidence threshold at which `max_f1` is reached.
    pub best_threshold: f64,
    pub positives: usize,
    pub negatives: usize,
    /// No positives or no negatives: precision and recall are not informative.
    pub degenerate: bool,
    pub confidences: Vec<f64>,
    pub localized: Vec<bool>,
}

fn confidence(sample: &EvalSample, cfg: &EvalConfig) -> Result<f64> {
    let (h, w) = sample.gt.resolution();
    let resized = bilinear_resize(&sample.heatmap, h, w)?;
    Ok(match cfg.confidence {
        Confidence::Max => resized.max(),
        Confidence::Mean => pairwise_mean(resized.as_slice()),
    })
}

/// Detection over positive and non-matching pairs.
///
/// A sample is detected when its confidence reaches the threshold; a detected
/// positive is a true positive only when it is also localized by cIoU.
/// Thresholds sweep the distinct confidences from high to low and
/// `AP = sum_k (R_k - R_{k-1}) P_k`.
pub fn extended_metrics(samples: &[EvalSample], cfg: &EvalConfig) -> Result<ExtendedOutcome> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let scored: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|s| {
            let conf = confidence(s, cfg)?;
            let localized = s.positive && localize(s, Variant::Ciou, cfg)?.success;
            Ok((conf, localized))
        })
        .collect::<Result<_>>()?;
    let positives = samples.iter().filter(|s| s.positive).count();
    let negatives = samples.len() - positives;
    let localized_total = scored.iter().filter(|(_, l)| *l).count();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));

    let (mut ap, mut max_f1, mut best_threshold) = (0.0, 0.0, scored[order[0]].0);
    let (mut detected, mut tp, mut prev_recall) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scored[order[i]].0;
        while i < order.len() && scored[order[i]].0 == threshold {
            detected += 1;
            tp += usize::from(scored[order[i]].1);
            i += 1;
        }
        let precision = tp as f64 / detected as f64;
        let recall = if positives == 0 { 0.0 } else { tp as f64 / positives as f64 };
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        if f1 > max_f1 {
            max_f1 = f1;
            best_threshold = threshold;
        }
    }

    Ok(ExtendedOutcome {
        ap,
        max_f1,
        loc_acc: if positives == 0 { 0.0 } else { localized_total as f64 / positives as f64 },
        best_threshold,
        positives,
        negatives,
        degenerate: positives == 0 || negatives == 0,
        confidences: scored.iter().map(|s| s.0).collect(),
        localized: scored.iter().map(|s| s.1).collect(),
    })
}
