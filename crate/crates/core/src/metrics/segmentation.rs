use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::localization::{iou, threshold_heatmap, Keep};
use super::{EvalConfig, EvalSample, Variant};
use crate::error::{Error, Result};
use crate::kernels::{pairwise_mean, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub iou: f64,
    pub fscore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationOutcome {
    pub miou: f64,
    pub fscore: f64,
    pub per_sample: Vec<SegmentationScore>,
}

/// Pixel IoU and F-beta score of one prediction against one mask.
pub fn segmentation_scores(pred: &Mask, gt: &Mask, beta_sq: f64) -> Result<SegmentationScore> {
    let overlap = iou(pred, gt)?;
    let tp = pred.intersection_count(gt) as f64;
    let precision = if pred.count() == 0 { 0.0 } else { tp / pred.count() as f64 };
    let recall = if gt.count() == 0 { 0.0 } else { tp / gt.count() as f64 };
    let denom = beta_sq * precision + recall;
    let fscore = if denom > 0.0 { (1.0 + beta_sq) * precision * recall / denom } else { 0.0 };
    Ok(SegmentationScore { iou: overlap.value, fscore })
}

/// Mean IoU and mean F-score against the annotated masks.
///
/// The adaptive variant keeps as many pixels as the mask covers, so an empty
/// mask yields an empty prediction.
pub fn segmentation_metrics(samples: &[EvalSample], variant: Variant, cfg: &EvalConfig) -> Result<SegmentationOutcome> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let per_sample: Vec<SegmentationScore> = samples
        .par_iter()
        .map(|s| {
            let gt = s
                .gt
                .mask()
                .ok_or_else(|| Error::InvalidArgument(format!("sample {} has no segmentation mask", s.id)))?;
            let (h, w) = gt.dims();
            let pred = match variant {
                Variant::Ciou => threshold_heatmap(&s.heatmap, (h, w), Keep::Fraction(cfg.fraction), cfg.threshold_at)?,
                Variant::Adaptive if gt.count() == 0 => Mask::empty(h, w),
                Variant::Adaptive => threshold_heatmap(&s.heatmap, (h, w), Keep::Count(gt.count()), cfg.threshold_at)?,
            };
            segmentation_scores(&pred, gt, cfg.f_beta_sq)
        })
        .collect::<Result<_>>()?;
    let ious: Vec<f64> = per_sample.iter().map(|s| s.iou).collect();
    let fs: Vec<f64> = per_sample.iter().map(|s| s.fscore).collect();
    Ok(SegmentationOutcome { miou: pairwise_mean(&ious), fscore: pairwise_mean(&fs), per_sample })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Grid;
    use crate::metrics::GroundTruth;

    #[test]
    fn perfect_and_empty_predictions() {
        let bits: Vec<bool> = (0..16).map(|i| i % 4 < 2).collect();
        let gt = Mask::new(4, 4, bits).unwrap();
        let s = segmentation_scores(&gt, &gt, 0.3).unwrap();
        assert_eq!((s.iou, s.fscore), (1.0, 1.0));
        let s = segmentation_scores(&Mask::empty(4, 4), &gt, 0.3).unwrap();
        assert_eq!((s.iou, s.fscore), (0.0, 0.0));
    }

    #[test]
    fn fscore_weights_precision() {
        let gt = Mask::new(1, 4, vec![true, true, false, false]).unwrap();
        let pred = Mask::new(1, 4, vec![true, false, false, false]).unwrap();
        let s = segmentation_scores(&pred, &gt, 0.3).unwrap();
        assert!((s.fscore - 1.3 * 0.5 / (0.3 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn masks_are_required() {
        let gt = GroundTruth::from_boxes((4, 4), vec![crate::metrics::BoxRegion::new(0, 0, 2, 2)]).unwrap();
        let s = EvalSample::new("m", Grid::filled(4, 4, 0.0).unwrap(), gt);
        assert!(segmentation_metrics(&[s], Variant::Ciou, &EvalConfig::default()).is_err());
    }

    #[test]
    fn adaptive_recovers_planted_mask() {
        let bits: Vec<bool> = (0..16).map(|i| i == 3 || i == 9).collect();
        let mask = Mask::new(4, 4, bits).unwrap();
        let heat = mask.to_grid();
        let s = EvalSample::new("m", heat, GroundTruth::from_mask(mask).unwrap());
        let out = segmentation_metrics(&[s], Variant::Adaptive, &EvalConfig::default()).unwrap();
        assert_eq!((out.miou, out.fscore), (1.0, 1.0));
    }
}
