//! Sound source localization metrics.
//!
//! Every metric thresholds a heatmap into a predicted region and compares it
//! with the annotated region. Only the order of heatmap values matters, so
//! any strictly increasing transform of a heatmap leaves every score intact.

mod extended;
mod localization;
mod report;
mod segmentation;

pub use extended::{extended_metrics, ExtendedOutcome};
pub use localization::{
    adaptive_ciou, auc, ciou, interactive_iou, iou, localize, predicted_mask, GroupOutcome, InteractiveOutcome,
    Iou, Localization,
};
pub use report::{
    evaluate_extended, evaluate_interactive, evaluate_localization, evaluate_segmentation, MetricReport,
    SampleScore, REPORT_SCHEMA_VERSION,
};
pub use segmentation::{segmentation_metrics, segmentation_scores, SegmentationOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Grid, Mask};

/// Axis-aligned box in pixel coordinates, `[min, max)` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "[usize; 4]", from = "[usize; 4]")]
pub struct BoxRegion {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoxRegion {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn area(&self) -> usize {
        self.x_max.saturating_sub(self.x_min) * self.y_max.saturating_sub(self.y_min)
    }

    pub fn iou(&self, other: &BoxRegion) -> f64 {
        let ix = self.x_max.min(other.x_max).saturating_sub(self.x_min.max(other.x_min));
        let iy = self.y_max.min(other.y_max).saturating_sub(self.y_min.max(other.y_min));
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl From<BoxRegion> for [usize; 4] {
    fn from(b: BoxRegion) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl From<[usize; 4]> for BoxRegion {
    fn from(v: [usize; 4]) -> Self {
        BoxRegion::new(v[0], v[1], v[2], v[3])
    }
}

/// Annotation of one sounding source at resolution `(h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    boxes: Vec<BoxRegion>,
    mask: Option<Mask>,
    resolution: (usize, usize),
}

impl GroundTruth {
    pub fn new(resolution: (usize, usize), boxes: Vec<BoxRegion>, mask: Option<Mask>) -> Result<Self> {
        let (h, w) = resolution;
        if h == 0 || w == 0 {
            return Err(Error::Shape("ground-truth resolution must be positive".into()));
        }
        if boxes.is_empty() && mask.is_none() {
            return Err(Error::InvalidArgument("ground truth needs boxes or a mask".into()));
        }
        for b in &boxes {
            if b.x_min >= b.x_max || b.y_min >= b.y_max || b.x_max > w || b.y_max > h {
                return Err(Error::InvalidArgument(format!("box {b:?} is empty or outside {h}x{w}")));
            }
        }
        if let Some(m) = &mask {
            if m.dims() != resolution {
                return Err(Error::Shape(format!("mask {:?} does not match resolution {resolution:?}", m.dims())));
            }
        }
        Ok(Self { boxes, mask, resolution })
    }

    pub fn from_boxes(resolution: (usize, usize), boxes: Vec<BoxRegion>) -> Result<Self> {
        Self::new(resolution, boxes, None)
    }

    pub fn from_mask(mask: Mask) -> Result<Self> {
        let resolution = mask.dims();
        Self::new(resolution, Vec::new(), Some(mask))
    }

    pub fn boxes(&self) -> &[BoxRegion] {
        &self.boxes
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    /// Localization target: the union of the boxes, or the mask when no box is given.
    pub fn region(&self) -> Mask {
        if self.boxes.is_empty() {
            return self.mask.clone().expect("validated");
        }
        let (h, w) = self.resolution;
        let mut m = Mask::empty(h, w);
        for b in &self.boxes {
            for y in b.y_min..b.y_max {
                for x in b.x_min..b.x_max {
                    m.set(y, x, true);
                }
            }
        }
        m
    }

    pub fn area(&self) -> usize {
        self.region().count()
    }
}

/// One heatmap/annotation pair under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub id: String,
    pub heatmap: Grid,
    pub gt: GroundTruth,
    /// Image identifier shared by the sources of one scene.
    pub group: Option<String>,
    /// `false` for non-matching image/audio pairs of the extended sets.
    pub positive: bool,
}

impl EvalSample {
    pub fn new(id: impl Into<String>, heatmap: Grid, gt: GroundTruth) -> Self {
        Self { id: id.into(), heatmap, gt, group: None, positive: true }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn negative(mut self) -> Self {
        self.positive = false;
        self
    }
}

/// Size of the predicted region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Fixed fraction of the pixels (top 50% by default).
    Ciou,
    /// As many pixels as the annotated region covers.
    Adaptive,
}

impl Variant {
    pub fn suffix(self) -> &'static str {
        match self {
            Variant::Ciou => "",
            Variant::Adaptive => " Adap.",
        }
    }
}

/// Resolution at which the heatmap is thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdAt {
    /// Bilinearly upsample to the annotation resolution, then threshold.
    GroundTruth,
    /// Threshold at heatmap resolution, then nearest-upsample the mask.
    Heatmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confidence {
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Pixel fraction kept by the fixed-threshold variant.
    pub fraction: f64,
    pub success_iou: f64,
    /// Count a sample as correct only when IoU is strictly above `success_iou`.
    pub strict: bool,
    pub auc_step: f64,
    pub threshold_at: ThresholdAt,
    pub confidence: Confidence,
    pub f_beta_sq: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fraction: 0.5,
            success_iou: 0.5,
            strict: false,
            auc_step: 0.01,
            threshold_at: ThresholdAt::GroundTruth,
            confidence: Confidence::Max,
            f_beta_sq: 0.3,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        if !(0.0..=1.0).contains(&self.success_iou) {
            return Err(Error::InvalidArgument(format!("success IoU {} outside [0, 1]", self.success_iou)));
        }
        let steps = 1.0 / self.auc_step;
        if !(self.auc_step > 0.0 && self.auc_step <= 1.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("AUC step {} must divide 1", self.auc_step)));
        }
        if !(self.f_beta_sq > 0.0) {
            return Err(Error::InvalidArgument("F-score beta^2 must be positive".into()));
        }
        Ok(())
    }

    pub fn is_success(&self, iou: f64) -> bool {
        if self.strict {
            iou > self.success_iou
        } else {
            iou >= self.success_iou
        }
    }

    fn auc_steps(&self) -> usize {
        (1.0 / self.auc_step).round() as usize
    }
}
