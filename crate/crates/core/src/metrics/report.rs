use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::extended::extended_metrics;
use super::localization::{auc, interactive_iou, localize_all, GroupOutcome};
use super::segmentation::segmentation_metrics;
use super::{Confidence, EvalConfig, EvalSample, ThresholdAt, Variant};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub positive: bool,
    pub variant: Variant,
    pub iou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fscore: Option<f64>,
}

impl SampleScore {
    fn new(sample: &EvalSample, variant: Variant, iou: f64) -> Self {
        Self {
            id: sample.id.clone(),
            group: sample.group.clone(),
            positive: sample.positive,
            variant,
            iou,
            success: None,
            confidence: None,
            fscore: None,
        }
    }
}

/// Aggregate scores plus the per-sample values they are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub metric: String,
    pub samples: usize,
    pub aggregates: BTreeMap<String, f64>,
    pub conventions: Vec<String>,
    pub flags: Vec<String>,
    pub config: EvalConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_sample: Vec<SampleScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupOutcome>,
}

impl MetricReport {
    fn new(metric: &str, samples: &[EvalSample], cfg: &EvalConfig) -> Result<Self> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(Error::Empty("no samples to evaluate".into()));
        }
        let mut conventions = vec![
            format!(
                "a source is localized when IoU {} {}",
                if cfg.strict { ">" } else { ">=" },
                cfg.success_iou
            ),
            format!("fixed-size prediction keeps the top {} of pixels", cfg.fraction),
            "adaptive prediction keeps as many pixels as the ground-truth area".into(),
            "equal heatmap values are ranked by ascending row-major index".into(),
            "several boxes of one source are merged into their union".into(),
        ];
        conventions.push(match cfg.threshold_at {
            ThresholdAt::GroundTruth => "heatmaps are bilinearly resized to the annotation before thresholding".into(),
            ThresholdAt::Heatmap => "heatmaps are thresholded at their own resolution, masks nearest-upsampled".into(),
        });
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            metric: metric.into(),
            samples: samples.len(),
            aggregates: BTreeMap::new(),
            conventions,
            flags: Vec::new(),
            config: cfg.clone(),
            per_sample: Vec::new(),
            groups: Vec::new(),
        })
    }

    fn auc_convention(&mut self) {
        self.conventions.push(format!(
            "AUC integrates the success rate over IoU thresholds 0 to 1 in steps of {} with the trapezoidal rule",
            self.config.auc_step
        ));
    }

    pub fn aggregate(&self, key: &str) -> Option<f64> {
        self.aggregates.get(key).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `metric,value` rows of the aggregate scores.
    pub fn aggregates_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "value"]).map_err(csv_error)?;
        for (k, v) in &self.aggregates {
            w.write_record([k.as_str(), &v.to_string()]).map_err(csv_error)?;
        }
        finish(w)
    }

    /// One row per evaluated sample.
    pub fn per_sample_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "group", "positive", "variant", "iou", "success", "confidence", "fscore"])
            .map_err(csv_error)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.per_sample {
            w.write_record([
                s.id.clone(),
                s.group.clone().unwrap_or_default(),
                s.positive.to_string(),
                match s.variant {
                    Variant::Ciou => "ciou".into(),
                    Variant::Adaptive => "adaptive".into(),
                },
                s.iou.to_string(),
                s.success.map(|b| b.to_string()).unwrap_or_default(),
                opt(s.confidence),
                opt(s.fscore),
            ])
            .map_err(csv_error)?;
        }
        finish(w)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn success_rate(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        hit += usize::from(f);
        n += 1;
    }
    hit as f64 / n as f64
}

/// cIoU and AUC for each requested variant; keys carry an ` Adap.` suffix for the adaptive one.
pub fn evaluate_localization(samples: &[EvalSample], variants: &[Variant], cfg: &EvalConfig) -> Result<MetricReport> {
    let mut report = MetricReport::new("localization", samples, cfg)?;
    report.auc_convention();
    for &variant in variants {
        let outcomes = localize_all(samples, variant, cfg)?;
        let ious: Vec<f64> = outcomes.iter().map(|o| o.iou).collect();
        report.aggregates.insert(format!("cIoU{}", variant.suffix()), success_rate(outcomes.iter().map(|o| o.success)));
        report.aggregates.insert(format!("AUC{}", variant.suffix()), auc(&ious, cfg)?);
        for (s, o) in samples.iter().zip(&outcomes) {
            let mut score = SampleScore::new(s, variant, o.iou);
            score.success = Some(o.success);
            report.per_sample.push(score);
        }
    }
    Ok(report)
}

/// IIoU and IAUC over image groups, plus the per-source success rate.
pub fn evaluate_interactive(samples: &[EvalSample], variant: Variant, cfg: &EvalConfig) -> Result<MetricReport> {
    let mut report = MetricReport::new("interactive", samples, cfg)?;
    report.auc_convention();
    report.conventions.push("an image counts only when every one of its sources is localized".into());
    report.conventions.push("IAUC is the AUC of the per-image minimum IoU over its sources".into());
    let out = interactive_iou(samples, variant, cfg)?;
    let suffix = variant.suffix();
    report.aggregates.insert(format!("IIoU{suffix}"), out.iiou);
    report.aggregates.insert(format!("IAUC{suffix}"), out.iauc);
    report.aggregates.insert(format!("cIoU{suffix}"), out.source_success_rate);
    for (s, o) in samples.iter().zip(&out.per_sample) {
        let mut score = SampleScore::new(s, variant, o.iou);
        score.success = Some(o.success);
        report.per_sample.push(score);
    }
    report.groups = out.groups;
    Ok(report)
}

/// AP, max-F1 and LocAcc over positive and non-matching pairs.
pub fn evaluate_extended(samples: &[EvalSample], cfg: &EvalConfig) -> Result<MetricReport> {
    let mut report = MetricReport::new("extended", samples, cfg)?;
    report.conventions.push(format!(
        "sample confidence is the {} of the resized heatmap",
        match cfg.confidence {
            Confidence::Max => "maximum",
            Confidence::Mean => "mean",
        }
    ));
    report.conventions.push("a detected positive is a true positive only when cIoU localizes it".into());
    report.conventions.push("thresholds sweep every distinct confidence; AP = sum (R_k - R_k-1) P_k".into());
    let out = extended_metrics(samples, cfg)?;
    report.aggregates.insert("AP".into(), out.ap);
    report.aggregates.insert("max-F1".into(), out.max_f1);
    report.aggregates.insert("LocAcc".into(), out.loc_acc);
    report.flags.push("LocAcc is the cIoU success rate over positive samples".into());
    if out.degenerate {
        report.flags.push(format!(
            "degenerate class balance: {} positive, {} negative",
            out.positives, out.negatives
        ));
    }
    let ious = localize_all(samples, Variant::Ciou, cfg)?;
    for (i, s) in samples.iter().enumerate() {
        let mut score = SampleScore::new(s, Variant::Ciou, ious[i].iou);
        score.success = Some(out.localized[i]);
        score.confidence = Some(out.confidences[i]);
        report.per_sample.push(score);
    }
    Ok(report)
}

/// mIoU and F-score against segmentation masks.
pub fn evaluate_segmentation(samples: &[EvalSample], variant: Variant, cfg: &EvalConfig) -> Result<MetricReport> {
    let mut report = MetricReport::new("segmentation", samples, cfg)?;
    report.conventions.push(format!(
        "F-score uses beta^2 = {} per sample, then averaged",
        cfg.f_beta_sq
    ));
    let out = segmentation_metrics(samples, variant, cfg)?;
    let suffix = variant.suffix();
    report.aggregates.insert(format!("mIoU{suffix}"), out.miou);
    report.aggregates.insert(format!("F-Score{suffix}"), out.fscore);
    for (s, o) in samples.iter().zip(&out.per_sample) {
        let mut score = SampleScore::new(s, variant, o.iou);
        score.fscore = Some(o.fscore);
        report.per_sample.push(score);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Grid;
    use crate::metrics::{BoxRegion, GroundTruth};

    fn samples() -> Vec<EvalSample> {
        let gt = GroundTruth::from_boxes((4, 4), vec![BoxRegion::new(0, 0, 2, 4)]).unwrap();
        let good = Grid::from_fn(4, 4, |_, x| if x < 2 { 1.0 } else { 0.0 }).unwrap();
        let bad = Grid::from_fn(4, 4, |y, _| y as f64).unwrap();
        vec![
            EvalSample::new("a,1", good.clone(), gt.clone()).with_group("g"),
            EvalSample::new("b", bad, gt).with_group("g"),
        ]
    }

    #[test]
    fn localization_keys_and_recomputation() {
        let r = evaluate_localization(&samples(), &[Variant::Ciou, Variant::Adaptive], &EvalConfig::default()).unwrap();
        for key in ["cIoU", "AUC", "cIoU Adap.", "AUC Adap."] {
            assert!(r.aggregate(key).is_some(), "{key}");
        }
        let adaptive: Vec<&SampleScore> = r.per_sample.iter().filter(|s| s.variant == Variant::Adaptive).collect();
        let rate = adaptive.iter().filter(|s| s.success == Some(true)).count() as f64 / adaptive.len() as f64;
        assert_eq!(r.aggregate("cIoU Adap."), Some(rate));
        let ious: Vec<f64> = adaptive.iter().map(|s| s.iou).collect();
        assert_eq!(r.aggregate("AUC Adap."), Some(auc(&ious, &EvalConfig::default()).unwrap()));
    }

    #[test]
    fn interactive_report_has_groups() {
        let r = evaluate_interactive(&samples(), Variant::Adaptive, &EvalConfig::default()).unwrap();
        assert_eq!(r.aggregate("IIoU Adap."), Some(0.0));
        assert_eq!(r.groups.len(), 1);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let r = evaluate_localization(&samples(), &[Variant::Ciou], &EvalConfig::default()).unwrap();
        let back: MetricReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let csv = r.per_sample_csv().unwrap();
        assert!(csv.contains("\"a,1\""));
        assert!(r.aggregates_csv().unwrap().starts_with("metric,value\n"));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = EvalConfig { auc_step: 0.03, ..EvalConfig::default() };
        assert!(evaluate_localization(&samples(), &[Variant::Ciou], &cfg).is_err());
    }
}
