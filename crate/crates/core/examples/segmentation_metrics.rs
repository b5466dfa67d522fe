//! mIoU and F-score of thresholded heatmaps against masks.

use avloc::kernels::{Grid, Mask};
use avloc::metrics::{evaluate_segmentation, segmentation_scores, EvalConfig, EvalSample, GroundTruth, Variant};

fn main() -> avloc::Result<()> {
    let disc = |r: f64| Mask::from_grid(&Grid::from_fn(12, 12, |y, x| {
        let (dy, dx) = (y as f64 - 5.5, x as f64 - 5.5);
        f64::from(u8::from(dy * dy + dx * dx <= r * r))
    }).expect("valid grid"));

    let gt = disc(3.0);
    for r in [2.0, 3.0, 4.5] {
        let s = segmentation_scores(&disc(r), &gt, 0.3)?;
        println!("disc r={r}: IoU {:.3} F(beta^2=0.3) {:.3}", s.iou, s.fscore);
    }

    let heatmap = Grid::from_fn(12, 12, |y, x| {
        let (dy, dx) = (y as f64 - 5.0, x as f64 - 6.0);
        -(dy * dy + dx * dx)
    })?;
    let samples = vec![EvalSample::new("disc", heatmap, GroundTruth::from_mask(gt)?)];
    let cfg = EvalConfig::default();
    for variant in [Variant::Ciou, Variant::Adaptive] {
        let r = evaluate_segmentation(&samples, variant, &cfg)?;
        println!("{:?}: {:?}", variant, r.aggregates);
    }
    Ok(())
}
