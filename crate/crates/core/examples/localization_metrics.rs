//! cIoU against Adaptive cIoU on a small object, plus AUC over a handful of samples.

use avloc::kernels::Grid;
use avloc::metrics::{adaptive_ciou, auc, ciou, BoxRegion, EvalConfig, EvalSample, GroundTruth};

fn main() -> avloc::Result<()> {
    let cfg = EvalConfig::default();

    // A 2x2 object in a 16x16 image and a heatmap peaked exactly on it.
    let bbox = BoxRegion::new(6, 6, 8, 8);
    let heatmap = Grid::from_fn(16, 16, |y, x| {
        let (dy, dx) = (y as f64 - 6.5, x as f64 - 6.5);
        (-(dy * dy + dx * dx) / 4.0).exp()
    })?;
    let sample = EvalSample::new("small-object", heatmap, GroundTruth::from_boxes((16, 16), vec![bbox])?);

    let fixed = ciou(&sample, &cfg)?;
    let adaptive = adaptive_ciou(&sample, &cfg)?;
    println!("gt covers {:.1}% of the image", 100.0 * bbox.area() as f64 / 256.0);
    println!("cIoU          IoU {:.4} success {}", fixed.iou, fixed.success);
    println!("Adaptive cIoU IoU {:.4} success {}", adaptive.iou, adaptive.success);

    let ious = [0.2, 0.6, 1.0, fixed.iou, adaptive.iou];
    println!("AUC over {:?} = {:.4}", ious, auc(&ious, &cfg)?);
    Ok(())
}
