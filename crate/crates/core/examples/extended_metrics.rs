//! AP, max-F1 and LocAcc when matching and non-matching pairs are mixed.

use avloc::kernels::Grid;
use avloc::metrics::{evaluate_extended, BoxRegion, EvalConfig, EvalSample, GroundTruth};

fn main() -> avloc::Result<()> {
    let bbox = BoxRegion::new(2, 2, 6, 6);
    let gt = GroundTruth::from_boxes((8, 8), vec![bbox])?;
    let blob = |peak: f64, cx: f64| {
        Grid::from_fn(8, 8, move |y, x| {
            let (dy, dx) = (y as f64 - 3.5, x as f64 - cx);
            peak * (-(dy * dy + dx * dx) / 6.0).exp()
        })
    };

    let mut samples = Vec::new();
    for (i, peak) in [0.9, 0.8, 0.7, 0.6].into_iter().enumerate() {
        samples.push(EvalSample::new(format!("pos-{i}"), blob(peak, 3.5)?, gt.clone()));
    }
    // Confident but pointing at the wrong place.
    samples.push(EvalSample::new("pos-misplaced", blob(0.95, 7.0)?, gt.clone()));
    for (i, peak) in [0.75, 0.3, 0.2].into_iter().enumerate() {
        samples.push(EvalSample::new(format!("neg-{i}"), blob(peak, 3.5)?, gt.clone()).negative());
    }

    let report = evaluate_extended(&samples, &EvalConfig::default())?;
    for (k, v) in &report.aggregates {
        println!("{k:>7} {v:.4}");
    }
    for s in &report.per_sample {
        println!("{:<14} confidence {:.2} localized {}", s.id, s.confidence.unwrap_or(0.0), s.success.unwrap_or(false));
    }
    Ok(())
}
