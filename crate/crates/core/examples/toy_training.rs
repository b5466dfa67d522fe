//! Trains on generated scenes with and without the alignment term.

use avloc::contrastive::ContrastiveConfig;
use avloc::train::{toy_train, TrainConfig};

fn main() -> avloc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for include_alignment in [true, false] {
        let cfg = TrainConfig {
            seed,
            loss: ContrastiveConfig { include_alignment, ..ContrastiveConfig::default() },
            ..TrainConfig::default()
        };
        let r = toy_train(&cfg)?.report;
        println!("alignment term {}", if include_alignment { "on" } else { "off" });
        println!("  loss        {:.3} -> {:.3}", r.initial_loss, r.final_loss);
        println!("  alignment   {:.3} -> {:.3}", r.alignment_initial.alignment, r.alignment_final.alignment);
        println!("  magnitude   {:.3} -> {:.3}", r.alignment_initial.magnitude_mean, r.alignment_final.magnitude_mean);
        println!("  held-out IIoU {:.3}, train IIoU {:.3} -> {:.3}", r.heldout_final.iiou, r.train_initial.iiou, r.train_final.iiou);
    }
    Ok(())
}
