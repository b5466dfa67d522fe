//! The multi-positive objective on a seeded toy batch, with and without the
//! alignment term, and a finite-difference check of its gradients.

use avloc::contrastive::{batch_objective, info_nce, ContrastiveConfig, PairReduction};
use avloc::gradcheck::finite_difference_check;
use avloc::toy::random_instance;

fn main() -> avloc::Result<()> {
    println!("info_nce of 16 equal scores = {:.6} (ln 16 = {:.6})", info_nce(&[0.3; 16], 0, 0.07)?, 16f64.ln());

    let (batch, proj) = random_instance(11, 6, 3, 8, 4, 4);
    let configs = [
        ("localization only", ContrastiveConfig { include_alignment: false, ..ContrastiveConfig::default() }),
        ("with alignment", ContrastiveConfig::default()),
        ("with intra-modality", ContrastiveConfig { include_intra_modality: true, ..ContrastiveConfig::default() }),
        ("mean over pairs", ContrastiveConfig { pair_reduction: PairReduction::Mean, ..ContrastiveConfig::default() }),
    ];
    for (name, cfg) in &configs {
        let out = batch_objective(&batch, cfg, &proj, true)?;
        let g = out.gradients.expect("requested");
        println!("{name:<20} loss {:>9.4}  |grad|_inf {:.4}", out.total, g.max_abs());
    }

    let (small, small_proj) = random_instance(3, 4, 3, 8, 3, 3);
    let check = finite_difference_check(&small, &small_proj, &ContrastiveConfig::default(), 1e-3)?;
    println!(
        "gradient check over {} parameters: max relative error {:.2e}",
        check.parameters, check.max_relative_error
    );
    Ok(())
}
