mod common;

use avloc::contrastive::{
    batch_objective, gradient_step, loss_multi_positive, ContrastiveConfig, NegativeSampling, PairReduction,
};
use avloc::gradcheck::finite_difference_check;
use avloc::toy::planted_instance;

fn check(cfg: &ContrastiveConfig, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let (batch, proj) = common::toy_batch(seed, 4, 3, 8, 3, 3);
        let analytic = batch_objective(&batch, cfg, &proj, true).unwrap().gradients.unwrap().flatten();
        let numeric = common::numeric_gradient(&batch, &proj, cfg, 1e-3);
        let err = common::max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e} under {cfg:?}");
    }
}

#[test]
fn default_objective_matches_central_differences() {
    check(&ContrastiveConfig::default(), 100..105);
}

#[test]
fn variants_match_central_differences() {
    let variants = [
        ContrastiveConfig { include_intra_modality: true, ..Default::default() },
        ContrastiveConfig { symmetric: false, ..Default::default() },
        ContrastiveConfig { include_alignment: false, ..Default::default() },
        ContrastiveConfig { pair_reduction: PairReduction::Mean, include_intra_modality: true, ..Default::default() },
        ContrastiveConfig { negatives: NegativeSampling::RandomSlot { seed: 11 }, ..Default::default() },
    ];
    for cfg in &variants {
        check(cfg, 200..202);
    }
}

#[test]
fn gradient_tracks_temperature() {
    let (batch, proj) = common::toy_batch(9, 4, 3, 8, 3, 3);
    for tau in [0.07, 0.14, 0.5, 1.0] {
        let cfg = ContrastiveConfig { temperature: tau, ..Default::default() };
        let analytic = batch_objective(&batch, &cfg, &proj, true).unwrap().gradients.unwrap().flatten();
        let numeric = common::numeric_gradient(&batch, &proj, &cfg, 1e-3);
        let err = common::max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "tau {tau}: {err:e}");
    }
}

#[test]
fn anchor_gradient_matches_central_differences() {
    let (batch, proj) = common::toy_batch(3, 4, 3, 8, 3, 3);
    let cfg = ContrastiveConfig::default();
    let analytic = loss_multi_positive(2, &batch, &cfg, &proj).unwrap().gradients.flatten();
    let numeric = common::numeric_gradient_of(&batch, &proj, 1e-3, |b, p| {
        loss_multi_positive(2, b, &cfg, p).unwrap().total()
    });
    assert!(common::max_relative_error(&analytic, &numeric) < 1e-4);
}

#[test]
fn library_checker_agrees_with_test_oracle() {
    let (batch, proj) = common::toy_batch(5, 4, 3, 8, 3, 3);
    let cfg = ContrastiveConfig::default();
    let report = finite_difference_check(&batch, &proj, &cfg, 1e-3).unwrap();
    let analytic = batch_objective(&batch, &cfg, &proj, true).unwrap().gradients.unwrap().flatten();
    let numeric = common::numeric_gradient(&batch, &proj, &cfg, 1e-3);
    assert_eq!(report.parameters, analytic.len());
    assert!((report.max_relative_error - common::max_relative_error(&analytic, &numeric)).abs() < 1e-9);
}

#[test]
fn gradient_descent_decreases_planted_loss() {
    let cfg = ContrastiveConfig::default();
    let mut monotone = 0;
    for seed in 0..20 {
        let (mut batch, mut proj) = planted_instance(seed, 4, 8, 3, 3);
        let mut losses = Vec::with_capacity(201);
        for _ in 0..=200 {
            let obj = batch_objective(&batch, &cfg, &proj, true).unwrap();
            losses.push(obj.total);
            gradient_step(&mut batch, &mut proj, obj.gradients.as_ref().unwrap(), 0.1);
        }
        assert!(losses[200] < losses[0]);
        if losses[10..].windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone >= 19, "monotone after step 10 in {monotone}/20 seeds");
}
