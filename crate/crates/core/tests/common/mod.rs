//! Test-only helpers: toy batch generation and an independent
//! central-difference gradient oracle.
#![allow(dead_code)]

use avloc::contrastive::{batch_loss, ContrastiveConfig, PositiveSet, Projections};
use avloc::correspondence::Projection;
use avloc::kernels::{Embedding, FeatureMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn toy_batch(seed: u64, n: usize, slots: usize, c: usize, h: usize, w: usize) -> (Vec<PositiveSet>, Projections) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = (0..n)
        .map(|_| PositiveSet {
            visual: (0..slots).map(|_| FeatureMap::new(c, h, w, gaussian(&mut rng, c * h * w)).unwrap()).collect(),
            audio: (0..slots).map(|_| Embedding::new(gaussian(&mut rng, c)).unwrap()).collect(),
        })
        .collect();
    (batch, Projections::seeded(c, seed.wrapping_mul(31).wrapping_add(7)))
}

pub fn flatten(batch: &[PositiveSet], proj: &Projections) -> Vec<f64> {
    let mut out = Vec::new();
    for s in batch {
        for v in &s.visual {
            out.extend_from_slice(v.as_slice());
        }
    }
    for s in batch {
        for a in &s.audio {
            out.extend_from_slice(a.as_slice());
        }
    }
    for p in [&proj.visual, &proj.audio] {
        out.extend_from_slice(p.weight());
        out.extend_from_slice(p.bias());
    }
    out
}

pub fn unflatten(template: &[PositiveSet], proj: &Projections, flat: &[f64]) -> (Vec<PositiveSet>, Projections) {
    let mut it = flat.iter().copied();
    let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
    let mut batch: Vec<PositiveSet> = template.to_vec();
    for s in batch.iter_mut() {
        for v in s.visual.iter_mut() {
            let (c, h, w) = v.dims();
            *v = FeatureMap::new(c, h, w, take(c * h * w)).unwrap();
        }
    }
    for s in batch.iter_mut() {
        for a in s.audio.iter_mut() {
            *a = Embedding::new(take(a.dim())).unwrap();
        }
    }
    let mut heads = Vec::new();
    for p in [&proj.visual, &proj.audio] {
        let (di, dout) = (p.input_dim(), p.output_dim());
        let wgt = take(di * dout);
        let b = take(dout);
        heads.push(Projection::new(di, dout, wgt, b).unwrap());
    }
    let audio = heads.pop().unwrap();
    let visual = heads.pop().unwrap();
    (batch, Projections { visual, audio })
}

/// Central differences of the batch loss over every parameter.
pub fn numeric_gradient(batch: &[PositiveSet], proj: &Projections, cfg: &ContrastiveConfig, step: f64) -> Vec<f64> {
    numeric_gradient_of(batch, proj, step, |b, p| batch_loss(b, cfg, p).unwrap())
}

pub fn numeric_gradient_of(
    batch: &[PositiveSet],
    proj: &Projections,
    step: f64,
    f: impl Fn(&[PositiveSet], &Projections) -> f64,
) -> Vec<f64> {
    let base = flatten(batch, proj);
    let mut out = Vec::with_capacity(base.len());
    let mut x = base.clone();
    for i in 0..base.len() {
        x[i] = base[i] + step;
        let (b, p) = unflatten(batch, proj, &x);
        let plus = f(&b, &p);
        x[i] = base[i] - step;
        let (b, p) = unflatten(batch, proj, &x);
        let minus = f(&b, &p);
        x[i] = base[i];
        out.push((plus - minus) / (2.0 * step));
    }
    out
}

/// `max_i |a_i - n_i| / max(max_j |a_j|, max_j |n_j|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}
