//! Seeded toy instances for exercising the contrastive objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::contrastive::{PositiveSet, Projections};
use crate::kernels::{Embedding, FeatureMap};

pub(crate) fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub(crate) fn unit_direction(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, c);
        let n = crate::kernels::norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Standard-normal features in every slot and fan-in initialised heads.
pub fn random_instance(seed: u64, n: usize, slots: usize, c: usize, h: usize, w: usize) -> (Vec<PositiveSet>, Projections) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = (0..n)
        .map(|_| PositiveSet {
            visual: (0..slots)
                .map(|_| FeatureMap::new(c, h, w, gaussian(&mut rng, c * h * w)).expect("finite"))
                .collect(),
            audio: (0..slots).map(|_| Embedding::new(gaussian(&mut rng, c)).expect("finite")).collect(),
        })
        .collect();
    (batch, Projections::seeded(c, splitmix_seed(seed)))
}

fn splitmix_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17) ^ 0x5bd1_e995
}

/// Independent ChaCha stream `stream` under `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Batch where sample `i` carries a planted direction: its audio points along
/// it and a block of its visual map does. Augmented views add small noise,
/// concept members are fresh draws around the same direction.
pub fn planted_instance(seed: u64, n: usize, c: usize, h: usize, w: usize) -> (Vec<PositiveSet>, Projections) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hw = h * w;
    let mut batch = Vec::with_capacity(n);
    for _ in 0..n {
        let dir = unit_direction(&mut rng, c);
        let y0 = rng.random_range(0..h.max(2) / 2);
        let x0 = rng.random_range(0..w.max(2) / 2);
        let draw_visual = |rng: &mut ChaCha8Rng, noise: f64| {
            let mut data: Vec<f64> = gaussian(rng, c * hw).into_iter().map(|v| 0.5 * v).collect();
            for y in y0..(y0 + h.div_ceil(2)).min(h) {
                for x in x0..(x0 + w.div_ceil(2)).min(w) {
                    for k in 0..c {
                        data[k * hw + y * w + x] = 2.0 * dir[k] + noise * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            FeatureMap::new(c, h, w, data).expect("finite")
        };
        let v = draw_visual(&mut rng, 0.1);
        let v_aug = FeatureMap::new(
            c,
            h,
            w,
            v.as_slice().iter().map(|x| x + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect(),
        )
        .expect("finite");
        let v_conc = draw_visual(&mut rng, 0.2);
        let draw_audio = |rng: &mut ChaCha8Rng, noise: f64| {
            Embedding::new(dir.iter().map(|d| 2.0 * d + noise * rng.sample::<f64, _>(StandardNormal)).collect())
                .expect("finite")
        };
        let a = draw_audio(&mut rng, 0.1);
        let a_aug = draw_audio(&mut rng, 0.15);
        let a_conc = draw_audio(&mut rng, 0.3);
        batch.push(PositiveSet::triple([v, v_aug, v_conc], [a, a_aug, a_conc]));
    }
    (batch, Projections::seeded(c, splitmix_seed(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let (a, pa) = random_instance(3, 4, 3, 8, 3, 3);
        let (b, pb) = random_instance(3, 4, 3, 8, 3, 3);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert_ne!(a, random_instance(4, 4, 3, 8, 3, 3).0);
        let (p, _) = planted_instance(1, 4, 8, 3, 3);
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|s| s.visual.len() == 3 && s.audio.len() == 3));
    }
}
