//! Localization similarity (spatial correspondence maps) and projected
//! alignment similarity between a visual feature map and an audio embedding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{avg_pool, cosine, dot, norm, Embedding, FeatureMap, Grid, Mask, NORM_EPS};

/// Affine projection head `x -> weight * x + bias`, one per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    d_in: usize,
    d_out: usize,
    /// Row-major `d_out × d_in`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Projection {
    pub fn new(d_in: usize, d_out: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::Shape("projection dims must be positive".into()));
        }
        if weight.len() != d_in * d_out || bias.len() != d_out {
            return Err(Error::Shape(format!(
                "projection {d_out}x{d_in} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite projection parameter".into()));
        }
        Ok(Self { d_in, d_out, weight, bias })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weight = vec![0.0; dim * dim];
        for i in 0..dim {
            weight[i * dim + i] = 1.0;
        }
        Self { d_in: dim, d_out: dim, weight, bias: vec![0.0; dim] }
    }

    /// Fan-in uniform initialisation in `[-1/sqrt(d_in), 1/sqrt(d_in)]`.
    pub fn seeded_uniform(d_in: usize, d_out: usize, seed: u64) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = (0..d_in * d_out).map(|_| rng.random_range(-bound..=bound)).collect();
        let bias = (0..d_out).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { d_in, d_out, weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn output_dim(&self) -> usize {
        self.d_out
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.d_in)
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// `weight^T * g`
    pub(crate) fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d_in];
        for (row, gi) in self.weight.chunks_exact(self.d_in).zip(g) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gi;
            }
        }
        out
    }
}

/// Per-location cosine between visual columns and an audio embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceMap {
    pub map: Grid,
}

impl CorrespondenceMap {
    pub fn source_dims(&self) -> (usize, usize) {
        self.map.dims()
    }
}

fn check_channels(v: &FeatureMap, a: &Embedding) -> Result<()> {
    if v.channels() != a.dim() {
        return Err(Error::Shape(format!(
            "visual has {} channels but audio has {} dims",
            v.channels(),
            a.dim()
        )));
    }
    Ok(())
}

pub fn correspondence_map(v: &FeatureMap, a: &Embedding) -> Result<CorrespondenceMap> {
    check_channels(v, a)?;
    let a_norm = a.norm();
    if a_norm <= NORM_EPS {
        return Err(Error::ZeroVector("audio embedding".into()));
    }
    let (c, h, w) = v.dims();
    let hw = h * w;
    let data = v.as_slice();
    let mut out = Vec::with_capacity(hw);
    for loc in 0..hw {
        let (mut d, mut nn) = (0.0, 0.0);
        for k in 0..c {
            let x = data[k * hw + loc];
            d += x * a.as_slice()[k];
            nn += x * x;
        }
        let col_norm = nn.sqrt();
        if col_norm <= NORM_EPS {
            return Err(Error::ZeroVector(format!(
                "visual column at (y={}, x={})",
                loc / w,
                loc % w
            )));
        }
        out.push((d / (col_norm * a_norm)).clamp(-1.0, 1.0));
    }
    Ok(CorrespondenceMap { map: Grid::new(h, w, out)? })
}

/// Mean correspondence over the masked locations (all locations when `mask` is `None`).
pub fn sim_localize(v: &FeatureMap, a: &Embedding, mask: Option<&Mask>) -> Result<f64> {
    let cmap = correspondence_map(v, a)?;
    let values = cmap.map.as_slice();
    match mask {
        None => Ok(values.iter().sum::<f64>() / values.len() as f64),
        Some(m) => {
            if m.dims() != cmap.map.dims() {
                return Err(Error::Shape(format!(
                    "mask {:?} does not match map {:?}",
                    m.dims(),
                    cmap.map.dims()
                )));
            }
            let n = m.count();
            if n == 0 {
                return Err(Error::Empty("localization mask selects no pixels".into()));
            }
            let s: f64 = values.iter().zip(m.bits()).filter(|(_, &b)| b).map(|(v, _)| v).sum();
            Ok(s / n as f64)
        }
    }
}

pub fn project(x: &Embedding, p: &Projection) -> Result<Embedding> {
    if x.dim() != p.d_in {
        return Err(Error::Shape(format!(
            "projection expects {} inputs, got {}",
            p.d_in,
            x.dim()
        )));
    }
    Embedding::new(p.apply(x.as_slice()))
}

/// Cosine between projected pooled visual features and projected audio.
pub fn sim_align(v: &FeatureMap, a: &Embedding, pv: &Projection, pa: &Projection) -> Result<f64> {
    if pv.d_out != pa.d_out {
        return Err(Error::Shape(format!(
            "projection outputs differ: {} vs {}",
            pv.d_out, pa.d_out
        )));
    }
    let zv = project(&avg_pool(v), pv)?;
    let za = project(a, pa)?;
    if norm(zv.as_slice()) <= NORM_EPS || norm(za.as_slice()) <= NORM_EPS {
        return Err(Error::ZeroVector("projected feature".into()));
    }
    cosine(zv.as_slice(), za.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn map_of_matching_columns_is_one() {
        let a = [0.5, -1.0, 2.0];
        let v = FeatureMap::constant_column(&a, 2, 3).unwrap();
        let m = correspondence_map(&v, &Embedding::new(a.to_vec()).unwrap()).unwrap();
        assert!(m.map.as_slice().iter().all(|&c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn map_of_orthogonal_columns_is_zero() {
        let v = FeatureMap::constant_column(&[0.0, 3.0], 2, 2).unwrap();
        let m = correspondence_map(&v, &Embedding::new(vec![2.0, 0.0]).unwrap()).unwrap();
        assert!(m.map.as_slice().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn map_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = FeatureMap::new(8, 3, 3, gaussian(&mut rng, 72)).unwrap();
        let a = Embedding::new(gaussian(&mut rng, 8)).unwrap();
        let m = correspondence_map(&v, &a).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let col: Vec<f64> = (0..8).map(|k| v.get(k, y, x)).collect();
                let num: f64 = col.iter().zip(a.as_slice()).map(|(p, q)| p * q).sum();
                let den = col.iter().map(|p| p * p).sum::<f64>().sqrt()
                    * a.as_slice().iter().map(|q| q * q).sum::<f64>().sqrt();
                assert!((m.map.get(y, x) - num / den).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_column_is_named() {
        let mut data = vec![1.0; 2 * 2 * 2];
        data[3] = 0.0;
        data[7] = 0.0;
        let v = FeatureMap::new(2, 2, 2, data).unwrap();
        let err = correspondence_map(&v, &Embedding::new(vec![1.0, 1.0]).unwrap()).unwrap_err();
        assert!(err.to_string().contains("y=1, x=1"), "{err}");
    }

    /// 2x2 map whose cosines are (1, 1, 0, 0).
    fn half_matching() -> (FeatureMap, Embedding) {
        let v = FeatureMap::new(2, 2, 2, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        (v, Embedding::new(vec![1.0, 0.0]).unwrap())
    }

    #[test]
    fn localize_examples() {
        let a = [1.0, 2.0, -0.5];
        let v = FeatureMap::constant_column(&a, 3, 3).unwrap();
        let s = sim_localize(&v, &Embedding::new(a.to_vec()).unwrap(), None).unwrap();
        assert!((s - 1.0).abs() < 1e-12);

        let (v, a) = half_matching();
        assert!((sim_localize(&v, &a, None).unwrap() - 0.5).abs() < 1e-15);
        let m = Mask::new(2, 2, vec![true, true, false, false]).unwrap();
        assert!((sim_localize(&v, &a, Some(&m)).unwrap() - 1.0).abs() < 1e-15);

        assert!(matches!(sim_localize(&v, &a, Some(&Mask::empty(2, 2))), Err(Error::Empty(_))));
        assert!(matches!(sim_localize(&v, &a, Some(&Mask::full(3, 2))), Err(Error::Shape(_))));
        let all = sim_localize(&v, &a, Some(&Mask::full(2, 2))).unwrap();
        assert!((all - sim_localize(&v, &a, None).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn project_examples() {
        let x = Embedding::new(vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(project(&x, &Projection::identity(3)).unwrap(), x);
        let p = Projection::new(3, 2, vec![0.0; 6], vec![4.0, 5.0]).unwrap();
        assert_eq!(project(&x, &p).unwrap().as_slice(), &[4.0, 5.0]);
        assert!(project(&x, &Projection::identity(2)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Projection::new(8, 4, gaussian(&mut rng, 32), gaussian(&mut rng, 4)).unwrap();
        let x = Embedding::new(gaussian(&mut rng, 8)).unwrap();
        let out = project(&x, &p).unwrap();
        for r in 0..4 {
            let mut s = p.bias()[r];
            for c in 0..8 {
                s += p.weight()[r * 8 + c] * x.as_slice()[c];
            }
            assert!((out.as_slice()[r] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn align_examples() {
        let a = [0.3, 0.4, -1.2];
        let id = Projection::identity(3);
        let v = FeatureMap::constant_column(&a, 2, 2).unwrap();
        let ea = Embedding::new(a.to_vec()).unwrap();
        assert!((sim_align(&v, &ea, &id, &id).unwrap() - 1.0).abs() < 1e-12);

        let v = FeatureMap::constant_column(&[1.0, 0.0, 0.0], 2, 2).unwrap();
        let ea = Embedding::new(vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(sim_align(&v, &ea, &id, &id).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = FeatureMap::new(8, 3, 3, gaussian(&mut rng, 72)).unwrap();
        let ea = Embedding::new(gaussian(&mut rng, 8)).unwrap();
        let pv = Projection::seeded_uniform(8, 8, 1);
        let pa = Projection::seeded_uniform(8, 8, 2);
        let composed = cosine(
            project(&avg_pool(&v), &pv).unwrap().as_slice(),
            project(&ea, &pa).unwrap().as_slice(),
        )
        .unwrap();
        assert_eq!(sim_align(&v, &ea, &pv, &pa).unwrap(), composed);

        let zero = Projection::new(8, 8, vec![0.0; 64], vec![0.0; 8]).unwrap();
        assert!(matches!(sim_align(&v, &ea, &zero, &pa), Err(Error::ZeroVector(_))));
        assert!(matches!(
            sim_align(&v, &ea, &Projection::seeded_uniform(8, 4, 1), &pa),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn seeded_init_is_bounded_and_reproducible() {
        let p = Projection::seeded_uniform(16, 8, 42);
        assert_eq!(p, Projection::seeded_uniform(16, 8, 42));
        assert!(p.weight().iter().chain(p.bias()).all(|v| v.abs() <= 0.25));
    }

    proptest! {
        #[test]
        fn localize_scale_invariant(seed in 0u64..500, scales in proptest::collection::vec(0.01f64..50.0, 9), sa in 0.01f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = FeatureMap::new(4, 3, 3, gaussian(&mut rng, 36)).unwrap();
            let a = Embedding::new(gaussian(&mut rng, 4)).unwrap();
            let base = sim_localize(&v, &a, None).unwrap();
            let mut scaled = v.as_slice().to_vec();
            for k in 0..4 {
                for loc in 0..9 {
                    scaled[k * 9 + loc] *= scales[loc];
                }
            }
            let vs = FeatureMap::new(4, 3, 3, scaled).unwrap();
            let as_ = Embedding::new(a.as_slice().iter().map(|x| x * sa).collect()).unwrap();
            prop_assert!((sim_localize(&vs, &as_, None).unwrap() - base).abs() < 1e-9);
            let m = correspondence_map(&vs, &as_).unwrap();
            prop_assert!(m.map.as_slice().iter().all(|c| (-1.0..=1.0).contains(c)));
        }

        #[test]
        fn align_reduces_to_cosine_at_one_pixel(x in proptest::collection::vec(-3.0f64..3.0, 5), y in proptest::collection::vec(-3.0f64..3.0, 5)) {
            prop_assume!(norm(&x) > 1e-3 && norm(&y) > 1e-3);
            let v = FeatureMap::new(5, 1, 1, x.clone()).unwrap();
            let a = Embedding::new(y.clone()).unwrap();
            let id = Projection::identity(5);
            prop_assert!((sim_align(&v, &a, &id, &id).unwrap() - cosine(&x, &y).unwrap()).abs() < 1e-12);
        }
    }
}
