//! Dense numeric primitives shared by every other module.
//!
//! All arithmetic is carried out in `f64`. Storage is row-major; a
//! [`FeatureMap`] is channel-major (`c`, then `h`, then `w`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector is treated as degenerate.
pub const NORM_EPS: f64 = 1e-12;

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// A `c`-dimensional embedding (audio feature, pooled or projected feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("embedding has no components".into()));
        }
        check_finite(&data)?;
        Ok(Self(data))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

/// An `h × w` grid of reals: heatmaps and correspondence maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::Shape(format!(
                "grid {h}x{w} needs {} values, got {}",
                h * w,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { h, w, data })
    }

    pub fn filled(h: usize, w: usize, value: f64) -> Result<Self> {
        Self::new(h, w, vec![value; h * w])
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        Self::new(h, w, data)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    /// Applies `f` pointwise. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Grid> {
        Grid::new(self.h, self.w, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// A binary `h × w` mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::Shape(format!(
                "mask {h}x{w} needs {} values, got {}",
                h * w,
                bits.len()
            )));
        }
        Ok(Self { h, w, bits })
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self { h, w, bits: vec![false; h * w] }
    }

    pub fn full(h: usize, w: usize) -> Self {
        Self { h, w, bits: vec![true; h * w] }
    }

    /// Mask of pixels whose value exceeds 0.5.
    pub fn from_grid(g: &Grid) -> Self {
        Self {
            h: g.h,
            w: g.w,
            bits: g.data.iter().map(|&v| v > 0.5).collect(),
        }
    }

    pub fn to_grid(&self) -> Grid {
        Grid {
            h: self.h,
            w: self.w,
            data: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.bits[y * self.w + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a || b).count()
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Nearest-neighbour resampling under the pixel-center convention.
    pub fn resize_nearest(&self, out_h: usize, out_w: usize) -> Mask {
        if (out_h, out_w) == (self.h, self.w) {
            return self.clone();
        }
        let mut bits = Vec::with_capacity(out_h * out_w);
        for i in 0..out_h {
            let sy = (((i as f64 + 0.5) * self.h as f64 / out_h as f64) as usize).min(self.h - 1);
            for j in 0..out_w {
                let sx = (((j as f64 + 0.5) * self.w as f64 / out_w as f64) as usize).min(self.w - 1);
                bits.push(self.bits[sy * self.w + sx]);
            }
        }
        Mask { h: out_h, w: out_w, bits }
    }
}

/// A spatial visual feature map of shape `c × h × w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("feature map dims must be positive, got {c}x{h}x{w}")));
        }
        if data.len() != c * h * w {
            return Err(Error::Shape(format!(
                "feature map {c}x{h}x{w} needs {} values, got {}",
                c * h * w,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { c, h, w, data })
    }

    /// Feature map whose every location carries the same channel vector.
    pub fn constant_column(column: &[f64], h: usize, w: usize) -> Result<Self> {
        let c = column.len();
        let mut data = Vec::with_capacity(c * h * w);
        for &v in column {
            data.extend(std::iter::repeat_n(v, h * w));
        }
        Self::new(c, h, w, data)
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn locations(&self) -> usize {
        self.h * self.w
    }

    pub fn get(&self, k: usize, y: usize, x: usize) -> f64 {
        self.data[(k * self.h + y) * self.w + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Channel vector at linear location `loc = y * w + x`.
    pub fn column(&self, loc: usize) -> Vec<f64> {
        let hw = self.h * self.w;
        (0..self.c).map(|k| self.data[k * hw + loc]).collect()
    }
}

/// Result of [`l2_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub vector: Vec<f64>,
    /// Set when the input norm was at or below `eps`; `vector` is then the input unchanged.
    pub degenerate: bool,
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn l2_normalize(x: &[f64], eps: f64) -> Result<Normalized> {
    if x.is_empty() {
        return Err(Error::Empty("cannot normalize an empty vector".into()));
    }
    check_finite(x)?;
    let n = norm(x);
    if n <= eps {
        return Ok(Normalized { vector: x.to_vec(), degenerate: true });
    }
    Ok(Normalized { vector: x.iter().map(|v| v / n).collect(), degenerate: false })
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("cosine of {}-dim and {}-dim vectors", x.len(), y.len())));
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx <= NORM_EPS || ny <= NORM_EPS {
        return Err(Error::ZeroVector("cosine argument".into()));
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Spatial average pooling.
pub fn avg_pool(v: &FeatureMap) -> Embedding {
    let hw = v.locations();
    let data = v.data.chunks_exact(hw).map(|plane| pairwise_sum(plane) / hw as f64).collect();
    Embedding(data)
}

/// Pixel indices ordered by descending value, ties by ascending linear index.
fn ranked_indices(g: &Grid) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.data.len()).collect();
    idx.sort_by(|&a, &b| g.data[b].total_cmp(&g.data[a]).then(a.cmp(&b)));
    idx
}

fn mask_from_top(g: &Grid, count: usize) -> Mask {
    let mut mask = Mask::empty(g.h, g.w);
    for i in ranked_indices(g).into_iter().take(count) {
        mask.bits[i] = true;
    }
    mask
}

/// Keeps the `round(fraction * h * w)` highest-valued pixels.
pub fn top_fraction_mask(g: &Grid, fraction: f64) -> Result<Mask> {
    if g.is_empty() {
        return Err(Error::Empty("cannot threshold an empty grid".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1]")));
    }
    let count = (fraction * g.len() as f64).round() as usize;
    Ok(mask_from_top(g, count))
}

/// Keeps exactly `count` highest-valued pixels.
pub fn top_count_mask(g: &Grid, count: usize) -> Result<Mask> {
    if count == 0 || count > g.len() {
        return Err(Error::InvalidArgument(format!(
            "pixel count {count} outside [1, {}]",
            g.len()
        )));
    }
    Ok(mask_from_top(g, count))
}

fn source_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear resampling with pixel-center alignment and clamped edges.
pub fn bilinear_resize(g: &Grid, out_h: usize, out_w: usize) -> Result<Grid> {
    if g.is_empty() || out_h == 0 || out_w == 0 {
        return Err(Error::Shape("resize dims must be positive".into()));
    }
    if (out_h, out_w) == g.dims() {
        return Ok(g.clone());
    }
    let rows: Vec<_> = (0..out_h).map(|i| source_coord(i, g.h, out_h)).collect();
    let cols: Vec<_> = (0..out_w).map(|j| source_coord(j, g.w, out_w)).collect();
    let mut data = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let top = g.get(y0, x0) * (1.0 - fx) + g.get(y0, x1) * fx;
            let bottom = g.get(y1, x0) * (1.0 - fx) + g.get(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Grid::new(out_h, out_w, data)
}

/// Pairwise (cascade) summation; the order is fixed by the input length only.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid {
        Grid::new(h, w, (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn sort_oracle(g: &Grid, count: usize) -> Vec<bool> {
        let mut pairs: Vec<(f64, usize)> = g.as_slice().iter().copied().zip(0..).collect();
        // descending value, ascending index
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut bits = vec![false; g.len()];
        for &(_, i) in pairs.iter().take(count) {
            bits[i] = true;
        }
        bits
    }

    #[test]
    fn normalize_examples() {
        let out = l2_normalize(&[3.0, 4.0], NORM_EPS).unwrap();
        assert_eq!(out.vector, vec![0.6, 0.8]);
        assert!(!out.degenerate);

        let out = l2_normalize(&[0.0, 0.0], 1e-12).unwrap();
        assert_eq!(out.vector, vec![0.0, 0.0]);
        assert!(out.degenerate);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let out = l2_normalize(&x, NORM_EPS).unwrap();
        let n: f64 = out.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);

        assert!(matches!(l2_normalize(&[1.0, f64::NAN], NORM_EPS), Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3, -2.0, 5.0], &[0.3, -2.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector(_))));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn avg_pool_examples() {
        let v = FeatureMap::new(3, 2, 2, vec![2.0; 12]).unwrap();
        assert_eq!(avg_pool(&v).as_slice(), &[2.0, 2.0, 2.0]);
        let v = FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool(&v).as_slice(), &[2.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = FeatureMap::new(4, 3, 3, data).unwrap();
        let pooled = avg_pool(&v);
        for k in 0..4 {
            let mut s = 0.0;
            for y in 0..3 {
                for x in 0..3 {
                    s += v.get(k, y, x);
                }
            }
            assert!((pooled.as_slice()[k] - s / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn top_fraction_examples() {
        let g = Grid::from_fn(4, 4, |_, x| if x < 2 { 1.0 } else { 0.0 }).unwrap();
        let m = top_fraction_mask(&g, 0.5).unwrap();
        assert_eq!(m, Mask::from_grid(&g));

        let g = Grid::filled(4, 4, 0.3).unwrap();
        let m = top_fraction_mask(&g, 0.5).unwrap();
        let expected: Vec<bool> = (0..16).map(|i| i < 8).collect();
        assert_eq!(m.bits(), expected.as_slice());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_grid(&mut rng, 16, 16);
        assert_eq!(top_fraction_mask(&g, 0.5).unwrap().bits(), sort_oracle(&g, 128).as_slice());

        assert!(top_fraction_mask(&Grid::new(0, 0, vec![]).unwrap(), 0.5).is_err());
        assert!(top_fraction_mask(&g, 0.0).is_err());
        assert!(top_fraction_mask(&g, 1.5).is_err());
    }

    #[test]
    fn top_count_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_grid(&mut rng, 16, 16);
        assert_eq!(top_count_mask(&g, 256).unwrap(), Mask::full(16, 16));
        assert_eq!(top_count_mask(&g, 37).unwrap().bits(), sort_oracle(&g, 37).as_slice());

        let mut data = vec![0.0; 9];
        data[5] = 2.0;
        let m = top_count_mask(&Grid::new(3, 3, data).unwrap(), 1).unwrap();
        assert!(m.get(1, 2));
        assert_eq!(m.count(), 1);

        assert!(top_count_mask(&g, 0).is_err());
        assert!(top_count_mask(&g, 257).is_err());
    }

    fn resize_reference(g: &Grid, oh: usize, ow: usize) -> Vec<f64> {
        let (h, w) = g.dims();
        let mut out = Vec::new();
        for i in 0..oh {
            for j in 0..ow {
                let sy = ((i as f64 + 0.5) * h as f64 / oh as f64 - 0.5).max(0.0).min((h - 1) as f64);
                let sx = ((j as f64 + 0.5) * w as f64 / ow as f64 - 0.5).max(0.0).min((w - 1) as f64);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (dy, dx) = (sy - y0 as f64, sx - x0 as f64);
                out.push(
                    g.get(y0, x0) * (1.0 - dy) * (1.0 - dx)
                        + g.get(y0, x1) * (1.0 - dy) * dx
                        + g.get(y1, x0) * dy * (1.0 - dx)
                        + g.get(y1, x1) * dy * dx,
                );
            }
        }
        out
    }

    #[test]
    fn bilinear_examples() {
        let g = Grid::filled(3, 5, 0.25).unwrap();
        let r = bilinear_resize(&g, 7, 2).unwrap();
        assert!(r.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_grid(&mut rng, 5, 6);
        assert_eq!(bilinear_resize(&g, 5, 6).unwrap(), g);

        let g = Grid::new(2, 2, vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        let r = bilinear_resize(&g, 4, 4).unwrap();
        let reference = resize_reference(&g, 4, 4);
        for (a, b) in r.as_slice().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
        // corners are clamped copies, the interior interpolates
        assert_eq!(r.get(0, 0), 0.0);
        assert_eq!(r.get(3, 3), 2.0);
        assert!((r.get(1, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), v.iter().sum::<f64>());
    }

    proptest! {
        #[test]
        fn fraction_popcount(vals in proptest::collection::vec(-10.0f64..10.0, 1..200), f in 0.01f64..=1.0) {
            let g = Grid::new(1, vals.len(), vals.clone()).unwrap();
            let m = top_fraction_mask(&g, f).unwrap();
            prop_assert_eq!(m.count(), (f * vals.len() as f64).round() as usize);
        }

        #[test]
        fn count_masks_nest(vals in proptest::collection::vec(-3i32..3, 2..100)) {
            let g = Grid::new(1, vals.len(), vals.iter().map(|&v| v as f64).collect()).unwrap();
            for k in 1..vals.len() {
                let a = top_count_mask(&g, k).unwrap();
                let b = top_count_mask(&g, k + 1).unwrap();
                prop_assert!(a.is_subset_of(&b));
            }
        }

        #[test]
        fn cosine_scale_invariant(
            x in proptest::collection::vec(-5.0f64..5.0, 4),
            y in proptest::collection::vec(-5.0f64..5.0, 4),
            a in 0.01f64..100.0,
            b in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&x) > 1e-3 && norm(&y) > 1e-3);
            let c = cosine(&x, &y).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * b).collect();
            prop_assert!((cosine(&xs, &ys).unwrap() - c).abs() < 1e-9);
            prop_assert!((cosine(&y, &x).unwrap() - c).abs() < 1e-12);
        }

        #[test]
        fn avg_pool_linear(
            u in proptest::collection::vec(-5.0f64..5.0, 18),
            v in proptest::collection::vec(-5.0f64..5.0, 18),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
            let pu = avg_pool(&FeatureMap::new(2, 3, 3, u).unwrap());
            let pv = avg_pool(&FeatureMap::new(2, 3, 3, v).unwrap());
            let pm = avg_pool(&FeatureMap::new(2, 3, 3, mix).unwrap());
            for k in 0..2 {
                let expect = a * pu.as_slice()[k] + b * pv.as_slice()[k];
                prop_assert!((pm.as_slice()[k] - expect).abs() < 1e-9);
            }
        }

        #[test]
        fn resize_within_bounds(
            vals in proptest::collection::vec(-5.0f64..5.0, 12),
            oh in 1usize..20,
            ow in 1usize..20,
        ) {
            let g = Grid::new(3, 4, vals).unwrap();
            let r = bilinear_resize(&g, oh, ow).unwrap();
            prop_assert!(r.min() >= g.min() - 1e-9);
            prop_assert!(r.max() <= g.max() + 1e-9);
        }
    }
}
