//! Cross-modal retrieval, compositional queries and embedding-gap diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{dot, l2_normalize, pairwise_mean, NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    Backbone,
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AudioToImage,
    ImageToAudio,
}

/// Paired embeddings; row `i` of both modalities is a positive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalPool {
    ids: Vec<String>,
    dim: usize,
    visual: Vec<Vec<f64>>,
    audio: Vec<Vec<f64>>,
    source: FeatureSource,
}

fn check_rows(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::Shape(format!("{what} row {i} has dim {}, expected {dim}", r.len())));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i * dim + j });
        }
    }
    Ok(())
}

impl RetrievalPool {
    pub fn new(visual: Vec<Vec<f64>>, audio: Vec<Vec<f64>>, source: FeatureSource) -> Result<Self> {
        let ids = (0..visual.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, visual, audio, source)
    }

    pub fn with_ids(ids: Vec<String>, visual: Vec<Vec<f64>>, audio: Vec<Vec<f64>>, source: FeatureSource) -> Result<Self> {
        if visual.is_empty() {
            return Err(Error::Empty("retrieval pool".into()));
        }
        if visual.len() != audio.len() || ids.len() != visual.len() {
            return Err(Error::Shape(format!(
                "{} ids, {} visual rows, {} audio rows",
                ids.len(),
                visual.len(),
                audio.len()
            )));
        }
        let dim = visual[0].len();
        if dim == 0 {
            return Err(Error::Shape("embedding dim must be positive".into()));
        }
        check_rows(&visual, dim, "visual")?;
        check_rows(&audio, dim, "audio")?;
        Ok(Self { ids, dim, visual, audio, source })
    }

    pub fn len(&self) -> usize {
        self.visual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visual.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn visual(&self) -> &[Vec<f64>] {
        &self.visual
    }

    pub fn audio(&self) -> &[Vec<f64>] {
        &self.audio
    }
}

fn unit_rows(rows: &[Vec<f64>], what: &str) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let n = l2_normalize(r, NORM_EPS)?;
            if n.degenerate {
                return Err(Error::ZeroVector(format!("{what} row {i}")));
            }
            Ok(n.vector)
        })
        .collect()
}

/// Candidates sorted by score, ties by ascending index.
fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub direction: Direction,
    pub source: FeatureSource,
    pub ks: Vec<usize>,
    pub recalls: Vec<f64>,
    /// One-based rank of each query's true pair.
    pub ranks: Vec<usize>,
}

/// Fraction of queries whose true pair ranks within the top `k`, by cosine.
pub fn recall_at_k(pool: &RetrievalPool, direction: Direction, ks: &[usize]) -> Result<RecallReport> {
    if pool.is_empty() {
        return Err(Error::Empty("retrieval pool".into()));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > pool.len()) {
        return Err(Error::InvalidArgument(format!("k = {k} outside [1, {}]", pool.len())));
    }
    let v = unit_rows(&pool.visual, "visual")?;
    let a = unit_rows(&pool.audio, "audio")?;
    let (queries, candidates) = match direction {
        Direction::AudioToImage => (&a, &v),
        Direction::ImageToAudio => (&v, &a),
    };
    let ranks: Vec<usize> = queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let truth = dot(q, &candidates[i]);
            1 + candidates
                .iter()
                .enumerate()
                .filter(|&(j, c)| {
                    let s = dot(q, c);
                    s > truth || (s == truth && j < i)
                })
                .count()
        })
        .collect();
    let n = ranks.len() as f64;
    let recalls = ks.iter().map(|&k| ranks.iter().filter(|&&r| r <= k).count() as f64 / n).collect();
    Ok(RecallReport { direction, source: pool.source, ks: ks.to_vec(), recalls, ranks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// `lambda * v + (1 - lambda) * a`, after normalizing the inputs unless `raw_inputs`.
pub fn compose(v: &[f64], a: &[f64], lambda: f64, raw_inputs: bool) -> Result<Composition> {
    if v.len() != a.len() {
        return Err(Error::Shape(format!("visual dim {} vs audio dim {}", v.len(), a.len())));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument("lambda must be finite".into()));
    }
    let (v, a) = if raw_inputs {
        (v.to_vec(), a.to_vec())
    } else {
        (unit(v, "visual query")?, unit(a, "audio query")?)
    };
    let raw: Vec<f64> = v.iter().zip(&a).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
    let normalized = l2_normalize(&raw, NORM_EPS)?.vector;
    Ok(Composition { raw, normalized })
}

fn unit(x: &[f64], what: &str) -> Result<Vec<f64>> {
    let n = l2_normalize(x, NORM_EPS)?;
    if n.degenerate {
        return Err(Error::ZeroVector(what.into()));
    }
    Ok(n.vector)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub index: usize,
    pub id: String,
    pub score: f64,
}

/// Top `k` images by cosine to `query`.
pub fn retrieve_images(pool: &RetrievalPool, query: &[f64], k: usize) -> Result<Vec<Ranked>> {
    if query.len() != pool.dim {
        return Err(Error::Shape(format!("query dim {} vs pool dim {}", query.len(), pool.dim)));
    }
    if k == 0 || k > pool.len() {
        return Err(Error::InvalidArgument(format!("k = {k} outside [1, {}]", pool.len())));
    }
    let q = unit(query, "query")?;
    let candidates = unit_rows(&pool.visual, "visual")?;
    let scores: Vec<f64> = candidates.par_iter().map(|c| dot(&q, c)).collect();
    Ok(rank(&scores)
        .into_iter()
        .take(k)
        .map(|i| Ranked { index: i, id: pool.ids[i].clone(), score: scores[i] })
        .collect())
}

/// Images ranked against the composed query `lambda * v + (1 - lambda) * a`.
pub fn compositional_retrieve(pool: &RetrievalPool, v: &[f64], a: &[f64], lambda: f64, k: usize) -> Result<Vec<Ranked>> {
    let c = compose(v, a, lambda, false)?;
    retrieve_images(pool, &c.raw, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub cosine: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Mean cosine of the positive pairs.
    pub alignment: f64,
    /// Mean and population standard deviation of the pair distances.
    pub magnitude_mean: f64,
    pub magnitude_std: f64,
    pub normalized: bool,
    pub per_pair: Vec<PairGap>,
}

/// Closeness of the paired embeddings; distances use unit vectors unless `raw`.
pub fn alignment_magnitude(pool: &RetrievalPool, raw: bool) -> Result<AlignmentReport> {
    let v = unit_rows(&pool.visual, "visual")?;
    let a = unit_rows(&pool.audio, "audio")?;
    let per_pair: Vec<PairGap> = (0..pool.len())
        .map(|i| {
            let (x, y) = if raw { (&pool.visual[i], &pool.audio[i]) } else { (&v[i], &a[i]) };
            let distance = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            PairGap { cosine: dot(&v[i], &a[i]).clamp(-1.0, 1.0), distance }
        })
        .collect();
    let cosines: Vec<f64> = per_pair.iter().map(|p| p.cosine).collect();
    let distances: Vec<f64> = per_pair.iter().map(|p| p.distance).collect();
    let mean = pairwise_mean(&distances);
    let sq: Vec<f64> = distances.iter().map(|d| (d - mean) * (d - mean)).collect();
    Ok(AlignmentReport {
        alignment: pairwise_mean(&cosines),
        magnitude_mean: mean,
        magnitude_std: pairwise_mean(&sq).sqrt(),
        normalized: !raw,
        per_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(n: usize, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        e
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
    }

    #[test]
    fn orthogonal_identical_pairs_recall_one() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| basis(4, i)).collect();
        let pool = RetrievalPool::new(rows.clone(), rows, FeatureSource::Projected).unwrap();
        for dir in [Direction::AudioToImage, Direction::ImageToAudio] {
            assert_eq!(recall_at_k(&pool, dir, &[1]).unwrap().recalls, vec![1.0]);
        }
        let single = RetrievalPool::new(vec![vec![1.0, 2.0]], vec![vec![-3.0, 1.0]], FeatureSource::Backbone).unwrap();
        assert_eq!(recall_at_k(&single, Direction::AudioToImage, &[1]).unwrap().recalls, vec![1.0]);
        assert!(recall_at_k(&single, Direction::AudioToImage, &[2]).is_err());
    }

    #[test]
    fn recall_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pool = RetrievalPool::new(random_rows(&mut rng, 100, 16), random_rows(&mut rng, 100, 16), FeatureSource::Backbone)
            .unwrap();
        let ks = [1, 5, 10];
        let out = recall_at_k(&pool, Direction::AudioToImage, &ks).unwrap();
        let mut hits = [0usize; 3];
        for i in 0..100 {
            let q = &pool.audio()[i];
            let cos = |c: &Vec<f64>| dot(q, c) / (dot(q, q).sqrt() * dot(c, c).sqrt());
            let mut scored: Vec<(f64, usize)> = pool.visual().iter().map(cos).zip(0..).collect();
            scored.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
            let pos = scored.iter().position(|s| s.1 == i).unwrap();
            for (h, &k) in hits.iter_mut().zip(&ks) {
                *h += usize::from(pos < k);
            }
        }
        let expected: Vec<f64> = hits.iter().map(|&h| h as f64 / 100.0).collect();
        assert_eq!(out.recalls, expected);
    }

    #[test]
    fn recall_breaks_ties_by_index() {
        let pool = RetrievalPool::new(vec![vec![1.0, 0.0]; 3], vec![vec![1.0, 0.0]; 3], FeatureSource::Backbone).unwrap();
        assert_eq!(recall_at_k(&pool, Direction::ImageToAudio, &[1]).unwrap().ranks, vec![1, 2, 3]);
    }

    #[test]
    fn compose_endpoints_and_midpoint() {
        let v = vec![3.0, 0.0];
        let a = vec![0.0, 2.0];
        assert_eq!(compose(&v, &a, 1.0, false).unwrap().raw, vec![1.0, 0.0]);
        assert_eq!(compose(&v, &a, 0.0, false).unwrap().raw, vec![0.0, 1.0]);
        let mid = compose(&v, &a, 0.5, false).unwrap().normalized;
        assert!((mid[0] - 0.5f64.sqrt()).abs() < 1e-15 && (mid[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(compose(&v, &a, 1.0, true).unwrap().raw, v);
        assert!(compose(&v, &[1.0], 0.5, false).is_err());
    }

    #[test]
    fn composed_query_finds_the_shared_item() {
        let visual = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let pool = RetrievalPool::new(visual.clone(), visual, FeatureSource::Projected).unwrap();
        let top = compositional_retrieve(&pool, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 0.5, 4).unwrap();
        assert_eq!(top[0].index, 2);
        assert!((top[0].score - 1.0).abs() < 1e-12);
        assert!((top[1].score - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn endpoint_compositions_reproduce_single_modality_rankings() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pool = RetrievalPool::new(random_rows(&mut rng, 50, 8), random_rows(&mut rng, 50, 8), FeatureSource::Backbone)
            .unwrap();
        let v = random_rows(&mut rng, 1, 8).remove(0);
        let a = random_rows(&mut rng, 1, 8).remove(0);
        assert_eq!(compositional_retrieve(&pool, &v, &a, 1.0, 50).unwrap(), retrieve_images(&pool, &v, 50).unwrap());
        assert_eq!(compositional_retrieve(&pool, &v, &a, 0.0, 50).unwrap(), retrieve_images(&pool, &a, 50).unwrap());
    }

    #[test]
    fn alignment_extremes() {
        let v: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
        let same = alignment_magnitude(&RetrievalPool::new(v.clone(), v.clone(), FeatureSource::Backbone).unwrap(), false)
            .unwrap();
        assert!((same.alignment - 1.0).abs() < 1e-15);
        assert_eq!((same.magnitude_mean, same.magnitude_std), (0.0, 0.0));
        let neg: Vec<Vec<f64>> = v.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
        let anti = alignment_magnitude(&RetrievalPool::new(v, neg, FeatureSource::Backbone).unwrap(), false).unwrap();
        assert!((anti.alignment + 1.0).abs() < 1e-15);
        assert!((anti.magnitude_mean - 2.0).abs() < 1e-15 && anti.magnitude_std < 1e-15);
        let zero = RetrievalPool::new(vec![vec![0.0, 0.0]], vec![vec![1.0, 0.0]], FeatureSource::Backbone).unwrap();
        assert!(matches!(alignment_magnitude(&zero, false), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn alignment_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool = RetrievalPool::new(random_rows(&mut rng, 50, 6), random_rows(&mut rng, 50, 6), FeatureSource::Backbone)
            .unwrap();
        let out = alignment_magnitude(&pool, false).unwrap();
        let (mut cos_sum, mut dists) = (0.0, Vec::new());
        for i in 0..50 {
            let (x, y) = (&pool.visual()[i], &pool.audio()[i]);
            let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
            cos_sum += dot(x, y) / (nx * ny);
            dists.push(x.iter().zip(y).map(|(p, q)| (p / nx - q / ny).powi(2)).sum::<f64>().sqrt());
        }
        let mean = dists.iter().sum::<f64>() / 50.0;
        let std = (dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
        assert!((out.alignment - cos_sum / 50.0).abs() < 1e-12);
        assert!((out.magnitude_mean - mean).abs() < 1e-12);
        assert!((out.magnitude_std - std).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn law_of_cosines_per_pair(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = RetrievalPool::new(random_rows(&mut rng, 20, 5), random_rows(&mut rng, 20, 5), FeatureSource::Backbone).unwrap();
            for p in alignment_magnitude(&pool, false).unwrap().per_pair {
                prop_assert!((p.distance * p.distance - (2.0 - 2.0 * p.cosine)).abs() < 1e-9);
            }
        }

        #[test]
        fn recall_monotone_in_k(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = RetrievalPool::new(random_rows(&mut rng, 30, 4), random_rows(&mut rng, 30, 4), FeatureSource::Backbone).unwrap();
            let ks: Vec<usize> = (1..=30).collect();
            let r = recall_at_k(&pool, Direction::AudioToImage, &ks).unwrap().recalls;
            prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn recall_invariant_under_shared_rotation(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_rows(&mut rng, 25, 2);
            let a = random_rows(&mut rng, 25, 2);
            let (s, c) = theta.sin_cos();
            let rot = |rows: &Vec<Vec<f64>>| rows.iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1]]).collect::<Vec<_>>();
            let base = RetrievalPool::new(v.clone(), a.clone(), FeatureSource::Backbone).unwrap();
            let turned = RetrievalPool::new(rot(&v), rot(&a), FeatureSource::Backbone).unwrap();
            let ks = [1, 5, 10];
            for dir in [Direction::AudioToImage, Direction::ImageToAudio] {
                prop_assert_eq!(recall_at_k(&base, dir, &ks).unwrap().recalls, recall_at_k(&turned, dir, &ks).unwrap().recalls);
            }
        }
    }
}
