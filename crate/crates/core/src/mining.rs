//! Positive-set construction: exact nearest-neighbour concept mining over
//! precomputed embeddings, hand-crafted views, and pair-batch assembly.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contrastive::PositiveSet;
use crate::error::{Error, Result};
use crate::kernels::{dot, norm, Embedding, FeatureMap, NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Visual,
    Audio,
}

/// Exact cosine index over L2-normalised rows.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f64>,
    modality: Modality,
    positions: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
}

pub fn build_index(ids: Vec<String>, rows: &[Vec<f64>], modality: Modality) -> Result<EmbeddingIndex> {
    if ids.is_empty() {
        return Err(Error::Empty("index needs at least one vector".into()));
    }
    if ids.len() != rows.len() {
        return Err(Error::Shape(format!("{} ids for {} vectors", ids.len(), rows.len())));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::Shape("zero-dimensional embeddings".into()));
    }
    let mut positions = HashMap::with_capacity(ids.len());
    let mut vectors = Vec::with_capacity(ids.len() * dim);
    for (i, (id, row)) in ids.iter().zip(rows).enumerate() {
        if row.len() != dim {
            return Err(Error::Shape(format!("vector `{id}` has {} dims, expected {dim}", row.len())));
        }
        if positions.insert(id.clone(), i).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
        if let Some(index) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let n = norm(row);
        if n <= NORM_EPS {
            return Err(Error::ZeroVector(format!("embedding `{id}`")));
        }
        vectors.extend(row.iter().map(|v| v / n));
    }
    Ok(EmbeddingIndex { ids, dim, vectors, modality, positions })
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.positions.get(id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine similarity between two indexed items.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let va = self.vector(a).ok_or_else(|| Error::UnknownId(a.to_string()))?;
        let vb = self.vector(b).ok_or_else(|| Error::UnknownId(b.to_string()))?;
        Ok(dot(va, vb))
    }

    /// The `k` most similar items to `query_id`, descending by cosine with
    /// ties broken by ascending id.
    pub fn top_k(&self, query_id: &str, k: usize, exclude_anchor: bool) -> Result<Vec<Neighbor>> {
        let &qi = self.positions.get(query_id).ok_or_else(|| Error::UnknownId(query_id.to_string()))?;
        let pool = self.len() - usize::from(exclude_anchor);
        if k == 0 || k > pool {
            return Err(Error::InvalidArgument(format!("k = {k} outside [1, {pool}]")));
        }
        let q = self.row(qi);
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|&i| !(exclude_anchor && i == qi))
            .map(|i| (dot(q, self.row(i)), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(similarity, i)| Neighbor { id: self.ids[i].clone(), similarity })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub k: usize,
    pub exclude_anchor: bool,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self { k: 1000, exclude_anchor: true, seed: 0 }
    }
}

/// Seed of the per-query stream: the global seed mixed with a digest of the id.
fn query_seed(seed: u64, query_id: &str) -> u64 {
    let digest = Sha256::digest(query_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Uniform draw from the top-k neighbours, deterministic in `(cfg.seed, query_id)`.
pub fn sample_concept(index: &EmbeddingIndex, query_id: &str, cfg: &MiningConfig) -> Result<String> {
    let neighbors = index.top_k(query_id, cfg.k, cfg.exclude_anchor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(query_seed(cfg.seed, query_id));
    let pick = rng.random_range(0..neighbors.len());
    Ok(neighbors[pick].id.clone())
}

/// Per-frame audio features, `frames × dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioFrames {
    frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl AudioFrames {
    pub fn new(frames: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || dim == 0 || data.len() != frames * dim {
            return Err(Error::Shape(format!("{} values for {frames} frames of {dim}", data.len())));
        }
        Ok(Self { frames, dim, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Temporal mean over frames.
    pub fn mean_embedding(&self) -> Result<Embedding> {
        let mut out = vec![0.0; self.dim];
        for t in 0..self.frames {
            for (o, v) in out.iter_mut().zip(self.frame(t)) {
                *o += v / self.frames as f64;
            }
        }
        Embedding::new(out)
    }
}

/// Circular shift along frames: output frame `t` is input frame `t - shift`.
/// `|shift|` may equal the frame count, which is the identity.
pub fn audio_time_shift(seq: &AudioFrames, shift: i64) -> Result<AudioFrames> {
    let n = seq.frames as i64;
    if shift.abs() > n {
        return Err(Error::InvalidArgument(format!("shift {shift} exceeds {n} frames")));
    }
    let mut data = Vec::with_capacity(seq.data.len());
    for t in 0..n {
        data.extend_from_slice(seq.frame((t - shift).rem_euclid(n) as usize));
    }
    Ok(AudioFrames { frames: seq.frames, dim: seq.dim, data })
}

/// Anchor features keyed by sample id, used to fetch anchors and concepts.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    pub visual: HashMap<String, FeatureMap>,
    pub audio: HashMap<String, Embedding>,
}

impl FeatureStore {
    pub fn insert(&mut self, id: impl Into<String>, visual: FeatureMap, audio: Embedding) {
        let id = id.into();
        self.visual.insert(id.clone(), visual);
        self.audio.insert(id, audio);
    }
}

/// Caller-produced augmented views of one anchor.
#[derive(Debug, Clone)]
pub struct AnchorViews {
    pub id: String,
    pub visual_aug: FeatureMap,
    pub audio_aug: Embedding,
    pub visual_transform: String,
    pub audio_transform: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub anchor: String,
    pub visual_concept: String,
    pub audio_concept: String,
    pub visual_transform: String,
    pub audio_transform: String,
}

/// One of the nine positive pairs of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairRef {
    pub sample: usize,
    pub visual_slot: usize,
    pub audio_slot: usize,
}

pub const SLOT_NAMES: [&str; 3] = ["anchor", "augmented", "concept"];

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub samples: Vec<PositiveSet>,
    pub provenance: Vec<Provenance>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pairs(&self) -> Vec<PairRef> {
        let mut out = Vec::with_capacity(self.samples.len() * 9);
        for (sample, s) in self.samples.iter().enumerate() {
            for visual_slot in 0..s.visual.len() {
                for audio_slot in 0..s.audio.len() {
                    out.push(PairRef { sample, visual_slot, audio_slot });
                }
            }
        }
        out
    }
}

pub fn assemble_pair_batch(
    anchors: &[AnchorViews],
    store: &FeatureStore,
    visual_index: &EmbeddingIndex,
    audio_index: &EmbeddingIndex,
    cfg: &MiningConfig,
) -> Result<PairBatch> {
    let built: Vec<(PositiveSet, Provenance)> = anchors
        .par_iter()
        .map(|views| {
            let id = &views.id;
            let v = store.visual.get(id).ok_or_else(|| Error::UnknownId(format!("visual features of `{id}`")))?;
            let a = store.audio.get(id).ok_or_else(|| Error::UnknownId(format!("audio features of `{id}`")))?;
            if views.visual_aug.dims() != v.dims() || views.audio_aug.dim() != a.dim() {
                return Err(Error::Shape(format!("augmented views of `{id}` do not match the anchor")));
            }
            let vc_id = sample_concept(visual_index, id, cfg)?;
            let ac_id = sample_concept(audio_index, id, cfg)?;
            let v_conc = store
                .visual
                .get(&vc_id)
                .ok_or_else(|| Error::UnknownId(format!("visual features of concept `{vc_id}`")))?;
            let a_conc = store
                .audio
                .get(&ac_id)
                .ok_or_else(|| Error::UnknownId(format!("audio features of concept `{ac_id}`")))?;
            let set = PositiveSet::triple(
                [v.clone(), views.visual_aug.clone(), v_conc.clone()],
                [a.clone(), views.audio_aug.clone(), a_conc.clone()],
            );
            let prov = Provenance {
                anchor: id.clone(),
                visual_concept: vc_id,
                audio_concept: ac_id,
                visual_transform: views.visual_transform.clone(),
                audio_transform: views.audio_transform.clone(),
            };
            Ok((set, prov))
        })
        .collect::<Result<_>>()?;
    let (samples, provenance) = built.into_iter().unzip();
    Ok(PairBatch { samples, provenance })
}
