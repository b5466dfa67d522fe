//! Multi-positive cross-modal contrastive objective.
//!
//! Every sample carries a positive set per modality (anchor, augmented view,
//! concept sample). Each visual/audio slot pair contributes an InfoNCE term
//! over the localization similarity and, optionally, one over the projected
//! alignment similarity. Gradients are closed form: each similarity is a dot
//! product of unit vectors, so the softmax weights are pushed back through
//! the normalisations, the pooling and the projection heads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspondence::{sim_align, sim_localize, Projection};
use crate::error::{Error, Result};
use crate::kernels::{avg_pool, dot, Embedding, FeatureMap, NORM_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairReduction {
    Sum,
    Mean,
}

/// How the negative for a slot pair is drawn from the other samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum NegativeSampling {
    /// Negatives for slot pair `(p, q)` use slot `q` (or `p`) of every other sample.
    SameSlot,
    /// Each (anchor, other sample, slot pair) draws a slot from a stream keyed by `seed`.
    RandomSlot { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub include_alignment: bool,
    pub include_intra_modality: bool,
    /// Average the visual-anchor and audio-anchor directions.
    pub symmetric: bool,
    pub pair_reduction: PairReduction,
    pub negatives: NegativeSampling,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.07,
            include_alignment: true,
            include_intra_modality: false,
            symmetric: true,
            pair_reduction: PairReduction::Sum,
            negatives: NegativeSampling::SameSlot,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Visual and audio projection heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projections {
    pub visual: Projection,
    pub audio: Projection,
}

impl Projections {
    pub fn identity(dim: usize) -> Self {
        Self { visual: Projection::identity(dim), audio: Projection::identity(dim) }
    }

    pub fn seeded(dim: usize, seed: u64) -> Self {
        Self {
            visual: Projection::seeded_uniform(dim, dim, seed),
            audio: Projection::seeded_uniform(dim, dim, seed.wrapping_add(1)),
        }
    }
}

/// One `(v_i, a_i)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub visual: FeatureMap,
    pub audio: Embedding,
}

/// Per-modality positive sets `V` and `A` of one sample, slot 0 being the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveSet {
    pub visual: Vec<FeatureMap>,
    pub audio: Vec<Embedding>,
}

impl PositiveSet {
    pub fn single(visual: FeatureMap, audio: Embedding) -> Self {
        Self { visual: vec![visual], audio: vec![audio] }
    }

    /// `{anchor, augmented, concept}` for both modalities.
    pub fn triple(visual: [FeatureMap; 3], audio: [Embedding; 3]) -> Self {
        Self { visual: visual.to_vec(), audio: audio.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    Localize,
    Align,
}

/// Gradient with respect to a projection head.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ProjectionGrad {
    fn zeros(p: &Projection) -> Self {
        Self { weight: vec![0.0; p.weight().len()], bias: vec![0.0; p.bias().len()] }
    }
}

/// Gradients laid out like the inputs: `visual[sample][slot]` follows the
/// feature-map layout, `audio[sample][slot]` the embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gradients {
    pub visual: Vec<Vec<Vec<f64>>>,
    pub audio: Vec<Vec<Vec<f64>>>,
    pub proj_visual: ProjectionGrad,
    pub proj_audio: ProjectionGrad,
}

impl Gradients {
    fn zeros(batch: &[PositiveSet], proj: &Projections) -> Self {
        Self {
            visual: batch
                .iter()
                .map(|s| s.visual.iter().map(|v| vec![0.0; v.as_slice().len()]).collect())
                .collect(),
            audio: batch
                .iter()
                .map(|s| s.audio.iter().map(|a| vec![0.0; a.dim()]).collect())
                .collect(),
            proj_visual: ProjectionGrad::zeros(&proj.visual),
            proj_audio: ProjectionGrad::zeros(&proj.audio),
        }
    }

    /// All entries in a fixed order: visual, audio, visual head, audio head.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.visual {
            for g in s {
                out.extend_from_slice(g);
            }
        }
        for s in &self.audio {
            for g in s {
                out.extend_from_slice(g);
            }
        }
        out.extend_from_slice(&self.proj_visual.weight);
        out.extend_from_slice(&self.proj_visual.bias);
        out.extend_from_slice(&self.proj_audio.weight);
        out.extend_from_slice(&self.proj_audio.bias);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Loss terms of one anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorTerms {
    pub anchor: usize,
    pub total: f64,
    /// `[visual slot][audio slot]`
    pub per_pair_localization: Vec<Vec<f64>>,
    /// Zero when the alignment term is disabled.
    pub per_pair_alignment: Vec<Vec<f64>>,
    /// Sum of intra-modality terms; zero when disabled.
    pub intra_modality: f64,
}

/// Loss of a single anchor with its gradient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub terms: AnchorTerms,
    pub gradients: Gradients,
}

impl LossReport {
    pub fn total(&self) -> f64 {
        self.terms.total
    }
}

/// Batch objective: mean of the anchor losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchLoss {
    pub total: f64,
    pub anchors: Vec<AnchorTerms>,
    pub gradients: Option<Gradients>,
}

/// Stable `-log softmax(scores / tau)[positive]`.
pub fn info_nce(scores: &[f64], positive: usize, tau: f64) -> Result<f64> {
    Ok(info_nce_softmax(scores, positive, tau)?.0)
}

fn info_nce_softmax(scores: &[f64], positive: usize, tau: f64) -> Result<(f64, Vec<f64>)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if scores.is_empty() {
        return Err(Error::Empty("no similarities".into()));
    }
    if positive >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "positive index {positive} out of range for {} similarities",
            scores.len()
        )));
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let logits: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + sum.ln() - logits[positive];
    Ok((loss, exps.into_iter().map(|e| e / sum).collect()))
}

/// Single-slot contrastive term with anchor `i` (visual anchor; averaged with
/// the audio-anchor direction when `cfg.symmetric`).
pub fn loss_pair(
    i: usize,
    batch: &[SampleFeatures],
    sim: Similarity,
    cfg: &ContrastiveConfig,
    proj: &Projections,
) -> Result<f64> {
    cfg.validate()?;
    if i >= batch.len() {
        return Err(Error::InvalidArgument(format!("anchor {i} outside batch of {}", batch.len())));
    }
    let s = |v: &FeatureMap, a: &Embedding| match sim {
        Similarity::Localize => sim_localize(v, a, None),
        Similarity::Align => sim_align(v, a, &proj.visual, &proj.audio),
    };
    let forward: Vec<f64> = batch.iter().map(|b| s(&batch[i].visual, &b.audio)).collect::<Result<_>>()?;
    let fwd = info_nce(&forward, i, cfg.temperature)?;
    if !cfg.symmetric {
        return Ok(fwd);
    }
    let backward: Vec<f64> = batch.iter().map(|b| s(&b.visual, &batch[i].audio)).collect::<Result<_>>()?;
    Ok(0.5 * (fwd + info_nce(&backward, i, cfg.temperature)?))
}

/// Loss of anchor `i` and its gradient with respect to every feature and
/// projection parameter.
pub fn loss_multi_positive(
    i: usize,
    batch: &[PositiveSet],
    cfg: &ContrastiveConfig,
    proj: &Projections,
) -> Result<LossReport> {
    let engine = Engine::new(batch, cfg, proj)?;
    engine.check_anchor(i)?;
    let mut grads = Gradients::zeros(batch, proj);
    let mut up = engine.upstream();
    let terms = engine.anchor(i, 1.0, Some(&mut up))?;
    engine.backprop(up, &mut grads);
    Ok(LossReport { terms, gradients: grads })
}

pub fn loss_gradient(
    i: usize,
    batch: &[PositiveSet],
    cfg: &ContrastiveConfig,
    proj: &Projections,
) -> Result<Gradients> {
    Ok(loss_multi_positive(i, batch, cfg, proj)?.gradients)
}

/// Sum of the intra-modality terms of anchor `i`, evaluated regardless of
/// `cfg.include_intra_modality`.
pub fn loss_intra_modality(
    i: usize,
    batch: &[PositiveSet],
    cfg: &ContrastiveConfig,
    proj: &Projections,
) -> Result<f64> {
    let cfg = ContrastiveConfig { include_intra_modality: true, ..cfg.clone() };
    let engine = Engine::new(batch, &cfg, proj)?;
    engine.check_anchor(i)?;
    engine.intra_terms(i, 0.0, None).map(|(v, _)| v)
}

/// Mean anchor loss over the batch, optionally with gradients.
pub fn batch_objective(
    batch: &[PositiveSet],
    cfg: &ContrastiveConfig,
    proj: &Projections,
    with_gradients: bool,
) -> Result<BatchLoss> {
    let engine = Engine::new(batch, cfg, proj)?;
    let weight = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(batch, proj);
    let mut upstream = with_gradients.then(|| engine.upstream());
    let mut anchors = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        anchors.push(engine.anchor(i, weight, upstream.as_mut())?);
    }
    let totals: Vec<f64> = anchors.iter().map(|a| a.total).collect();
    let total = crate::kernels::pairwise_mean(&totals);
    if let Some(up) = upstream {
        engine.backprop(up, &mut grads);
    }
    Ok(BatchLoss { total, anchors, gradients: with_gradients.then_some(grads) })
}

/// Forward-only batch loss.
pub fn batch_loss(batch: &[PositiveSet], cfg: &ContrastiveConfig, proj: &Projections) -> Result<f64> {
    Ok(batch_objective(batch, cfg, proj, false)?.total)
}

struct VisualCache {
    /// Unit columns, location-major (`loc * c + k`).
    unit_cols: Vec<f64>,
    col_norms: Vec<f64>,
    /// Mean of the unit columns; `s_L = mean_unit . a_unit`.
    mean_unit: Vec<f64>,
    pooled: Vec<f64>,
    proj_unit: Vec<f64>,
    proj_norm: f64,
}

struct AudioCache {
    raw: Vec<f64>,
    unit: Vec<f64>,
    norm: f64,
    proj_unit: Vec<f64>,
    proj_norm: f64,
}

/// Upstream gradients on the unit vectors entering each similarity.
struct Upstream {
    mean_unit: Vec<Vec<Vec<f64>>>,
    audio_unit: Vec<Vec<Vec<f64>>>,
    visual_proj: Vec<Vec<Vec<f64>>>,
    audio_proj: Vec<Vec<Vec<f64>>>,
    /// Loss derivative with respect to each cross-modal score, laid out like the score tables.
    loc_coef: Vec<f64>,
    align_coef: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Direction {
    VisualAnchor = 0,
    AudioAnchor = 1,
    IntraVisual = 2,
    IntraAudio = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit(x: &[f64], what: &str) -> Result<(Vec<f64>, f64)> {
    let n = dot(x, x).sqrt();
    if n <= NORM_EPS {
        return Err(Error::ZeroVector(what.to_string()));
    }
    Ok((x.iter().map(|v| v / n).collect(), n))
}

/// Adds `scale * (g - u (u . g)) / norm` to `out`: the pullback through `x -> x / |x|`.
fn add_normalize_pullback(out: &mut [f64], g: &[f64], u: &[f64], norm: f64, scale: f64) {
    let ug = dot(u, g);
    for ((o, gi), ui) in out.iter_mut().zip(g).zip(u) {
        *o += scale * (gi - ui * ug) / norm;
    }
}

fn axpy(out: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

struct Engine<'a> {
    batch: &'a [PositiveSet],
    cfg: &'a ContrastiveConfig,
    proj: &'a Projections,
    visual: Vec<Vec<VisualCache>>,
    audio: Vec<Vec<AudioCache>>,
    n_vis: usize,
    n_aud: usize,
    /// Every visual slot against every audio slot, row `j * n_vis + p`, column `j * n_aud + q`.
    loc_scores: Vec<f64>,
    align_scores: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(batch: &'a [PositiveSet], cfg: &'a ContrastiveConfig, proj: &'a Projections) -> Result<Self> {
        cfg.validate()?;
        let first = batch.first().ok_or_else(|| Error::Empty("batch has no samples".into()))?;
        let (n_vis, n_aud) = (first.visual.len(), first.audio.len());
        if n_vis == 0 || n_aud == 0 {
            return Err(Error::IncompleteSet("sample 0 has an empty positive set".into()));
        }
        let dims = first.visual[0].dims();
        for (j, s) in batch.iter().enumerate() {
            if s.visual.len() != n_vis || s.audio.len() != n_aud {
                return Err(Error::IncompleteSet(format!(
                    "sample {j} has {}+{} members, expected {n_vis}+{n_aud}",
                    s.visual.len(),
                    s.audio.len()
                )));
            }
            if let Some(v) = s.visual.iter().find(|v| v.dims() != dims) {
                return Err(Error::Shape(format!("sample {j} visual {:?} != {dims:?}", v.dims())));
            }
            if let Some(a) = s.audio.iter().find(|a| a.dim() != dims.0) {
                return Err(Error::Shape(format!("sample {j} audio dim {} != {}", a.dim(), dims.0)));
            }
        }
        let needs_proj = cfg.include_alignment || cfg.include_intra_modality;
        if needs_proj {
            if proj.visual.input_dim() != dims.0 || proj.audio.input_dim() != dims.0 {
                return Err(Error::Shape("projection input dims do not match features".into()));
            }
            if proj.visual.output_dim() != proj.audio.output_dim() {
                return Err(Error::Shape("projection output dims differ".into()));
            }
        }

        let caches: Vec<(Vec<VisualCache>, Vec<AudioCache>)> = batch
            .par_iter()
            .enumerate()
            .map(|(j, s)| {
                let vs = s
                    .visual
                    .iter()
                    .enumerate()
                    .map(|(p, v)| {
                        Self::visual_cache(v, needs_proj.then_some(&proj.visual))
                            .map_err(|e| Error::ZeroVector(format!("sample {j} visual slot {p}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let as_ = s
                    .audio
                    .iter()
                    .enumerate()
                    .map(|(q, a)| {
                        Self::audio_cache(a, needs_proj.then_some(&proj.audio))
                            .map_err(|e| Error::ZeroVector(format!("sample {j} audio slot {q}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((vs, as_))
            })
            .collect::<Result<_>>()?;
        let (visual, audio): (Vec<Vec<VisualCache>>, Vec<Vec<AudioCache>>) = caches.into_iter().unzip();
        let table = |f: fn(&VisualCache, &AudioCache) -> f64| -> Vec<f64> {
            visual
                .par_iter()
                .flat_map_iter(|slots| slots.iter())
                .flat_map_iter(|v| audio.iter().flatten().map(move |a| f(v, a)))
                .collect()
        };
        let loc_scores = table(|v, a| dot(&v.mean_unit, &a.unit));
        let align_scores = if needs_proj { table(|v, a| dot(&v.proj_unit, &a.proj_unit)) } else { Vec::new() };
        Ok(Self { batch, cfg, proj, visual, audio, n_vis, n_aud, loc_scores, align_scores })
    }

    fn visual_cache(v: &FeatureMap, proj: Option<&Projection>) -> Result<VisualCache> {
        let (c, h, w) = v.dims();
        let hw = h * w;
        let data = v.as_slice();
        let mut sq = vec![0.0; hw];
        for k in 0..c {
            for (s, x) in sq.iter_mut().zip(&data[k * hw..(k + 1) * hw]) {
                *s += x * x;
            }
        }
        let col_norms: Vec<f64> = sq.into_iter().map(f64::sqrt).collect();
        if let Some(loc) = col_norms.iter().position(|&n| n <= NORM_EPS) {
            return Err(Error::ZeroVector(format!("column (y={}, x={})", loc / w, loc % w)));
        }
        let mut unit_cols = vec![0.0; hw * c];
        let mut mean_unit = vec![0.0; c];
        let inv_hw = 1.0 / hw as f64;
        for loc in 0..hw {
            let n = col_norms[loc];
            for k in 0..c {
                let u = data[k * hw + loc] / n;
                unit_cols[loc * c + k] = u;
                mean_unit[k] += inv_hw * u;
            }
        }
        let pooled = avg_pool(v).into_vec();
        let (proj_unit, proj_norm) = match proj {
            Some(p) => unit(&p.apply(&pooled), "projected visual")?,
            None => (Vec::new(), 0.0),
        };
        Ok(VisualCache { unit_cols, col_norms, mean_unit, pooled, proj_unit, proj_norm })
    }

    fn audio_cache(a: &Embedding, proj: Option<&Projection>) -> Result<AudioCache> {
        let (u, n) = unit(a.as_slice(), "audio")?;
        let (proj_unit, proj_norm) = match proj {
            Some(p) => unit(&p.apply(a.as_slice()), "projected audio")?,
            None => (Vec::new(), 0.0),
        };
        Ok(AudioCache { raw: a.as_slice().to_vec(), unit: u, norm: n, proj_unit, proj_norm })
    }

    fn check_anchor(&self, i: usize) -> Result<()> {
        if i >= self.batch.len() {
            return Err(Error::InvalidArgument(format!(
                "anchor {i} outside batch of {}",
                self.batch.len()
            )));
        }
        Ok(())
    }

    fn upstream(&self) -> Upstream {
        let c = self.batch[0].visual[0].channels();
        let d = if self.cfg.include_alignment || self.cfg.include_intra_modality {
            self.proj.visual.output_dim()
        } else {
            0
        };
        let n = self.batch.len();
        Upstream {
            mean_unit: vec![vec![vec![0.0; c]; self.n_vis]; n],
            audio_unit: vec![vec![vec![0.0; c]; self.n_aud]; n],
            visual_proj: vec![vec![vec![0.0; d]; self.n_vis]; n],
            audio_proj: vec![vec![vec![0.0; d]; self.n_aud]; n],
            loc_coef: vec![0.0; self.loc_scores.len()],
            align_coef: vec![0.0; self.align_scores.len()],
        }
    }

    /// Slot of sample `j` that plays the negative for anchor `i` at slot pair `(p, q)`.
    fn negative_slot(&self, dir: Direction, i: usize, j: usize, p: usize, q: usize, own: usize, slots: usize) -> usize {
        match self.cfg.negatives {
            NegativeSampling::SameSlot => own,
            NegativeSampling::RandomSlot { seed } => {
                let key = [dir as u64, i as u64, j as u64, p as u64, q as u64]
                    .iter()
                    .fold(splitmix(seed), |h, &x| splitmix(h ^ x));
                ChaCha8Rng::seed_from_u64(key).random_range(0..slots)
            }
        }
    }

    fn cell(&self, (vj, vp): (usize, usize), (aj, aq): (usize, usize)) -> usize {
        (vj * self.n_vis + vp) * self.batch.len() * self.n_aud + aj * self.n_aud + aq
    }

    fn score(&self, sim: Similarity, v: (usize, usize), a: (usize, usize)) -> f64 {
        match sim {
            Similarity::Localize => self.loc_scores[self.cell(v, a)],
            Similarity::Align => self.align_scores[self.cell(v, a)],
        }
    }

    fn accumulate(&self, up: &mut Upstream, sim: Similarity, v: (usize, usize), a: (usize, usize), coef: f64) {
        let k = self.cell(v, a);
        match sim {
            Similarity::Localize => up.loc_coef[k] += coef,
            Similarity::Align => up.align_coef[k] += coef,
        }
    }

    /// Turns the score coefficients into gradients on the unit vectors.
    fn fold_scores(&self, up: &mut Upstream) {
        let cols = self.batch.len() * self.n_aud;
        for (vj, slots) in self.visual.iter().enumerate() {
            for (vp, v) in slots.iter().enumerate() {
                let row = (vj * self.n_vis + vp) * cols;
                for (aj, aslots) in self.audio.iter().enumerate() {
                    for (aq, a) in aslots.iter().enumerate() {
                        let k = row + aj * self.n_aud + aq;
                        let coef = up.loc_coef[k];
                        if coef != 0.0 {
                            axpy(&mut up.mean_unit[vj][vp], coef, &a.unit);
                            axpy(&mut up.audio_unit[aj][aq], coef, &v.mean_unit);
                        }
                        if let Some(&coef) = up.align_coef.get(k).filter(|c| **c != 0.0) {
                            axpy(&mut up.visual_proj[vj][vp], coef, &a.proj_unit);
                            axpy(&mut up.audio_proj[aj][aq], coef, &v.proj_unit);
                        }
                    }
                }
            }
        }
    }

    /// One cross-modal slot-pair term; its gradient is accumulated with `weight`.
    fn pair_term(&self, sim: Similarity, i: usize, p: usize, q: usize, weight: f64, mut up: Option<&mut Upstream>) -> Result<f64> {
        let n = self.batch.len();
        let tau = self.cfg.temperature;
        let dir_weight = if self.cfg.symmetric { 0.5 } else { 1.0 };

        let aud: Vec<(usize, usize)> = (0..n)
            .map(|j| if j == i { (j, q) } else { (j, self.negative_slot(Direction::VisualAnchor, i, j, p, q, q, self.n_aud)) })
            .collect();
        let scores: Vec<f64> = aud.iter().map(|&a| self.score(sim, (i, p), a)).collect();
        let (fwd, sm) = info_nce_softmax(&scores, i, tau)?;
        if let Some(up) = up.as_deref_mut() {
            for (j, &a) in aud.iter().enumerate() {
                let coef = weight * dir_weight * (sm[j] - f64::from(u8::from(j == i))) / tau;
                self.accumulate(up, sim, (i, p), a, coef);
            }
        }
        if !self.cfg.symmetric {
            return Ok(fwd);
        }

        let vis: Vec<(usize, usize)> = (0..n)
            .map(|j| if j == i { (j, p) } else { (j, self.negative_slot(Direction::AudioAnchor, i, j, p, q, p, self.n_vis)) })
            .collect();
        let scores: Vec<f64> = vis.iter().map(|&v| self.score(sim, v, (i, q))).collect();
        let (bwd, sm) = info_nce_softmax(&scores, i, tau)?;
        if let Some(up) = up {
            for (j, &v) in vis.iter().enumerate() {
                let coef = weight * dir_weight * (sm[j] - f64::from(u8::from(j == i))) / tau;
                self.accumulate(up, sim, v, (i, q), coef);
            }
        }
        Ok(0.5 * (fwd + bwd))
    }

    /// Sum of intra-modality terms of anchor `i` and the number of terms.
    fn intra_terms(&self, i: usize, weight: f64, mut up: Option<&mut Upstream>) -> Result<(f64, usize)> {
        let n = self.batch.len();
        let tau = self.cfg.temperature;
        let mut total = 0.0;
        let mut count = 0;
        for (dir, slots) in [(Direction::IntraVisual, self.n_vis), (Direction::IntraAudio, self.n_aud)] {
            let unit_of = |j: usize, s: usize| match dir {
                Direction::IntraVisual => &self.visual[j][s].proj_unit,
                _ => &self.audio[j][s].proj_unit,
            };
            for p in 0..slots {
                for p2 in (0..slots).filter(|&s| s != p) {
                    let others: Vec<(usize, usize)> = (0..n)
                        .map(|j| if j == i { (j, p2) } else { (j, self.negative_slot(dir, i, j, p, p2, p2, slots)) })
                        .collect();
                    let scores: Vec<f64> = others.iter().map(|&(j, s)| dot(unit_of(i, p), unit_of(j, s))).collect();
                    let (value, sm) = info_nce_softmax(&scores, i, tau)?;
                    total += value;
                    count += 1;
                    if let Some(up) = up.as_deref_mut() {
                        let buf = match dir {
                            Direction::IntraVisual => &mut up.visual_proj,
                            _ => &mut up.audio_proj,
                        };
                        for (j, &(oj, os)) in others.iter().enumerate() {
                            let coef = weight * (sm[j] - f64::from(u8::from(j == i))) / tau;
                            let (anchor_u, other_u) = (unit_of(i, p).clone(), unit_of(oj, os).clone());
                            axpy(&mut buf[i][p], coef, &other_u);
                            axpy(&mut buf[oj][os], coef, &anchor_u);
                        }
                    }
                }
            }
        }
        Ok((total, count))
    }

    fn intra_count(&self) -> usize {
        self.n_vis * (self.n_vis - 1) + self.n_aud * (self.n_aud - 1)
    }

    /// Evaluates anchor `i`; when `up` is given, accumulates `weight * dL_i`.
    fn anchor(&self, i: usize, weight: f64, mut up: Option<&mut Upstream>) -> Result<AnchorTerms> {
        let pair_scale = match self.cfg.pair_reduction {
            PairReduction::Sum => 1.0,
            PairReduction::Mean => 1.0 / (self.n_vis * self.n_aud) as f64,
        };
        let mut loc = vec![vec![0.0; self.n_aud]; self.n_vis];
        let mut align = vec![vec![0.0; self.n_aud]; self.n_vis];
        for p in 0..self.n_vis {
            for q in 0..self.n_aud {
                loc[p][q] = self.pair_term(Similarity::Localize, i, p, q, weight * pair_scale, up.as_deref_mut())?;
                if self.cfg.include_alignment {
                    align[p][q] = self.pair_term(Similarity::Align, i, p, q, weight * pair_scale, up.as_deref_mut())?;
                }
            }
        }
        let mut intra = 0.0;
        let mut intra_scale = 1.0;
        if self.cfg.include_intra_modality && self.intra_count() > 0 {
            if self.cfg.pair_reduction == PairReduction::Mean {
                intra_scale = 1.0 / self.intra_count() as f64;
            }
            intra = self.intra_terms(i, weight * intra_scale, up.as_deref_mut())?.0;
        }
        let pair_sum: f64 = loc.iter().chain(&align).flatten().sum();
        let total = pair_scale * pair_sum + intra_scale * intra;
        Ok(AnchorTerms {
            anchor: i,
            total,
            per_pair_localization: loc,
            per_pair_alignment: align,
            intra_modality: intra,
        })
    }

    /// Pushes the upstream unit-vector gradients back to features and heads.
    fn backprop(&self, mut up: Upstream, grads: &mut Gradients) {
        self.fold_scores(&mut up);
        let (c, h, w) = self.batch[0].visual[0].dims();
        let hw = h * w;
        for (j, slots) in self.visual.iter().enumerate() {
            for (p, vc) in slots.iter().enumerate() {
                let out = &mut grads.visual[j][p];
                let g = &up.mean_unit[j][p];
                if g.iter().any(|&x| x != 0.0) {
                    let mut col = vec![0.0; c];
                    for loc in 0..hw {
                        col.iter_mut().for_each(|x| *x = 0.0);
                        let u = &vc.unit_cols[loc * c..(loc + 1) * c];
                        add_normalize_pullback(&mut col, g, u, vc.col_norms[loc], 1.0 / hw as f64);
                        for k in 0..c {
                            out[k * hw + loc] += col[k];
                        }
                    }
                }
                let g = &up.visual_proj[j][p];
                if !g.is_empty() && g.iter().any(|&x| x != 0.0) {
                    let mut gu = vec![0.0; g.len()];
                    add_normalize_pullback(&mut gu, g, &vc.proj_unit, vc.proj_norm, 1.0);
                    accumulate_head(&mut grads.proj_visual, &gu, &vc.pooled);
                    let gm = self.proj.visual.apply_transpose(&gu);
                    for k in 0..c {
                        let share = gm[k] / hw as f64;
                        out[k * hw..(k + 1) * hw].iter_mut().for_each(|x| *x += share);
                    }
                }
            }
        }
        for (j, slots) in self.audio.iter().enumerate() {
            for (q, ac) in slots.iter().enumerate() {
                let out = &mut grads.audio[j][q];
                add_normalize_pullback(out, &up.audio_unit[j][q], &ac.unit, ac.norm, 1.0);
                let g = &up.audio_proj[j][q];
                if !g.is_empty() && g.iter().any(|&x| x != 0.0) {
                    let mut gz = vec![0.0; g.len()];
                    add_normalize_pullback(&mut gz, g, &ac.proj_unit, ac.proj_norm, 1.0);
                    accumulate_head(&mut grads.proj_audio, &gz, &ac.raw);
                    axpy(out, 1.0, &self.proj.audio.apply_transpose(&gz));
                }
            }
        }
    }
}

fn accumulate_head(grad: &mut ProjectionGrad, g_out: &[f64], input: &[f64]) {
    let d_in = input.len();
    for (r, go) in g_out.iter().enumerate() {
        axpy(&mut grad.weight[r * d_in..(r + 1) * d_in], *go, input);
        grad.bias[r] += go;
    }
}

/// Applies `params -= lr * grads` to every feature and head parameter.
pub fn gradient_step(batch: &mut [PositiveSet], proj: &mut Projections, grads: &Gradients, lr: f64) {
    gradient_step_split(batch, proj, grads, lr, lr);
}

/// Like [`gradient_step`] with separate rates for the features and the heads.
pub fn gradient_step_split(
    batch: &mut [PositiveSet],
    proj: &mut Projections,
    grads: &Gradients,
    feature_lr: f64,
    head_lr: f64,
) {
    for (s, gs) in batch.iter_mut().zip(&grads.visual) {
        for (v, g) in s.visual.iter_mut().zip(gs) {
            axpy(v.as_mut_slice(), -feature_lr, g);
        }
    }
    for (s, gs) in batch.iter_mut().zip(&grads.audio) {
        for (a, g) in s.audio.iter_mut().zip(gs) {
            axpy(a.as_mut_slice(), -feature_lr, g);
        }
    }
    axpy(proj.visual.weight_mut(), -head_lr, &grads.proj_visual.weight);
    axpy(proj.visual.bias_mut(), -head_lr, &grads.proj_visual.bias);
    axpy(proj.audio.weight_mut(), -head_lr, &grads.proj_audio.weight);
    axpy(proj.audio.bias_mut(), -head_lr, &grads.proj_audio.bias);
}
