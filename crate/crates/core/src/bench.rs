//! Synthetic multi-source scenes with planted audio-visual correspondence.
//!
//! Every category owns a random unit direction. A scene places one box per
//! sounding source; the feature columns inside a box point along the source's
//! category direction, the rest along a per-scene background direction, and
//! each source's audio embedding is its category direction. All three get
//! isotropic Gaussian noise of the configured level.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{save_matrix, save_tensor, write_json, Dtype, Manifest, ManifestEntry, Tensor};
use crate::kernels::{Embedding, FeatureMap, Grid};
use crate::metrics::BoxRegion;
use crate::retrieval::FeatureSource;
use crate::toy::{stream_rng, unit_direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Sounding sources per scene, each of a distinct category.
    pub sources: usize,
    pub categories: usize,
    pub min_box: usize,
    pub max_box: usize,
    pub noise: f64,
    /// Length of the background direction in the visual map.
    pub background: f64,
    /// Largest IoU allowed between two boxes of one scene.
    pub iou_cap: f64,
    pub max_attempts: usize,
    /// Non-matching audio clips paired with each scene.
    pub negatives_per_scene: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            channels: 8,
            sources: 2,
            categories: 8,
            min_box: 3,
            max_box: 6,
            noise: 0.15,
            background: 0.3,
            iou_cap: 0.0,
            max_attempts: 1000,
            negatives_per_scene: 0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return bad("grid and embedding sizes must be positive".into());
        }
        if !(2..=5).contains(&self.sources) {
            return bad(format!("{} sources per scene; expected 2 to 5", self.sources));
        }
        if self.categories < self.sources + usize::from(self.negatives_per_scene > 0) {
            return bad(format!("{} categories cannot cover {} distinct sources", self.categories, self.sources));
        }
        if self.min_box == 0 || self.min_box > self.max_box || self.max_box > self.height.min(self.width) {
            return bad(format!("box sizes {}..={} do not fit the grid", self.min_box, self.max_box));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.background >= 0.0 && self.background.is_finite()) {
            return bad("noise and background must be finite and non-negative".into());
        }
        if self.noise == 0.0 && self.background == 0.0 {
            return bad("zero noise needs a positive background".into());
        }
        if !(0.0..=1.0).contains(&self.iou_cap) {
            return bad(format!("IoU cap {} outside [0, 1]", self.iou_cap));
        }
        Ok(())
    }

    pub fn category_name(i: usize) -> String {
        format!("cat-{i:02}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    pub category: usize,
    pub bbox: BoxRegion,
    pub audio: Embedding,
}

/// Audio of a category absent from the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeClip {
    pub id: String,
    pub category: usize,
    pub audio: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub visual: FeatureMap,
    pub sources: Vec<Source>,
    pub negatives: Vec<NegativeClip>,
}

impl Scene {
    /// Mean visual feature over a source's box.
    pub fn box_embedding(&self, b: &BoxRegion) -> Vec<f64> {
        let c = self.visual.channels();
        let mut acc = vec![0.0; c];
        for y in b.y_min..b.y_max {
            for x in b.x_min..b.x_max {
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += self.visual.get(k, y, x);
                }
            }
        }
        let n = b.area() as f64;
        acc.into_iter().map(|v| v / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub spec: SceneSpec,
    pub directions: Vec<Vec<f64>>,
    pub scenes: Vec<Scene>,
}

fn noisy(rng: &mut impl Rng, base: &[f64], scale: f64, noise: f64) -> Vec<f64> {
    base.iter().map(|b| scale * b + noise * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn place_boxes(rng: &mut impl Rng, spec: &SceneSpec) -> Result<Vec<BoxRegion>> {
    let mut boxes: Vec<BoxRegion> = Vec::with_capacity(spec.sources);
    let mut attempts = 0;
    while boxes.len() < spec.sources {
        if attempts == spec.max_attempts {
            return Err(Error::PlacementFailed { attempts });
        }
        attempts += 1;
        let bw = rng.random_range(spec.min_box..=spec.max_box);
        let bh = rng.random_range(spec.min_box..=spec.max_box);
        let x = rng.random_range(0..=spec.width - bw);
        let y = rng.random_range(0..=spec.height - bh);
        let b = BoxRegion::new(x, y, x + bw, y + bh);
        if boxes.iter().all(|o| o.iou(&b) <= spec.iou_cap) {
            boxes.push(b);
        }
    }
    Ok(boxes)
}

fn generate_scene(spec: &SceneSpec, directions: &[Vec<f64>], index: usize) -> Result<Scene> {
    let mut rng = stream_rng(spec.seed, index as u64 + 1);
    let (c, h, w) = (spec.channels, spec.height, spec.width);
    let id = format!("scene-{index:04}");
    let picked = sample(&mut rng, spec.categories, spec.sources).into_vec();
    let boxes = place_boxes(&mut rng, spec)?;
    let background = unit_direction(&mut rng, c);

    let mut owner = vec![None; h * w];
    for (j, b) in boxes.iter().enumerate() {
        for y in b.y_min..b.y_max {
            for x in b.x_min..b.x_max {
                owner[y * w + x] = Some(j);
            }
        }
    }
    let mut data = vec![0.0; c * h * w];
    for (loc, o) in owner.iter().enumerate() {
        let column = match o {
            Some(j) => noisy(&mut rng, &directions[picked[*j]], 1.0, spec.noise),
            None => noisy(&mut rng, &background, spec.background, spec.noise),
        };
        for (k, v) in column.into_iter().enumerate() {
            data[k * h * w + loc] = v;
        }
    }
    let visual = FeatureMap::new(c, h, w, data)?;

    let sources = boxes
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let category = picked[j];
            Ok(Source {
                id: format!("{id}-s{j}"),
                category,
                bbox: *b,
                audio: Embedding::new(noisy(&mut rng, &directions[category], 1.0, spec.noise))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let absent: Vec<usize> = (0..spec.categories).filter(|k| !picked.contains(k)).collect();
    let negatives = (0..spec.negatives_per_scene)
        .map(|j| {
            let category = absent[rng.random_range(0..absent.len())];
            Ok(NegativeClip {
                id: format!("{id}-n{j}"),
                category,
                audio: Embedding::new(noisy(&mut rng, &directions[category], 1.0, spec.noise))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene { id, visual, sources, negatives })
}

/// Scenes are generated from independent random streams, so the output does
/// not depend on the thread count.
pub fn generate_scenes(spec: &SceneSpec, n_scenes: usize) -> Result<Benchmark> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let directions: Vec<Vec<f64>> = (0..spec.categories).map(|_| unit_direction(&mut rng, spec.channels)).collect();
    let scenes = (0..n_scenes)
        .into_par_iter()
        .map(|i| generate_scene(spec, &directions, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Benchmark { spec: spec.clone(), directions, scenes })
}

fn rel(parts: &[&str]) -> PathBuf {
    PathBuf::from(parts.join("/"))
}

/// Writes the benchmark under `out` and returns its manifest, also saved as `manifest.json`.
pub fn write_benchmark(bench: &Benchmark, out: &Path, dtype: Dtype) -> Result<Manifest> {
    let spec = &bench.spec;
    let mut entries = Vec::new();
    let (mut pool_ids, mut pool_v, mut pool_a) = (Vec::new(), Vec::new(), Vec::new());
    for scene in &bench.scenes {
        let visual = rel(&["visual", &format!("{}.bin", scene.id)]);
        save_tensor(&out.join(&visual), &Tensor::Features(scene.visual.clone()), dtype)?;
        for s in &scene.sources {
            let audio = rel(&["audio", &format!("{}.bin", s.id)]);
            save_tensor(&out.join(&audio), &Tensor::Vector(s.audio.clone()), dtype)?;
            let mask = rel(&["masks", &format!("{}.bin", s.id)]);
            let b = s.bbox;
            let grid = Grid::from_fn(spec.height, spec.width, |y, x| {
                f64::from(u8::from((b.y_min..b.y_max).contains(&y) && (b.x_min..b.x_max).contains(&x)))
            })?;
            save_tensor(&out.join(&mask), &Tensor::Grid(grid), dtype)?;
            entries.push(ManifestEntry {
                id: s.id.clone(),
                heatmap: None,
                visual: Some(visual.clone()),
                audio: Some(audio),
                boxes: vec![s.bbox],
                mask: Some(mask),
                resolution: [spec.height, spec.width],
                category: Some(SceneSpec::category_name(s.category)),
                group: Some(scene.id.clone()),
                positive: true,
            });
            pool_ids.push(s.id.clone());
            pool_v.push(scene.box_embedding(&s.bbox));
            pool_a.push(s.audio.as_slice().to_vec());
        }
        for n in &scene.negatives {
            let audio = rel(&["audio", &format!("{}.bin", n.id)]);
            save_tensor(&out.join(&audio), &Tensor::Vector(n.audio.clone()), dtype)?;
            entries.push(ManifestEntry {
                id: n.id.clone(),
                heatmap: None,
                visual: Some(visual.clone()),
                audio: Some(audio),
                boxes: vec![scene.sources[0].bbox],
                mask: None,
                resolution: [spec.height, spec.width],
                category: Some(SceneSpec::category_name(n.category)),
                group: None,
                positive: false,
            });
        }
    }
    save_matrix(&out.join("pools/visual.bin"), &pool_ids, &pool_v, "visual", FeatureSource::Backbone, dtype)?;
    save_matrix(&out.join("pools/audio.bin"), &pool_ids, &pool_a, "audio", FeatureSource::Backbone, dtype)?;
    let mut manifest = Manifest::new("synthetic", entries);
    manifest.categories = (0..spec.categories).map(SceneSpec::category_name).collect();
    write_json(&out.join("spec.json"), spec)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn generate_benchmark(spec: &SceneSpec, n_scenes: usize, out: &Path) -> Result<Manifest> {
    write_benchmark(&generate_scenes(spec, n_scenes)?, out, Dtype::F32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::LoadedManifest;
    use crate::metrics::{interactive_iou, EvalConfig, Variant};

    #[test]
    fn counts_and_groups() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec { seed: 1, ..SceneSpec::default() };
        let m = generate_benchmark(&spec, 10, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 20);
        let groups: std::collections::BTreeSet<_> = m.entries.iter().map(|e| e.group.clone().unwrap()).collect();
        assert_eq!(groups.len(), 10);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn boxes_respect_the_cap_and_grid() {
        let spec = SceneSpec { sources: 5, seed: 4, ..SceneSpec::default() };
        let b = generate_scenes(&spec, 20).unwrap();
        for s in &b.scenes {
            let cats: std::collections::BTreeSet<_> = s.sources.iter().map(|x| x.category).collect();
            assert_eq!(cats.len(), 5);
            for (i, x) in s.sources.iter().enumerate() {
                assert!(x.bbox.x_max <= 16 && x.bbox.y_max <= 16 && x.bbox.area() > 0);
                for y in &s.sources[i + 1..] {
                    assert_eq!(x.bbox.iou(&y.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn impossible_placement_fails() {
        let spec = SceneSpec { height: 4, width: 4, min_box: 4, max_box: 4, max_attempts: 50, ..SceneSpec::default() };
        assert!(matches!(generate_scenes(&spec, 1), Err(Error::PlacementFailed { attempts: 50 })));
    }

    #[test]
    fn zero_noise_is_perfectly_localizable() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec { noise: 0.0, sources: 3, seed: 2, ..SceneSpec::default() };
        generate_benchmark(&spec, 10, dir.path()).unwrap();
        let loaded = LoadedManifest::load(&dir.path().join("manifest.json")).unwrap();
        let samples = loaded.eval_samples().unwrap();
        let out = interactive_iou(&samples, Variant::Adaptive, &EvalConfig::default()).unwrap();
        assert!(out.per_sample.iter().all(|l| l.success && l.iou == 1.0));
        assert_eq!(out.iiou, 1.0);
    }

    #[test]
    fn repeat_seed_is_identical() {
        let spec = SceneSpec { seed: 9, negatives_per_scene: 1, ..SceneSpec::default() };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_benchmark(&spec, 5, a.path()).unwrap();
        generate_benchmark(&spec, 5, b.path()).unwrap();
        let mut files: Vec<_> = walk(a.path());
        files.sort();
        assert!(!files.is_empty());
        for f in files {
            let rel = f.strip_prefix(a.path()).unwrap();
            assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel:?}");
        }
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn negatives_use_absent_categories() {
        let spec = SceneSpec { seed: 3, negatives_per_scene: 2, ..SceneSpec::default() };
        for s in generate_scenes(&spec, 10).unwrap().scenes {
            for n in &s.negatives {
                assert!(s.sources.iter().all(|x| x.category != n.category));
            }
        }
    }
}
