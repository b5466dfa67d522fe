//! Binary tensor files, manifests and embedding-pool sidecars.
//!
//! Tensor layout (little-endian):
//!
//! ```text
//! magic    12 bytes  "AVLOC-TENSOR"
//! version  u32       1
//! dtype    u32       1 = f32, 2 = f64
//! rank     u32       1..=3
//! dims     rank x u32
//! length   u64       payload bytes
//! payload  length bytes, row-major
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correspondence::{correspondence_map, Projection};
use crate::error::{Error, FormatError, Result};
use crate::kernels::{Embedding, FeatureMap, Grid, Mask};
use crate::metrics::{BoxRegion, EvalSample, GroundTruth};
use crate::retrieval::{FeatureSource, RetrievalPool};

pub const MAGIC: &[u8; 12] = b"AVLOC-TENSOR";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u32 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn width(self) -> u64 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Decoded tensor of rank 1, 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Vector(Embedding),
    Grid(Grid),
    Features(FeatureMap),
}

impl Tensor {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Tensor::Vector(e) => vec![e.dim()],
            Tensor::Grid(g) => vec![g.height(), g.width()],
            Tensor::Features(f) => vec![f.channels(), f.height(), f.width()],
        }
    }

    fn data(&self) -> &[f64] {
        match self {
            Tensor::Vector(e) => e.as_slice(),
            Tensor::Grid(g) => g.as_slice(),
            Tensor::Features(f) => f.as_slice(),
        }
    }
}

pub fn encode(dims: &[usize], data: &[f64], dtype: Dtype) -> Result<Vec<u8>> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(FormatError::UnsupportedRank(dims.len() as u32).into());
    }
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(FormatError::DimOverflow)?;
    if count != data.len() {
        return Err(Error::Shape(format!("dims {dims:?} hold {count} values, got {}", data.len())));
    }
    let mut out = Vec::with_capacity(28 + 4 * dims.len() + data.len() * dtype.width() as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| FormatError::DimOverflow)?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(count as u64 * dtype.width()).to_le_bytes());
    for &v in data {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], FormatError> {
        let rest = self.bytes.len() - self.pos;
        if rest < n {
            return Err(FormatError::Truncated { expected: (self.pos + n) as u64, found: self.bytes.len() as u64 });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a tensor file into its dims and values.
pub fn decode(bytes: &[u8]) -> std::result::Result<(Vec<usize>, Vec<f64>, Dtype), FormatError> {
    let prefix = bytes.len().min(MAGIC.len());
    if bytes[..prefix] != MAGIC[..prefix] {
        return Err(FormatError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 0 };
    r.take(MAGIC.len())?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let dtype = match r.u32()? {
        1 => Dtype::F32,
        2 => Dtype::F64,
        other => return Err(FormatError::UnsupportedDtype(other)),
    };
    let rank = r.u32()?;
    if !(1..=3).contains(&rank) {
        return Err(FormatError::UnsupportedRank(rank));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        dims.push(r.u32()? as usize);
    }
    let declared = r.u64()?;
    let required = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
        .and_then(|n| n.checked_mul(dtype.width()))
        .ok_or(FormatError::DimOverflow)?;
    if declared != required {
        return Err(FormatError::HeaderMismatch { declared, required });
    }
    let rest = (bytes.len() - r.pos) as u64;
    if rest < declared {
        return Err(FormatError::Truncated { expected: r.pos as u64 + declared, found: bytes.len() as u64 });
    }
    if rest > declared {
        return Err(FormatError::TrailingBytes(rest - declared));
    }
    let payload = r.take(declared as usize)?;
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4")) as f64).collect(),
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect(),
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite(i));
    }
    Ok((dims, data, dtype))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_tensor(path: &Path, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    write_bytes(path, &encode(&tensor.dims(), tensor.data(), dtype)?)
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let (dims, data, _) = decode(&read_bytes(path)?)?;
    Ok(match dims[..] {
        [_] => Tensor::Vector(Embedding::new(data)?),
        [h, w] => Tensor::Grid(Grid::new(h, w, data)?),
        [c, h, w] => Tensor::Features(FeatureMap::new(c, h, w, data)?),
        _ => unreachable!("rank checked while decoding"),
    })
}

fn wrong_rank(path: &Path, want: &str, t: &Tensor) -> Error {
    Error::Shape(format!("{}: expected {want}, found dims {:?}", path.display(), t.dims()))
}

pub fn load_embedding(path: &Path) -> Result<Embedding> {
    match load_tensor(path)? {
        Tensor::Vector(e) => Ok(e),
        t => Err(wrong_rank(path, "a vector", &t)),
    }
}

pub fn load_grid(path: &Path) -> Result<Grid> {
    match load_tensor(path)? {
        Tensor::Grid(g) => Ok(g),
        t => Err(wrong_rank(path, "a 2-d grid", &t)),
    }
}

pub fn load_feature_map(path: &Path) -> Result<FeatureMap> {
    match load_tensor(path)? {
        Tensor::Features(f) => Ok(f),
        t => Err(wrong_rank(path, "a c x h x w feature map", &t)),
    }
}

/// Stored as a `d_out x (d_in + 1)` grid with the bias in the last column.
pub fn save_projection(path: &Path, p: &Projection, dtype: Dtype) -> Result<()> {
    let (d_in, d_out) = (p.input_dim(), p.output_dim());
    let mut data = Vec::with_capacity(d_out * (d_in + 1));
    for r in 0..d_out {
        data.extend_from_slice(&p.weight()[r * d_in..(r + 1) * d_in]);
        data.push(p.bias()[r]);
    }
    write_bytes(path, &encode(&[d_out, d_in + 1], &data, dtype)?)
}

pub fn load_projection(path: &Path) -> Result<Projection> {
    let g = load_grid(path)?;
    let (d_out, cols) = g.dims();
    if cols < 2 {
        return Err(Error::Shape(format!("{}: projection needs at least 2 columns", path.display())));
    }
    let d_in = cols - 1;
    let mut weight = Vec::with_capacity(d_out * d_in);
    let mut bias = Vec::with_capacity(d_out);
    for row in g.as_slice().chunks_exact(cols) {
        weight.extend_from_slice(&row[..d_in]);
        bias.push(row[d_in]);
    }
    Projection::new(d_in, d_out, weight, bias)
}

/// Ids and shape of an `n x d` embedding matrix stored next to it as `<file>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSidecar {
    pub schema_version: u32,
    pub ids: Vec<String>,
    pub dims: [usize; 2],
    pub modality: String,
    pub source: FeatureSource,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_matrix(path: &Path, ids: &[String], rows: &[Vec<f64>], modality: &str, source: FeatureSource, dtype: Dtype) -> Result<()> {
    let d = rows.first().map_or(0, Vec::len);
    if ids.len() != rows.len() {
        return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), rows.len())));
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    write_bytes(path, &encode(&[rows.len(), d], &data, dtype)?)?;
    let sidecar = PoolSidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        ids: ids.to_vec(),
        dims: [rows.len(), d],
        modality: modality.into(),
        source,
    };
    write_json(&sidecar_path(path), &sidecar)
}

pub fn load_matrix(path: &Path) -> Result<(PoolSidecar, Vec<Vec<f64>>)> {
    let side_path = sidecar_path(path);
    let sidecar: PoolSidecar = read_json(&side_path)?;
    if sidecar.schema_version != SIDECAR_SCHEMA_VERSION {
        return Err(Error::Manifest(format!("{}: schema version {}", side_path.display(), sidecar.schema_version)));
    }
    let g = load_grid(path)?;
    if [g.height(), g.width()] != sidecar.dims || sidecar.ids.len() != g.height() {
        return Err(Error::Shape(format!(
            "{}: matrix {:?} disagrees with sidecar dims {:?} / {} ids",
            path.display(),
            g.dims(),
            sidecar.dims,
            sidecar.ids.len()
        )));
    }
    let rows = g.as_slice().chunks_exact(g.width()).map(<[f64]>::to_vec).collect();
    Ok((sidecar, rows))
}

/// Visual and audio matrices whose sidecars list the same ids in the same order.
pub fn load_pool(visual: &Path, audio: &Path) -> Result<RetrievalPool> {
    let (vs, v) = load_matrix(visual)?;
    let (as_, a) = load_matrix(audio)?;
    if vs.ids != as_.ids {
        return Err(Error::Manifest("visual and audio pools list different ids".into()));
    }
    if vs.source != as_.source {
        return Err(Error::Manifest("visual and audio pools come from different feature sources".into()));
    }
    RetrievalPool::with_ids(vs.ids, v, a, vs.source)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    #[serde(default)]
    pub boxes: Vec<BoxRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Annotation resolution `[h, w]`.
    pub resolution: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default = "yes")]
    pub positive: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(dataset: impl Into<String>, entries: Vec<ManifestEntry>) -> Self {
        Self { schema_version: MANIFEST_SCHEMA_VERSION, dataset: dataset.into(), categories: Vec::new(), entries }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!("unsupported schema version {}", self.schema_version)));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if e.heatmap.is_none() && (e.visual.is_none() || e.audio.is_none()) {
                return Err(Error::Manifest(format!("entry {} needs a heatmap or visual and audio features", e.id)));
            }
            if e.boxes.is_empty() && e.mask.is_none() {
                return Err(Error::Manifest(format!("entry {} has no boxes and no mask", e.id)));
            }
            if let Some(c) = &e.category {
                if !self.categories.is_empty() && !self.categories.contains(c) {
                    return Err(Error::Manifest(format!("entry {} uses undeclared category {c}", e.id)));
                }
            }
        }
        let mut group_res = std::collections::BTreeMap::new();
        for e in &self.entries {
            if let Some(g) = &e.group {
                if *group_res.entry(g.as_str()).or_insert(e.resolution) != e.resolution {
                    return Err(Error::Manifest(format!("group {g} mixes annotation resolutions")));
                }
            }
        }
        Ok(())
    }
}

/// A manifest together with the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base: PathBuf,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(path)?;
        manifest.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn ground_truth(&self, e: &ManifestEntry) -> Result<GroundTruth> {
        let mask = match &e.mask {
            Some(p) => Some(Mask::from_grid(&load_grid(&self.resolve(p))?)),
            None => None,
        };
        GroundTruth::new((e.resolution[0], e.resolution[1]), e.boxes.clone(), mask)
            .map_err(|err| Error::Manifest(format!("entry {}: {err}", e.id)))
    }

    /// Heatmap of an entry: the stored one, or the correspondence map of its features.
    pub fn heatmap(&self, e: &ManifestEntry) -> Result<Grid> {
        match (&e.heatmap, &e.visual, &e.audio) {
            (Some(h), _, _) => load_grid(&self.resolve(h)),
            (None, Some(v), Some(a)) => {
                let v = load_feature_map(&self.resolve(v))?;
                let a = load_embedding(&self.resolve(a))?;
                Ok(correspondence_map(&v, &a)?.map)
            }
            _ => Err(Error::Manifest(format!("entry {} has nothing to evaluate", e.id))),
        }
    }

    pub fn eval_samples(&self) -> Result<Vec<EvalSample>> {
        self.manifest
            .entries
            .iter()
            .map(|e| {
                Ok(EvalSample {
                    id: e.id.clone(),
                    heatmap: self.heatmap(e)?,
                    gt: self.ground_truth(e)?,
                    group: e.group.clone(),
                    positive: e.positive,
                })
            })
            .collect()
    }
}
