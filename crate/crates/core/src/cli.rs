//! Command-line surface of the `avloc` binary.
//!
//! Every command writes one JSON report (stdout, or `--out`) that embeds its
//! effective configuration. Exit codes: 0 on success, 2 for usage errors and
//! missing files, 1 for invalid data.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{generate_scenes, write_benchmark, SceneSpec};
use crate::contrastive::{
    batch_objective, info_nce, loss_pair, ContrastiveConfig, PositiveSet, Projections, SampleFeatures, Similarity,
};
use crate::error::Error;
use crate::gradcheck::finite_difference_check;
use crate::io::{self, Dtype, LoadedManifest};
use crate::metrics::{
    evaluate_extended, evaluate_interactive, evaluate_localization, evaluate_segmentation, EvalConfig, EvalSample,
    MetricReport, Variant,
};
use crate::mining::{build_index, sample_concept, MiningConfig, Modality};
use crate::retrieval::{alignment_magnitude, compose, compositional_retrieve, recall_at_k, Direction};
use crate::toy::random_instance;
use crate::train::{toy_train, TrainConfig};

pub const CLI_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "avloc", version, about = "Sound source localization metrics, contrastive objective and toy benchmarks")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "AVLOC_THREADS")]
    pub threads: Option<usize>,
    /// JSON file with the command's configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report path (stdout when absent). For `bench-gen`, the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Ciou,
    AdaptiveCiou,
    Both,
}

impl MetricArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            MetricArg::Ciou => vec![Variant::Ciou],
            MetricArg::AdaptiveCiou => vec![Variant::Adaptive],
            MetricArg::Both => vec![Variant::Ciou, Variant::Adaptive],
        }
    }

    fn single(self) -> Result<Variant, Failure> {
        match self {
            MetricArg::Ciou => Ok(Variant::Ciou),
            MetricArg::AdaptiveCiou => Ok(Variant::Adaptive),
            MetricArg::Both => Err(Failure::Usage("this command takes a single variant".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    AudioToImage,
    ImageToAudio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-sample CSV export.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Visual embedding matrix (with its `.json` sidecar).
    #[arg(long)]
    pub visual: PathBuf,
    /// Audio embedding matrix (with its `.json` sidecar).
    #[arg(long)]
    pub audio: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub no_alignment: bool,
    #[arg(long)]
    pub intra_modality: bool,
    /// Samples in the toy batch.
    #[arg(long, default_value_t = 4)]
    pub samples: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Spatial side of the toy feature maps.
    #[arg(long, default_value_t = 3)]
    pub size: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// cIoU and AUC over the positive entries of a manifest.
    Eval {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long, value_enum, default_value = "ciou")]
        metric: MetricArg,
    },
    /// Interactive IoU over multi-source groups.
    EvalInteractive {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long, value_enum, default_value = "adaptive-ciou")]
        metric: MetricArg,
    },
    /// AP, max-F1 and LocAcc over positive and negative entries.
    EvalExtended {
        #[command(flatten)]
        input: ManifestArgs,
    },
    /// mIoU and F-score against segmentation masks.
    EvalSeg {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long, value_enum, default_value = "ciou")]
        metric: MetricArg,
    },
    /// Cross-modal recall@k.
    Retrieve {
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long, value_enum, default_value = "audio-to-image")]
        direction: DirectionArg,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
        k: Vec<usize>,
    },
    /// Image retrieval with a composed `lambda * v + (1 - lambda) * a` query.
    Compose {
        #[command(flatten)]
        pool: PoolArgs,
        /// Pool id whose visual embedding enters the query.
        #[arg(long)]
        image_id: String,
        /// Pool id whose audio embedding enters the query.
        #[arg(long)]
        audio_id: String,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Alignment and modality-gap magnitude of the paired embeddings.
    AlignReport {
        #[command(flatten)]
        pool: PoolArgs,
        /// Measure distances on the raw embeddings.
        #[arg(long)]
        raw: bool,
    },
    /// Nearest neighbours and sampled concept members.
    Mine {
        /// Embedding matrix with its `.json` sidecar.
        #[arg(long)]
        pool: PathBuf,
        /// Query ids; every id of the pool when absent.
        #[arg(long)]
        query: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        include_anchor: bool,
    },
    /// Loss terms on a seeded toy batch, with InfoNCE sanity checks.
    LossCheck {
        #[command(flatten)]
        loss: LossArgs,
    },
    /// Analytic against central-difference gradients on seeded toy batches.
    GradCheck {
        #[command(flatten)]
        loss: LossArgs,
        #[arg(long, default_value_t = 1)]
        instances: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Writes a synthetic multi-source benchmark to `--out`.
    BenchGen {
        #[arg(long, default_value_t = 10)]
        scenes: usize,
        #[arg(long)]
        sources: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, value_enum, default_value = "f32")]
        dtype: DtypeArg,
    },
    /// Gradient-descent training on generated scenes.
    ToyTrain {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        head_lr: Option<f64>,
        #[arg(long)]
        no_alignment: bool,
        /// Also save the trained heads (`<path>.visual.bin`, `<path>.audio.bin`).
        #[arg(long)]
        projections: Option<PathBuf>,
    },
}

/// Why a command failed, which decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Data(Error::MissingFile(_)) => 2,
            Failure::Data(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("avloc: {f}");
            f.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CmdResult<()> {
    let threads = match cli.common.threads {
        Some(0) => return Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> CmdResult<()> {
    let common = &cli.common;
    let seed = common.seed.unwrap_or(0);
    let report = match &cli.command {
        Command::Eval { input, metric } => {
            let cfg: EvalConfig = load_config(common)?;
            let samples = positives(manifest_samples(&input.manifest)?);
            let r = evaluate_localization(&samples, &metric.variants(), &cfg)?;
            metric_output("eval", input, json!({ "metric": metric_name(*metric) }), r)?
        }
        Command::EvalInteractive { input, metric } => {
            let cfg: EvalConfig = load_config(common)?;
            let samples = positives(manifest_samples(&input.manifest)?);
            let r = evaluate_interactive(&samples, metric.single()?, &cfg)?;
            metric_output("eval-interactive", input, json!({ "metric": metric_name(*metric) }), r)?
        }
        Command::EvalExtended { input } => {
            let cfg: EvalConfig = load_config(common)?;
            let samples = manifest_samples(&input.manifest)?;
            let r = evaluate_extended(&samples, &cfg)?;
            metric_output("eval-extended", input, json!({}), r)?
        }
        Command::EvalSeg { input, metric } => {
            let cfg: EvalConfig = load_config(common)?;
            let samples: Vec<_> =
                positives(manifest_samples(&input.manifest)?).into_iter().filter(|s| s.gt.mask().is_some()).collect();
            let r = evaluate_segmentation(&samples, metric.single()?, &cfg)?;
            metric_output("eval-seg", input, json!({ "metric": metric_name(*metric) }), r)?
        }
        Command::Retrieve { pool, direction, k } => {
            let p = io::load_pool(&pool.visual, &pool.audio)?;
            let dir = match direction {
                DirectionArg::AudioToImage => Direction::AudioToImage,
                DirectionArg::ImageToAudio => Direction::ImageToAudio,
            };
            let r = recall_at_k(&p, dir, k)?;
            envelope("retrieve", json!({ "visual": pool.visual, "audio": pool.audio, "direction": dir, "k": k }), r)
        }
        Command::Compose { pool, image_id, audio_id, lambda, k } => {
            let p = io::load_pool(&pool.visual, &pool.audio)?;
            let find = |id: &str| {
                p.ids().iter().position(|x| x == id).ok_or_else(|| Failure::Data(Error::UnknownId(id.to_string())))
            };
            let (vi, ai) = (find(image_id)?, find(audio_id)?);
            let composition = compose(&p.visual()[vi], &p.audio()[ai], *lambda, false)?;
            let ranked = compositional_retrieve(&p, &p.visual()[vi], &p.audio()[ai], *lambda, *k)?;
            envelope(
                "compose",
                json!({ "visual": pool.visual, "audio": pool.audio, "image_id": image_id, "audio_id": audio_id, "lambda": lambda, "k": k }),
                json!({ "query": composition.normalized, "ranked": ranked }),
            )
        }
        Command::AlignReport { pool, raw } => {
            let p = io::load_pool(&pool.visual, &pool.audio)?;
            let r = alignment_magnitude(&p, *raw)?;
            let ids = p.ids();
            let per_pair: Vec<Value> = r
                .per_pair
                .iter()
                .zip(ids)
                .map(|(g, id)| json!({ "id": id, "cosine": g.cosine, "distance": g.distance }))
                .collect();
            envelope(
                "align-report",
                json!({ "visual": pool.visual, "audio": pool.audio, "raw": raw, "source": p.source() }),
                json!({
                    "alignment": r.alignment,
                    "magnitude_mean": r.magnitude_mean,
                    "magnitude_std": r.magnitude_std,
                    "normalized": r.normalized,
                    "per_pair": per_pair,
                }),
            )
        }
        Command::Mine { pool, query, k, include_anchor } => {
            let mut cfg: MiningConfig = load_config(common)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(k) = k {
                cfg.k = *k;
            }
            if *include_anchor {
                cfg.exclude_anchor = false;
            }
            let (side, rows) = io::load_matrix(pool)?;
            let modality = match side.modality.as_str() {
                "visual" => Modality::Visual,
                "audio" => Modality::Audio,
                other => return Err(Failure::Data(Error::Manifest(format!("unknown pool modality `{other}`")))),
            };
            let index = build_index(side.ids.clone(), &rows, modality)?;
            let queries = if query.is_empty() { side.ids.clone() } else { query.clone() };
            let results = queries
                .iter()
                .map(|q| {
                    Ok(json!({
                        "query": q,
                        "neighbors": index.top_k(q, cfg.k, cfg.exclude_anchor)?,
                        "concept": sample_concept(&index, q, &cfg)?,
                    }))
                })
                .collect::<crate::Result<Vec<_>>>()?;
            envelope("mine", json!({ "pool": pool, "modality": modality, "mining": cfg }), json!({ "results": results }))
        }
        Command::LossCheck { loss } => {
            let cfg = loss_config(common, loss)?;
            let (batch, proj) = toy_batch(seed, loss);
            let out = batch_objective(&batch, &cfg, &proj, false)?;
            let uniform_gap = (1..=64)
                .map(|n| info_nce(&vec![0.25; n], 0, cfg.temperature).map(|l| (l - (n as f64).ln()).abs()))
                .collect::<crate::Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            let single_cfg = ContrastiveConfig { include_alignment: false, include_intra_modality: false, ..cfg.clone() };
            let singles: Vec<_> = batch
                .iter()
                .map(|s| PositiveSet::single(s.visual[0].clone(), s.audio[0].clone()))
                .collect();
            let pairs: Vec<SampleFeatures> = batch
                .iter()
                .map(|s| SampleFeatures { visual: s.visual[0].clone(), audio: s.audio[0].clone() })
                .collect();
            let multi = batch_objective(&singles, &single_cfg, &proj, false)?;
            let mut single_gap: f64 = 0.0;
            for (i, a) in multi.anchors.iter().enumerate() {
                let l = loss_pair(i, &pairs, Similarity::Localize, &single_cfg, &proj)?;
                single_gap = single_gap.max((a.total - l).abs());
            }
            envelope(
                "loss-check",
                json!({ "seed": seed, "samples": loss.samples, "channels": loss.channels, "size": loss.size, "loss": cfg }),
                json!({
                    "total": out.total,
                    "anchors": out.anchors,
                    "uniform_scores_max_gap_to_ln_n": uniform_gap,
                    "single_slot_max_gap_to_pair_loss": single_gap,
                }),
            )
        }
        Command::GradCheck { loss, instances, step } => {
            let cfg = loss_config(common, loss)?;
            if *instances == 0 {
                return Err(Failure::Usage("--instances must be at least 1".into()));
            }
            let reports = (0..*instances as u64)
                .map(|i| {
                    let (batch, proj) = toy_batch(seed.wrapping_add(i), loss);
                    finite_difference_check(&batch, &proj, &cfg, *step)
                })
                .collect::<crate::Result<Vec<_>>>()?;
            let worst = |f: fn(&crate::gradcheck::GradCheckReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
            envelope(
                "grad-check",
                json!({ "seed": seed, "instances": instances, "step": step, "samples": loss.samples, "channels": loss.channels, "size": loss.size, "loss": cfg }),
                json!({
                    "max_relative_error": worst(|r| r.max_relative_error),
                    "max_elementwise_relative_error": worst(|r| r.max_elementwise_relative_error),
                    "max_abs_error": worst(|r| r.max_abs_error),
                    "instances": reports,
                }),
            )
        }
        Command::BenchGen { scenes, sources, noise, dtype } => {
            let out = common.out.as_ref().ok_or_else(|| Failure::Usage("bench-gen needs --out <dir>".into()))?;
            let mut spec: SceneSpec = load_config(common)?;
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            if let Some(s) = sources {
                spec.sources = *s;
            }
            if let Some(n) = noise {
                spec.noise = *n;
            }
            if *scenes == 0 {
                return Err(Failure::Usage("--scenes must be at least 1".into()));
            }
            spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let dtype = match dtype {
                DtypeArg::F32 => Dtype::F32,
                DtypeArg::F64 => Dtype::F64,
            };
            let manifest = write_benchmark(&generate_scenes(&spec, *scenes)?, out, dtype)?;
            let report = envelope(
                "bench-gen",
                json!({ "scenes": scenes, "dtype": dtype, "spec": spec }),
                json!({
                    "manifest": "manifest.json",
                    "entries": manifest.entries.len(),
                    "groups": scenes,
                    "pools": ["pools/visual.bin", "pools/audio.bin"],
                }),
            );
            return emit(None, &report);
        }
        Command::ToyTrain { steps, lr, head_lr, no_alignment, projections } => {
            let mut cfg: TrainConfig = load_config(common)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.steps = *s;
            }
            if let Some(l) = lr {
                cfg.lr = *l;
            }
            if let Some(l) = head_lr {
                cfg.head_lr = *l;
            }
            if *no_alignment {
                cfg.loss.include_alignment = false;
            }
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let out = toy_train(&cfg)?;
            if let Some(p) = projections {
                io::save_projection(&suffixed(p, "visual.bin"), &out.projections.visual, Dtype::F64)?;
                io::save_projection(&suffixed(p, "audio.bin"), &out.projections.audio, Dtype::F64)?;
            }
            envelope("toy-train", json!({ "train": cfg }), out.report)
        }
    };
    emit(common.out.as_deref(), &report)
}

fn suffixed(p: &Path, ext: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn metric_name(m: MetricArg) -> &'static str {
    match m {
        MetricArg::Ciou => "ciou",
        MetricArg::AdaptiveCiou => "adaptive-ciou",
        MetricArg::Both => "both",
    }
}

fn envelope(command: &str, config: Value, report: impl Serialize) -> Value {
    json!({
        "schema_version": CLI_SCHEMA_VERSION,
        "command": command,
        "config": config,
        "report": report,
    })
}

fn metric_output(command: &str, input: &ManifestArgs, mut extra: Value, report: MetricReport) -> CmdResult<Value> {
    if let Some(csv) = &input.csv {
        io::write_bytes(csv, report.per_sample_csv()?.as_bytes())?;
    }
    extra["manifest"] = json!(input.manifest);
    Ok(envelope(command, extra, report))
}

fn emit(out: Option<&Path>, report: &Value) -> CmdResult<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(Error::from)?;
    text.push('\n');
    match out {
        Some(p) => io::write_bytes(p, text.as_bytes())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Data(Error::Io { path: "<stdout>".into(), source: e }))?;
        }
    }
    Ok(())
}

/// `--config` contents, or the defaults when absent.
fn load_config<C: DeserializeOwned + Default>(common: &Common) -> CmdResult<C> {
    let Some(path) = &common.config else {
        return Ok(C::default());
    };
    let bytes = io::read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn loss_config(common: &Common, args: &LossArgs) -> CmdResult<ContrastiveConfig> {
    let mut cfg: ContrastiveConfig = load_config(common)?;
    if let Some(t) = args.temperature {
        cfg.temperature = t;
    }
    if args.no_alignment {
        cfg.include_alignment = false;
    }
    if args.intra_modality {
        cfg.include_intra_modality = true;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if args.samples == 0 || args.channels == 0 || args.size == 0 {
        return Err(Failure::Usage("toy batch dimensions must be positive".into()));
    }
    Ok(cfg)
}

fn toy_batch(seed: u64, args: &LossArgs) -> (Vec<PositiveSet>, Projections) {
    random_instance(seed, args.samples, 3, args.channels, args.size, args.size)
}

fn manifest_samples(path: &Path) -> CmdResult<Vec<EvalSample>> {
    Ok(LoadedManifest::load(path)?.eval_samples()?)
}

fn positives(samples: Vec<EvalSample>) -> Vec<EvalSample> {
    samples.into_iter().filter(|s| s.positive).collect()
}
