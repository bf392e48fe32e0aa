//! Run configuration: a TOML file with `[data]`, `[model]`, `[loss]`,
//! `[train]`, `[eval]` (and optional `[sweep]`) sections. Every key has
//! a documented default; unknown keys are rejected so typos fail fast.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vultype_core::corpus::GroupThresholds;
use vultype_core::model::{GraphBranchConfig, SequenceBranchConfig};
use vultype_core::objectives::LossConfig;
use vultype_core::training::{TaskMode, TrainingConfig};
use vultype_core::{Error, Result};

/// `[data]`: where the corpus lives and how it is split and embedded.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Corpus JSONL path (one function record per line).
    pub corpus: Option<PathBuf>,
    /// Base directory for relative graph-path references; defaults to
    /// the corpus file's directory.
    pub graph_dir: Option<PathBuf>,
    /// Train/valid/test ratios.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    /// Master seed: drives the split, the embeddings, and training.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Classes rarer than this merge into the Remain bucket.
    #[serde(default = "default_remain")]
    pub remain_threshold: usize,
    /// Classes above this count are head.
    #[serde(default = "default_head")]
    pub head_threshold: usize,
    /// Classes below this count are tail.
    #[serde(default = "default_tail")]
    pub tail_threshold: usize,
    /// Tokens seen fewer times than this map to `<unk>`.
    #[serde(default = "default_min_token_freq")]
    pub min_token_freq: usize,
    /// `hash` (cheap, deterministic) or `trained` (skip-gram).
    #[serde(default)]
    pub embedding: EmbeddingKind,
}

fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}
fn default_seed() -> u64 {
    42
}
fn default_remain() -> usize {
    20
}
fn default_head() -> usize {
    200
}
fn default_tail() -> usize {
    50
}
fn default_min_token_freq() -> usize {
    1
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            corpus: None,
            graph_dir: None,
            split: default_split(),
            seed: default_seed(),
            remain_threshold: default_remain(),
            head_threshold: default_head(),
            tail_threshold: default_tail(),
            min_token_freq: default_min_token_freq(),
            embedding: EmbeddingKind::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    #[default]
    Hash,
    Trained,
}

/// `[model]`: both branch widths. Defaults mirror the core branch
/// configs (d=128, L=16, α=0.1, 512-token limit, hidden 512).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub dim: usize,
    pub layers: usize,
    pub alpha: f64,
    pub graph_mlp_hidden: usize,
    pub token_limit: usize,
    pub hidden: usize,
    pub seq_mlp_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let g = GraphBranchConfig::default();
        let s = SequenceBranchConfig::default();
        ModelSection {
            dim: g.dim,
            layers: g.layers,
            alpha: g.alpha,
            graph_mlp_hidden: g.mlp_hidden,
            token_limit: s.token_limit,
            hidden: s.hidden,
            seq_mlp_hidden: s.mlp_hidden,
        }
    }
}

impl ModelSection {
    pub fn graph_config(&self) -> GraphBranchConfig {
        GraphBranchConfig {
            layers: self.layers,
            alpha: self.alpha,
            dim: self.dim,
            mlp_hidden: self.graph_mlp_hidden,
        }
    }

    pub fn sequence_config(&self) -> SequenceBranchConfig {
        SequenceBranchConfig {
            token_limit: self.token_limit,
            hidden: self.hidden,
            mlp_hidden: self.seq_mlp_hidden,
        }
    }
}

/// `[train]`: optimization settings. `epochs` defaults by mode (50 for
/// type classification, 100 for detection).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub mode: Option<TaskMode>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

/// `[eval]`: multiclass macro scoring by default; binary mode scores
/// `positive` against the rest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub mode: EvalKind,
    pub positive: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    #[default]
    Multiclass,
    Binary,
}

/// `[sweep]`: value grids for the two swept axes, bracketing the
/// default depth and width.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub layers: Vec<usize>,
    pub hidden: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            layers: vec![12, 14, 16, 18, 20],
            hidden: vec![128, 256, 512, 768, 1024],
        }
    }
}

/// The whole run configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn thresholds(&self) -> GroupThresholds {
        GroupThresholds {
            remain: self.data.remain_threshold,
            head: self.data.head_threshold,
            tail: self.data.tail_threshold,
        }
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        self.data
            .corpus
            .as_deref()
            .ok_or_else(|| Error::Config("[data] corpus is required for this command".into()))
    }

    pub fn graph_dir(&self) -> Result<PathBuf> {
        if let Some(d) = &self.data.graph_dir {
            return Ok(d.clone());
        }
        Ok(self
            .corpus_path()?
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")))
    }

    /// Training config with mode/seed overrides applied and
    /// mode-dependent epoch defaults filled in.
    pub fn training(&self, mode: Option<TaskMode>, seed: u64) -> Result<TrainingConfig> {
        let mode = mode
            .or(self.train.mode)
            .unwrap_or(TaskMode::TypeClassification);
        let mut cfg = TrainingConfig::for_mode(mode);
        if let Some(e) = self.train.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.train.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.train.learning_rate {
            cfg.learning_rate = lr;
        }
        cfg.seed = seed;
        cfg.threads = thread_hint()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `VULTYPE_THREADS` is a hint only: the pipeline is single-threaded,
/// but the value is validated and recorded in run artifacts.
pub fn thread_hint() -> Result<usize> {
    match std::env::var("VULTYPE_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                Error::Config(format!("VULTYPE_THREADS must be a positive integer, got {v:?}"))
            }),
    }
}

/// A loaded config plus the hash of the raw bytes it came from
/// (embedded in every artifact).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn load_run_config(path: &Path) -> Result<LoadedConfig> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let config: RunConfig = toml::from_str(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.loss.validate()?;
    if config.eval.mode == EvalKind::Binary && config.eval.positive.is_none() {
        return Err(Error::Config(
            "[eval] positive is required when mode = \"binary\"".into(),
        ));
    }
    Ok(LoadedConfig {
        config,
        sha256: sha256_hex(raw.as_bytes()),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Synthetic-corpus recipe file: a `[synth]` section with either an
/// explicit `counts` list or a `[synth.zipf]` grid. `seed` has no
/// default — a recipe without one is rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub counts: Option<Vec<usize>>,
    pub zipf: Option<ZipfSpec>,
    pub vocab_size: usize,
    pub signal_strength: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZipfSpec {
    pub classes: usize,
    pub base: f64,
    pub exponent: f64,
    pub floor: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedSynth {
    pub spec: vultype_core::corpus::SyntheticSpec,
    pub sha256: String,
}

pub fn load_synth_config(path: &Path) -> Result<LoadedSynth> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let file: SynthFile = toml::from_str(&raw)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let s = file.synth;
    let counts = match (&s.counts, &s.zipf) {
        (Some(c), None) => c.clone(),
        (None, Some(z)) => vultype_core::corpus::SyntheticSpec::zipf_counts(
            z.classes, z.base, z.exponent, z.floor,
        ),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "[synth] counts and [synth.zipf] are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "[synth] needs either counts or a [synth.zipf] table".into(),
            ))
        }
    };
    Ok(LoadedSynth {
        spec: vultype_core::corpus::SyntheticSpec {
            counts,
            vocab_size: s.vocab_size,
            signal_strength: s.signal_strength,
            seed: s.seed,
        },
        sha256: sha256_hex(raw.as_bytes()),
    })
}

/// Identity block embedded in every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_sha256: &str, seed: u64) -> Provenance {
        Provenance {
            tool: "vultype".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: config_sha256.to_string(),
        }
    }

    /// One-line rendering used as a leading comment in CSV/SVG files.
    pub fn comment_line(&self) -> String {
        format!(
            "# {} {} config_sha256={} seed={}",
            self.tool, self.version, self.config_sha256, self.seed
        )
    }
}
