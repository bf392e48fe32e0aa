//! The optimization loop: sample preparation, an adaptive-moment
//! optimizer over the flattened parameter vector, per-epoch loss
//! scheduling, gradient clipping, JSONL run logging, checkpointing
//! with bit-compatible resume, and the finite-difference gradient
//! checker used throughout the tests.
//!
//! Reference mode is single-threaded and fully deterministic: every
//! randomized stage derives its own sub-seed, so a (config, seed) pair
//! pins the whole run.

use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codegraph::{build_token_chain_graph, normalize_adjacency, tokenize, TokenSequence};
use crate::corpus::{gather, resolve_graph, ClassGroupTable, DatasetSplit, FunctionSample};
use crate::embeddings::{embed_nodes, embed_tokens, EmbeddingTable, Vocabulary, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, EvalMode, MetricsReport};
use crate::model::{GraphBranchConfig, ModelParameters, SampleInput, SequenceBranchConfig};
use crate::objectives::{
    softmax, ClassFrequencyTable, EpochSchedule, LossConfig, LossKind, Objective,
};
use crate::seed;

/// Gradients are rescaled when their global L2 norm exceeds this.
pub const GRADIENT_CLIP_NORM: f64 = 5.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VTCKPT01";

/// Which task the run trains for; fixes the default epoch budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    TypeClassification,
    Detection,
}

impl std::fmt::Display for TaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskMode::TypeClassification => "type-classification",
            TaskMode::Detection => "detection",
        })
    }
}

/// Loop hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub mode: TaskMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Advisory only; the pipeline runs one thread for determinism.
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    1
}

impl TrainingConfig {
    /// Task defaults: 50 epochs for type classification, 100 for
    /// detection; batch 32, learning rate 1e-3.
    pub fn for_mode(mode: TaskMode) -> TrainingConfig {
        TrainingConfig {
            mode,
            epochs: match mode {
                TaskMode::TypeClassification => 50,
                TaskMode::Detection => 100,
            },
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer state over the flattened parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> AdamState {
        AdamState {
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update: first/second-moment EMAs with bias correction.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let b1t = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let b2t = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// Rescale gradients in place when their global norm exceeds
/// `max_norm`; returns the pre-clip norm.
pub fn clip_gradients(grads: &mut ModelParameters, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// One sample ready for the model: embedded features, normalized
/// adjacency, visit order, and the class index.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub id: String,
    pub label: String,
    pub target: usize,
    pub input: SampleInput,
}

/// A fully prepared split set sharing one class list.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    /// Class order (descending full-corpus count); targets index this.
    pub classes: Vec<String>,
    pub table: ClassGroupTable,
    pub train: Vec<PreparedSample>,
    pub valid: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
}

impl PreparedDataset {
    /// Per-class counts over the train split, aligned with `classes`.
    pub fn train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for s in &self.train {
            counts[s.target] += 1;
        }
        counts
    }
}

fn prepare_sample(
    sample: &FunctionSample,
    classes: &[String],
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    scfg: &SequenceBranchConfig,
    base_dir: &Path,
) -> Result<PreparedSample> {
    let target = classes
        .iter()
        .position(|c| c == &sample.label)
        .ok_or_else(|| {
            Error::Validation(format!(
                "sample {} has label {:?} outside the class table",
                sample.id, sample.label
            ))
        })?;
    let mut tokens = tokenize(&sample.code, scfg.token_limit);
    if tokens.is_empty() {
        // all-comment bodies still need one position for the branches
        tokens = TokenSequence::new(vec![UNK_TOKEN.to_string()], scfg.token_limit);
    }
    let graph = match resolve_graph(sample, base_dir)? {
        Some(g) => g,
        None => build_token_chain_graph(&tokens)?,
    };
    let input = SampleInput {
        node_features: embed_nodes(&graph, vocab, table),
        adjacency: normalize_adjacency(&graph)?,
        node_order: graph.ncs_order(),
        token_features: embed_tokens(&tokens, vocab, table),
    };
    Ok(PreparedSample {
        id: sample.id.clone(),
        label: sample.label.clone(),
        target,
        input,
    })
}

/// Embed and graph-ify every split member. The embedding dimension
/// must match the graph branch's working dimension — that mismatch is
/// a wiring mistake, caught here.
#[allow(clippy::too_many_arguments)]
pub fn prepare_dataset(
    samples: &[FunctionSample],
    split: &DatasetSplit,
    table: &ClassGroupTable,
    vocab: &Vocabulary,
    embeddings: &EmbeddingTable,
    gcfg: &GraphBranchConfig,
    scfg: &SequenceBranchConfig,
    base_dir: &Path,
) -> Result<PreparedDataset> {
    if embeddings.dim() != gcfg.dim {
        return Err(Error::Config(format!(
            "embedding dim {} does not match graph branch dim {}",
            embeddings.dim(),
            gcfg.dim
        )));
    }
    let classes: Vec<String> = table.entries().iter().map(|e| e.name.clone()).collect();
    let prepare_ids = |ids: &[String]| -> Result<Vec<PreparedSample>> {
        gather(samples, ids)?
            .into_iter()
            .map(|s| prepare_sample(s, &classes, vocab, embeddings, scfg, base_dir))
            .collect()
    };
    Ok(PreparedDataset {
        train: prepare_ids(&split.train)?,
        valid: prepare_ids(&split.valid)?,
        test: prepare_ids(&split.test)?,
        classes,
        table: table.clone(),
    })
}

fn argmax(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Argmax-decode labels for a prepared sample list.
pub fn predict(
    params: &ModelParameters,
    gcfg: &GraphBranchConfig,
    samples: &[PreparedSample],
    classes: &[String],
) -> Result<Vec<String>> {
    samples
        .iter()
        .map(|s| {
            let (rep, _) = params.forward(&s.input, gcfg)?;
            Ok(classes[argmax(&rep.fused)].clone())
        })
        .collect()
}

fn split_accuracy(
    params: &ModelParameters,
    gcfg: &GraphBranchConfig,
    samples: &[PreparedSample],
) -> Result<f64> {
    let mut correct = 0usize;
    for s in samples {
        let (rep, _) = params.forward(&s.input, gcfg)?;
        if argmax(&rep.fused) == s.target {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// One completed epoch in the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Adaptive schedule weight; absent for fixed objectives.
    pub t: Option<f64>,
    pub train_loss: f64,
    pub valid_accuracy: f64,
}

/// Full per-run record: config echo, one entry per epoch, final test
/// metrics when the run completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub training: TrainingConfig,
    pub loss: LossConfig,
    pub classes: Vec<String>,
    pub config_hash: String,
    /// Which split produced `valid_accuracy` ("valid", or "train" when
    /// the validation split is empty).
    pub validated_on: String,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub final_test: Option<MetricsReport>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header {
        seed: u64,
        training: TrainingConfig,
        loss: LossConfig,
        classes: Vec<String>,
        config_hash: String,
        validated_on: String,
    },
    Epoch {
        epoch: usize,
        t: Option<f64>,
        train_loss: f64,
        valid_accuracy: f64,
    },
    Final {
        best_epoch: usize,
        best_accuracy: f64,
        test: Option<MetricsReport>,
    },
}

impl RunLog {
    /// JSON-lines: one header, one line per epoch, one final line.
    pub fn to_jsonl(&self) -> String {
        let mut lines = Vec::with_capacity(self.records.len() + 2);
        lines.push(
            serde_json::to_string(&LogLine::Header {
                seed: self.seed,
                training: self.training.clone(),
                loss: self.loss.clone(),
                classes: self.classes.clone(),
                config_hash: self.config_hash.clone(),
                validated_on: self.validated_on.clone(),
            })
            .expect("header serializes"),
        );
        for r in &self.records {
            lines.push(
                serde_json::to_string(&LogLine::Epoch {
                    epoch: r.epoch,
                    t: r.t,
                    train_loss: r.train_loss,
                    valid_accuracy: r.valid_accuracy,
                })
                .expect("epoch serializes"),
            );
        }
        lines.push(
            serde_json::to_string(&LogLine::Final {
                best_epoch: self.best_epoch,
                best_accuracy: self.best_accuracy,
                test: self.final_test.clone(),
            })
            .expect("final serializes"),
        );
        lines.join("\n") + "\n"
    }

    pub fn from_jsonl(text: &str) -> Result<RunLog> {
        let mut header: Option<RunLog> = None;
        let mut records = Vec::new();
        let mut fin: Option<(usize, f64, Option<MetricsReport>)> = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: LogLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("bad run-log line: {e}"),
            })?;
            match line {
                LogLine::Header {
                    seed,
                    training,
                    loss,
                    classes,
                    config_hash,
                    validated_on,
                } => {
                    header = Some(RunLog {
                        seed,
                        training,
                        loss,
                        classes,
                        config_hash,
                        validated_on,
                        records: Vec::new(),
                        best_epoch: 0,
                        best_accuracy: -1.0,
                        final_test: None,
                    })
                }
                LogLine::Epoch {
                    epoch,
                    t,
                    train_loss,
                    valid_accuracy,
                } => records.push(EpochRecord {
                    epoch,
                    t,
                    train_loss,
                    valid_accuracy,
                }),
                LogLine::Final {
                    best_epoch,
                    best_accuracy,
                    test,
                } => fin = Some((best_epoch, best_accuracy, test)),
            }
        }
        let mut log = header.ok_or_else(|| Error::Parse {
            line: 1,
            message: "run log has no header line".into(),
        })?;
        log.records = records;
        if let Some((best_epoch, best_accuracy, test)) = fin {
            log.best_epoch = best_epoch;
            log.best_accuracy = best_accuracy;
            log.final_test = test;
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunLog> {
        RunLog::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// FNV-1a hex digest of the canonical config JSON; embedded in every
/// artifact for provenance.
pub fn config_fingerprint(
    gcfg: &GraphBranchConfig,
    scfg: &SequenceBranchConfig,
    loss: &LossConfig,
    training: &TrainingConfig,
    classes: &[String],
) -> String {
    let json = serde_json::to_string(&(gcfg, scfg, loss, training, classes))
        .expect("configs serialize");
    format!("{:016x}", seed::derive(0, &json))
}

/// Everything needed to resume: parameters, optimizer moments, the
/// best-so-far snapshot, and the configs that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub gcfg: GraphBranchConfig,
    pub scfg: SequenceBranchConfig,
    pub loss: LossConfig,
    pub training: TrainingConfig,
    pub classes: Vec<String>,
    pub config_hash: String,
    /// Completed epochs; resume continues here.
    pub epoch: usize,
    pub best_epoch: usize,
    /// −1 until the first validation pass.
    pub best_accuracy: f64,
    pub params: ModelParameters,
    pub best: ModelParameters,
    pub adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    gcfg: GraphBranchConfig,
    scfg: SequenceBranchConfig,
    loss: LossConfig,
    training: TrainingConfig,
    classes: Vec<String>,
    config_hash: String,
    epoch: usize,
    best_epoch: usize,
    best_accuracy: f64,
    adam_t: u64,
    n_params: usize,
}

fn write_f64s(w: &mut impl std::io::Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl std::io::Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

/// Binary layout: magic, u64 header length, JSON header, then four
/// little-endian f64 blobs (params, best params, Adam m, Adam v).
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        gcfg: ckpt.gcfg.clone(),
        scfg: ckpt.scfg.clone(),
        loss: ckpt.loss.clone(),
        training: ckpt.training.clone(),
        classes: ckpt.classes.clone(),
        config_hash: ckpt.config_hash.clone(),
        epoch: ckpt.epoch,
        best_epoch: ckpt.best_epoch,
        best_accuracy: ckpt.best_accuracy,
        adam_t: ckpt.adam.t,
        n_params: ckpt.params.param_count(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Config(format!("checkpoint header failed to serialize: {e}")))?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;
    write_f64s(&mut w, &ckpt.params.flatten())?;
    write_f64s(&mut w, &ckpt.best.flatten())?;
    write_f64s(&mut w, &ckpt.adam.m)?;
    write_f64s(&mut w, &ckpt.adam.v)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: format!("not a checkpoint file: magic {magic:?}"),
        });
    }
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)?;
    let header_len = u64::from_le_bytes(len_buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("bad checkpoint header: {e}"),
    })?;

    let mut params =
        ModelParameters::init(&header.gcfg, &header.scfg, header.classes.len(), 0)?;
    if params.param_count() != header.n_params {
        return Err(Error::Shape(format!(
            "checkpoint declares {} parameters, configs produce {}",
            header.n_params,
            params.param_count()
        )));
    }
    let flat = read_f64s(&mut r, header.n_params)?;
    params.load_flat(&flat)?;
    let mut best = params.clone();
    best.load_flat(&read_f64s(&mut r, header.n_params)?)?;
    let adam = AdamState {
        t: header.adam_t,
        m: read_f64s(&mut r, header.n_params)?,
        v: read_f64s(&mut r, header.n_params)?,
    };
    Ok(Checkpoint {
        gcfg: header.gcfg,
        scfg: header.scfg,
        loss: header.loss,
        training: header.training,
        classes: header.classes,
        config_hash: header.config_hash,
        epoch: header.epoch,
        best_epoch: header.best_epoch,
        best_accuracy: header.best_accuracy,
        params,
        best,
        adam,
    })
}

struct TrainState {
    params: ModelParameters,
    adam: AdamState,
    best: ModelParameters,
    best_accuracy: f64,
    best_epoch: usize,
}

/// Runs epochs `[from, to)`, mutating `state` and appending records.
#[allow(clippy::too_many_arguments)]
fn run_epochs(
    state: &mut TrainState,
    dataset: &PreparedDataset,
    gcfg: &GraphBranchConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainingConfig,
    from: usize,
    to: usize,
    records: &mut Vec<EpochRecord>,
) -> Result<()> {
    let freq_table = match loss_cfg.kind {
        LossKind::LabelAwareSmooth | LossKind::ClassBalanced | LossKind::ClassBalancedFocal => {
            Some(ClassFrequencyTable::new(dataset.train_counts())?)
        }
        _ => None,
    };
    let validate_on_train = dataset.valid.is_empty();
    for epoch in from..to {
        let schedule = if loss_cfg.kind == LossKind::Adaptive {
            Some(EpochSchedule::new(epoch, cfg.epochs)?)
        } else {
            None
        };
        let objective = Objective::resolve(loss_cfg, freq_table.as_ref(), schedule.as_ref())?;

        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(
            cfg.seed,
            &format!("epoch-shuffle/{epoch}"),
        ));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = state.params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let s = &dataset.train[i];
                let (rep, cache) = state.params.forward(&s.input, gcfg)?;
                // ReLU maps NaN to 0, so corrupted features can vanish
                // from the logits; the pooled vectors still show them.
                let finite = rep.fused.iter().all(|v| v.is_finite())
                    && rep.graph_pooled.iter().all(|v| v.is_finite())
                    && rep.seq_pooled.iter().all(|v| v.is_finite());
                if !finite {
                    return Err(Error::Numeric(format!(
                        "non-finite activations at epoch {epoch}, batch {batch_idx}, sample {}",
                        s.id
                    )));
                }
                let (loss, dz) = objective.loss_and_logit_gradient(&rep.fused, s.target)?;
                batch_loss += loss;
                let g = state.params.backward(&s.input, gcfg, &cache, &dz)?;
                grads.accumulate(&g);
            }
            let k = chunk.len() as f64;
            batch_loss /= k;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            grads.scale(1.0 / k);
            clip_gradients(&mut grads, GRADIENT_CLIP_NORM);
            let mut flat = state.params.flatten();
            state.adam.step(&mut flat, &grads.flatten(), cfg.learning_rate)?;
            state.params.load_flat(&flat)?;
            loss_sum += batch_loss * k;
        }
        let train_loss = loss_sum / dataset.train.len() as f64;

        let valid_accuracy = if validate_on_train {
            split_accuracy(&state.params, gcfg, &dataset.train)?
        } else {
            split_accuracy(&state.params, gcfg, &dataset.valid)?
        };
        if valid_accuracy > state.best_accuracy {
            state.best_accuracy = valid_accuracy;
            state.best_epoch = epoch;
            state.best = state.params.clone();
        }
        records.push(EpochRecord {
            epoch,
            t: schedule.map(|s| s.t),
            train_loss,
            valid_accuracy,
        });
    }
    Ok(())
}

fn final_test_report(
    state: &TrainState,
    dataset: &PreparedDataset,
    gcfg: &GraphBranchConfig,
) -> Result<Option<MetricsReport>> {
    if dataset.test.is_empty() {
        return Ok(None);
    }
    let predictions = predict(&state.best, gcfg, &dataset.test, &dataset.classes)?;
    let labels: Vec<String> = dataset.test.iter().map(|s| s.label.clone()).collect();
    Ok(Some(compute_metrics(
        &predictions,
        &labels,
        &dataset.table,
        EvalMode::Multiclass,
    )?))
}

fn build_outcome(
    state: TrainState,
    dataset: &PreparedDataset,
    gcfg: &GraphBranchConfig,
    scfg: &SequenceBranchConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainingConfig,
    epoch: usize,
    records: Vec<EpochRecord>,
) -> Result<(Checkpoint, RunLog)> {
    let config_hash = config_fingerprint(gcfg, scfg, loss_cfg, cfg, &dataset.classes);
    let completed = epoch == cfg.epochs;
    let final_test = if completed {
        final_test_report(&state, dataset, gcfg)?
    } else {
        None
    };
    let log = RunLog {
        seed: cfg.seed,
        training: cfg.clone(),
        loss: loss_cfg.clone(),
        classes: dataset.classes.clone(),
        config_hash: config_hash.clone(),
        validated_on: if dataset.valid.is_empty() { "train" } else { "valid" }.to_string(),
        records,
        best_epoch: state.best_epoch,
        best_accuracy: state.best_accuracy,
        final_test,
    };
    let ckpt = Checkpoint {
        gcfg: gcfg.clone(),
        scfg: scfg.clone(),
        loss: loss_cfg.clone(),
        training: cfg.clone(),
        classes: dataset.classes.clone(),
        config_hash,
        epoch,
        best_epoch: state.best_epoch,
        best_accuracy: state.best_accuracy,
        params: state.params,
        best: state.best,
        adam: state.adam,
    };
    Ok((ckpt, log))
}

/// Train from scratch, stopping after `stop_epoch` epochs (the
/// schedule still targets `cfg.epochs`, so a partial run can be
/// resumed bit-compatibly).
pub fn train_until(
    dataset: &PreparedDataset,
    gcfg: &GraphBranchConfig,
    scfg: &SequenceBranchConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainingConfig,
    stop_epoch: usize,
) -> Result<(Checkpoint, RunLog)> {
    gcfg.validate()?;
    scfg.validate()?;
    loss_cfg.validate()?;
    cfg.validate()?;
    if stop_epoch > cfg.epochs {
        return Err(Error::Config(format!(
            "stop epoch {stop_epoch} exceeds configured epochs {}",
            cfg.epochs
        )));
    }
    if dataset.train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let params = ModelParameters::init(
        gcfg,
        scfg,
        dataset.classes.len(),
        seed::derive(cfg.seed, "model-init"),
    )?;
    let adam = AdamState::new(params.param_count());
    let mut state = TrainState {
        best: params.clone(),
        params,
        adam,
        best_accuracy: -1.0,
        best_epoch: 0,
    };
    let mut records = Vec::new();
    run_epochs(
        &mut state, dataset, gcfg, loss_cfg, cfg, 0, stop_epoch, &mut records,
    )?;
    build_outcome(state, dataset, gcfg, scfg, loss_cfg, cfg, stop_epoch, records)
}

/// Full run: all configured epochs, final model selected by best
/// validation accuracy, test metrics computed with that model.
pub fn train(
    dataset: &PreparedDataset,
    gcfg: &GraphBranchConfig,
    scfg: &SequenceBranchConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainingConfig,
) -> Result<(Checkpoint, RunLog)> {
    train_until(dataset, gcfg, scfg, loss_cfg, cfg, cfg.epochs)
}

/// Continue a checkpointed run to its configured epoch budget. The
/// resumed trajectory is bit-identical to the uninterrupted one: no
/// RNG state crosses epochs (each epoch reseeds from the run seed) and
/// the optimizer moments travel in the checkpoint.
pub fn resume(ckpt: Checkpoint, dataset: &PreparedDataset) -> Result<(Checkpoint, RunLog)> {
    if ckpt.classes != dataset.classes {
        return Err(Error::Config(
            "checkpoint class list does not match the dataset".into(),
        ));
    }
    let (gcfg, scfg, loss_cfg, cfg) = (
        ckpt.gcfg.clone(),
        ckpt.scfg.clone(),
        ckpt.loss.clone(),
        ckpt.training.clone(),
    );
    let mut state = TrainState {
        params: ckpt.params,
        adam: ckpt.adam,
        best: ckpt.best,
        best_accuracy: ckpt.best_accuracy,
        best_epoch: ckpt.best_epoch,
    };
    let mut records = Vec::new();
    run_epochs(
        &mut state,
        dataset,
        &gcfg,
        &loss_cfg,
        &cfg,
        ckpt.epoch,
        cfg.epochs,
        &mut records,
    )?;
    build_outcome(
        state, dataset, &gcfg, &scfg, &loss_cfg, &cfg, cfg.epochs, records,
    )
}

/// Outcome of comparing analytic gradients against central finite
/// differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub n_params: usize,
    pub step: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// (index, analytic, numeric, rel error) for entries over tolerance.
    pub failures: Vec<(usize, f64, f64, f64)>,
    pub passed: bool,
}

/// Compare a caller-supplied analytic gradient against central finite
/// differences of `loss_fn` around `theta`.
pub fn gradient_check_fn(
    theta: &[f64],
    analytic: &[f64],
    mut loss_fn: impl FnMut(&[f64]) -> Result<f64>,
    step: f64,
    tolerance: f64,
) -> Result<GradientCheckReport> {
    if theta.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} analytic gradients",
            theta.len(),
            analytic.len()
        )));
    }
    if !(step > 0.0) {
        return Err(Error::Config(format!("step must be > 0, got {step}")));
    }
    let mut probe = theta.to_vec();
    let mut max_rel_error = 0.0f64;
    let mut worst_index = 0usize;
    let mut failures = Vec::new();
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let up = loss_fn(&probe)?;
        probe[i] = theta[i] - step;
        let down = loss_fn(&probe)?;
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
        if rel > tolerance {
            failures.push((i, analytic[i], numeric, rel));
        }
    }
    Ok(GradientCheckReport {
        n_params: theta.len(),
        step,
        tolerance,
        max_rel_error,
        worst_index,
        passed: failures.is_empty(),
        failures,
    })
}

/// Gradient-check the whole model on one sample under `objective`.
pub fn gradient_check_model(
    params: &ModelParameters,
    gcfg: &GraphBranchConfig,
    objective: &Objective,
    input: &SampleInput,
    target: usize,
    step: f64,
    tolerance: f64,
) -> Result<GradientCheckReport> {
    let (rep, cache) = params.forward(input, gcfg)?;
    let (_, dz) = objective.loss_and_logit_gradient(&rep.fused, target)?;
    let grads = params.backward(input, gcfg, &cache, &dz)?;
    let theta = params.flatten();
    let analytic = grads.flatten();
    let mut probe = params.clone();
    gradient_check_fn(
        &theta,
        &analytic,
        |t| {
            probe.load_flat(t)?;
            let (rep, _) = probe.forward(input, gcfg)?;
            objective.loss(&softmax(&rep.fused), target)
        },
        step,
        tolerance,
    )
}
