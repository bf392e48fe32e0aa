//! One function per subcommand. Each takes resolved inputs, writes its
//! artifacts under `--out`, and prints one line per file written.
//! Every artifact embeds provenance: tool version, config hash, seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vultype_core::codegraph::{normalize_adjacency, parse_graph, tokenize, TokenSequence};
use vultype_core::corpus::{
    label_counts, synth_generate, write_corpus, ClassEntry, Group, GroupThresholds,
};
use vultype_core::embeddings::{embed_nodes, hash_embeddings, Vocabulary};
use vultype_core::evaluation::{
    compute_metrics, export_representations, oversmoothing_diagnostic, representations_to_csv,
    EvalMode, MetricsReport,
};
use vultype_core::training::{
    config_fingerprint, load_checkpoint, predict, save_checkpoint, train, Checkpoint, TaskMode,
};
use vultype_core::{seed, Error, Result};

use crate::charts::{self, Series};
use crate::config::{
    load_run_config, load_synth_config, sha256_hex, EvalKind, LoadedConfig, Provenance,
};
use crate::pipeline::{assemble, Assembled};

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn write_artifact(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("artifact failed to serialize: {e}")))?;
    text.push('\n');
    write_artifact(path, &text)
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Resolved common flags: config, seed (flag overrides `[data] seed`),
/// output directory.
pub struct Ctx {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(config: &Path, seed_flag: Option<u64>, out: &Path) -> Result<Ctx> {
        let loaded = load_run_config(config)?;
        let seed = seed_flag.unwrap_or(loaded.config.data.seed);
        Ok(Ctx {
            loaded,
            seed,
            out: out.to_path_buf(),
        })
    }

    fn provenance(&self) -> Provenance {
        Provenance::new(&self.loaded.sha256, self.seed)
    }
}

#[derive(Serialize)]
struct SplitManifest<'a> {
    provenance: &'a Provenance,
    split: &'a str,
    count: usize,
    ids: &'a [String],
}

#[derive(Serialize)]
struct GroupsFile<'a> {
    provenance: &'a Provenance,
    thresholds: GroupThresholds,
    samples: usize,
    classes: &'a [ClassEntry],
}

/// Split the corpus and write the three id manifests plus the class
/// group table.
pub fn cmd_prepare(ctx: &Ctx) -> Result<()> {
    ensure_out_dir(&ctx.out)?;
    let a = assemble(&ctx.loaded.config, ctx.seed)?;
    let prov = ctx.provenance();
    for (name, ids) in [
        ("train", &a.split.train),
        ("valid", &a.split.valid),
        ("test", &a.split.test),
    ] {
        write_json(
            &ctx.out.join(format!("{name}.ids.json")),
            &SplitManifest {
                provenance: &prov,
                split: name,
                count: ids.len(),
                ids,
            },
        )?;
    }
    write_json(
        &ctx.out.join("groups.json"),
        &GroupsFile {
            provenance: &prov,
            thresholds: *a.table.thresholds(),
            samples: a.samples.len(),
            classes: a.table.entries(),
        },
    )
}

#[derive(Serialize)]
struct SynthMeta {
    provenance: Provenance,
    classes: usize,
    samples: usize,
    label_counts: BTreeMap<String, usize>,
}

/// Generate a synthetic corpus from a recipe file. The recipe's seed is
/// mandatory; `--seed` replaces it.
pub fn cmd_synth(recipe: &Path, seed_flag: Option<u64>, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let loaded = load_synth_config(recipe)?;
    let mut spec = loaded.spec;
    if let Some(s) = seed_flag {
        spec.seed = s;
    }
    let samples = synth_generate(&spec)?;
    let corpus = out.join("corpus.jsonl");
    write_corpus(&samples, &corpus)?;
    println!("wrote {}", corpus.display());
    let counts = label_counts(&samples);
    write_json(
        &out.join("synth.meta.json"),
        &SynthMeta {
            provenance: Provenance::new(&loaded.sha256, spec.seed),
            classes: counts.len(),
            samples: samples.len(),
            label_counts: counts,
        },
    )
}

#[derive(Serialize)]
struct TrainMeta {
    provenance: Provenance,
    config_fingerprint: String,
    mode: TaskMode,
    epochs: usize,
    vocab_size: usize,
    embedding_dim: usize,
    best_epoch: usize,
    best_accuracy: f64,
    final_test_accuracy: Option<f64>,
}

/// Train from scratch, writing the checkpoint, the per-epoch run log,
/// and a summary.
pub fn cmd_train(ctx: &Ctx, mode: Option<TaskMode>) -> Result<()> {
    ensure_out_dir(&ctx.out)?;
    let cfg = &ctx.loaded.config;
    let a = assemble(cfg, ctx.seed)?;
    let gcfg = cfg.model.graph_config();
    let scfg = cfg.model.sequence_config();
    let tcfg = cfg.training(mode, ctx.seed)?;
    let (ckpt, log) = train(&a.dataset, &gcfg, &scfg, &cfg.loss, &tcfg)?;

    let ckpt_path = ctx.out.join("model.ckpt");
    save_checkpoint(&ckpt, &ckpt_path)?;
    println!("wrote {}", ckpt_path.display());
    let log_path = ctx.out.join("run.jsonl");
    log.write(&log_path)?;
    println!("wrote {}", log_path.display());
    write_json(
        &ctx.out.join("train.meta.json"),
        &TrainMeta {
            provenance: ctx.provenance(),
            config_fingerprint: ckpt.config_hash.clone(),
            mode: tcfg.mode,
            epochs: tcfg.epochs,
            vocab_size: a.vocab.len(),
            embedding_dim: a.embeddings.dim(),
            best_epoch: ckpt.best_epoch,
            best_accuracy: ckpt.best_accuracy,
            final_test_accuracy: log.final_test.as_ref().map(|m| m.accuracy),
        },
    )
}

/// Which split an eval scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

fn checkpoint_matches(ckpt: &Checkpoint, cfg: &crate::config::RunConfig, a: &Assembled) -> Result<()> {
    let gcfg = cfg.model.graph_config();
    let scfg = cfg.model.sequence_config();
    if ckpt.gcfg != gcfg || ckpt.scfg != scfg {
        return Err(Error::Config(
            "checkpoint model shape does not match [model] in the config".into(),
        ));
    }
    if ckpt.classes != a.dataset.classes {
        return Err(Error::Config(
            "checkpoint class list does not match the corpus; was it trained on different data?"
                .into(),
        ));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MetricsFile {
    provenance: Provenance,
    config_fingerprint: String,
    split: String,
    report: MetricsReport,
}

/// Score a checkpoint's best parameters on one split; writes metrics
/// JSON + CSV and, optionally, the per-sample representation dump.
pub fn cmd_eval(
    ctx: &Ctx,
    checkpoint: &Path,
    split: SplitName,
    export_reps: bool,
) -> Result<()> {
    ensure_out_dir(&ctx.out)?;
    let cfg = &ctx.loaded.config;
    let ckpt = load_checkpoint(checkpoint)?;
    let a = assemble(cfg, ctx.seed)?;
    checkpoint_matches(&ckpt, cfg, &a)?;

    let samples = match split {
        SplitName::Train => &a.dataset.train,
        SplitName::Valid => &a.dataset.valid,
        SplitName::Test => &a.dataset.test,
    };
    if samples.is_empty() {
        return Err(Error::Validation(format!(
            "{} split is empty under the configured ratios",
            split.as_str()
        )));
    }
    let gcfg = cfg.model.graph_config();
    let predictions = predict(&ckpt.best, &gcfg, samples, &a.dataset.classes)?;
    let labels: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
    let mode = match cfg.eval.mode {
        EvalKind::Multiclass => EvalMode::Multiclass,
        EvalKind::Binary => EvalMode::Binary {
            positive: cfg
                .eval
                .positive
                .clone()
                .ok_or_else(|| Error::Config("[eval] positive is required for binary mode".into()))?,
        },
    };
    let report = compute_metrics(&predictions, &labels, &a.table, mode)?;

    let prov = ctx.provenance();
    write_json(
        &ctx.out.join("metrics.json"),
        &MetricsFile {
            provenance: prov.clone(),
            config_fingerprint: ckpt.config_hash.clone(),
            split: split.as_str().to_string(),
            report: report.clone(),
        },
    )?;
    let csv = format!("{}\n{}", prov.comment_line(), report.to_csv());
    write_artifact(&ctx.out.join("metrics.csv"), &csv)?;

    if export_reps {
        let inputs: Vec<(String, String, vultype_core::model::SampleInput)> = samples
            .iter()
            .map(|s| (s.id.clone(), s.label.clone(), s.input.clone()))
            .collect();
        let rows = export_representations(&ckpt.best, &gcfg, &inputs, &a.table)?;
        let csv = format!("{}\n{}", prov.comment_line(), representations_to_csv(&rows));
        write_artifact(&ctx.out.join("representations.csv"), &csv)?;
    }
    Ok(())
}

fn group_accuracy(report: &MetricsReport, group: Group) -> f64 {
    report
        .groups
        .iter()
        .find(|g| g.group == group)
        .map(|g| g.accuracy)
        .unwrap_or(0.0)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "metrics".to_string())
}

/// Merge eval outputs into one comparison table plus charts: grouped
/// accuracy bars, a per-class accuracy profile for each input (classes
/// in descending-frequency order, so the long-tail shape is visible),
/// and, when a representation dump is supplied, a 2-D projection
/// scatter colored by frequency group.
pub fn cmd_report(
    metrics_paths: &[PathBuf],
    representations: Option<&Path>,
    out: &Path,
) -> Result<()> {
    if metrics_paths.is_empty() {
        return Err(Error::Config("report needs at least one --metrics file".into()));
    }
    ensure_out_dir(out)?;

    let mut raw_concat = Vec::new();
    let mut parsed: Vec<(String, MetricsFile)> = Vec::new();
    for path in metrics_paths {
        let raw = read_file(path)?;
        raw_concat.extend_from_slice(raw.as_bytes());
        let file: MetricsFile = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })?;
        parsed.push((file_stem(path), file));
    }
    // the report is derived purely from its inputs, so its provenance
    // hash covers the input bytes rather than a run config
    let prov = Provenance::new(&sha256_hex(&raw_concat), 0);

    let mut table = String::new();
    table.push_str(&prov.comment_line());
    table.push('\n');
    table.push_str("file,split,n_test,accuracy,precision,recall,f1,head,medium,tail\n");
    for (stem, file) in &parsed {
        let r = &file.report;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            stem,
            file.split,
            r.n_test,
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            group_accuracy(r, Group::Head),
            group_accuracy(r, Group::Medium),
            group_accuracy(r, Group::Tail),
        ));
    }
    write_artifact(&out.join("comparison.csv"), &table)?;

    let categories: Vec<String> = ["head", "medium", "tail"].map(String::from).to_vec();
    let series: Vec<(String, Vec<f64>)> = parsed
        .iter()
        .map(|(stem, file)| {
            (
                stem.clone(),
                vec![
                    group_accuracy(&file.report, Group::Head),
                    group_accuracy(&file.report, Group::Medium),
                    group_accuracy(&file.report, Group::Tail),
                ],
            )
        })
        .collect();
    let svg = charts::bar_chart(
        "Accuracy by frequency group",
        "accuracy",
        &categories,
        &series,
        &prov.comment_line(),
    );
    write_artifact(&out.join("groups.svg"), &svg)?;

    for (stem, file) in &parsed {
        let classes: Vec<String> = file
            .report
            .per_class
            .iter()
            .map(|c| c.label.clone())
            .collect();
        let values: Vec<f64> = file.report.per_class.iter().map(|c| c.accuracy).collect();
        let svg = charts::bar_chart(
            &format!("Per-class accuracy — {stem}"),
            "accuracy",
            &classes,
            &[(stem.clone(), values)],
            &prov.comment_line(),
        );
        write_artifact(&out.join(format!("per_class_{stem}.svg")), &svg)?;
    }

    if let Some(reps) = representations {
        let points = representation_scatter(reps)?;
        let svg = charts::scatter_chart(
            "Fused representations (2-D projection)",
            &points,
            &prov.comment_line(),
        );
        write_artifact(&out.join("representations.svg"), &svg)?;
    }
    Ok(())
}

/// Parse a representations.csv dump and project the fused vectors to
/// 2-D; points are labeled by frequency group.
fn representation_scatter(path: &Path) -> Result<Vec<(f64, f64, String)>> {
    let raw = read_file(path)?;
    let mut lines = raw
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("{}: empty representations file", path.display()),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    let fused: Vec<usize> = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("fused_"))
        .map(|(i, _)| i)
        .collect();
    let group_col = columns.iter().position(|c| *c == "group").ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("{}: no group column", path.display()),
    })?;
    if fused.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: format!("{}: no fused_* columns", path.display()),
        });
    }

    let mut vectors = Vec::new();
    let mut groups = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("{}: expected {} cells, got {}", path.display(), columns.len(), cells.len()),
            });
        }
        let mut v = Vec::with_capacity(fused.len());
        for &c in &fused {
            v.push(cells[c].parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{}: bad number {:?}: {e}", path.display(), cells[c]),
            })?);
        }
        vectors.push(v);
        groups.push(cells[group_col].to_string());
    }
    let projected = charts::pca_2d(&vectors);
    Ok(projected
        .into_iter()
        .zip(groups)
        .map(|((x, y), g)| (x, y, g))
        .collect())
}

/// Compare stacked vs. differentiated propagation on one graph file and
/// write the similarity table plus a two-series line chart.
pub fn cmd_diagnose(ctx: &Ctx, graph_path: &Path, depths: &[usize]) -> Result<()> {
    ensure_out_dir(&ctx.out)?;
    let cfg = &ctx.loaded.config;
    let raw = read_file(graph_path)?;
    let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", graph_path.display()),
    })?;
    let graph = parse_graph(&value)?;
    let adj = normalize_adjacency(&graph)?;

    // features come from the graph itself: hashed embeddings over its
    // own node-text vocabulary
    let streams: Vec<TokenSequence> = graph
        .nodes()
        .iter()
        .map(|n| tokenize(&n.text, cfg.model.token_limit))
        .collect();
    let vocab = Vocabulary::build(&streams, 1);
    let table = hash_embeddings(&vocab, cfg.model.dim, seed::derive(ctx.seed, "embeddings"))?;
    let features = embed_nodes(&graph, &vocab, &table);

    let diag = oversmoothing_diagnostic(&adj, &features, depths, cfg.model.alpha)?;
    let prov = ctx.provenance();
    let mut csv = String::new();
    csv.push_str(&prov.comment_line());
    csv.push('\n');
    csv.push_str(&format!("# nodes={} components={}\n", graph.nodes().len(), diag.components));
    csv.push_str("depth,stacked_similarity,differentiated_similarity\n");
    for row in &diag.rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            row.depth, row.vanilla_similarity, row.differentiated_similarity
        ));
    }
    write_artifact(&ctx.out.join("oversmoothing.csv"), &csv)?;

    let series = vec![
        Series {
            name: "stacked".into(),
            points: diag
                .rows
                .iter()
                .map(|r| (r.depth as f64, r.vanilla_similarity))
                .collect(),
        },
        Series {
            name: "differentiated".into(),
            points: diag
                .rows
                .iter()
                .map(|r| (r.depth as f64, r.differentiated_similarity))
                .collect(),
        },
    ];
    let svg = charts::line_chart(
        "Mean pairwise cosine vs. propagation depth",
        "depth",
        "mean pairwise cosine",
        &series,
        &prov.comment_line(),
    );
    write_artifact(&ctx.out.join("oversmoothing.svg"), &svg)
}

/// Swept hyper-parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Layers,
    Hidden,
}

impl SweepAxis {
    fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Layers => "layers",
            SweepAxis::Hidden => "hidden",
        }
    }
}

/// Train once per grid value of the chosen axis and tabulate test
/// accuracy against it.
pub fn cmd_sweep(ctx: &Ctx, axis: SweepAxis, mode: Option<TaskMode>) -> Result<()> {
    ensure_out_dir(&ctx.out)?;
    let cfg = &ctx.loaded.config;
    let values = match axis {
        SweepAxis::Layers => cfg.sweep.layers.clone(),
        SweepAxis::Hidden => cfg.sweep.hidden.clone(),
    };
    if values.is_empty() {
        return Err(Error::Config(format!("[sweep] {} grid is empty", axis.as_str())));
    }
    // neither axis touches the embedding dimension or tokenization, so
    // the prepared dataset is shared across the grid
    let a = assemble(cfg, ctx.seed)?;
    let tcfg = cfg.training(mode, ctx.seed)?;

    let mut rows: Vec<(usize, f64, usize)> = Vec::new();
    for &value in &values {
        let mut gcfg = cfg.model.graph_config();
        let mut scfg = cfg.model.sequence_config();
        match axis {
            SweepAxis::Layers => gcfg.layers = value,
            SweepAxis::Hidden => scfg.hidden = value,
        }
        let (ckpt, log) = train(&a.dataset, &gcfg, &scfg, &cfg.loss, &tcfg)?;
        let accuracy = log
            .final_test
            .as_ref()
            .map(|m| m.accuracy)
            .unwrap_or(log.best_accuracy);
        println!(
            "{}={value}: accuracy {accuracy:.4} (best epoch {})",
            axis.as_str(),
            ckpt.best_epoch
        );
        rows.push((value, accuracy, ckpt.best_epoch));
    }

    let prov = ctx.provenance();
    let fingerprint = config_fingerprint(
        &cfg.model.graph_config(),
        &cfg.model.sequence_config(),
        &cfg.loss,
        &tcfg,
        &a.dataset.classes,
    );
    let mut csv = String::new();
    csv.push_str(&prov.comment_line());
    csv.push('\n');
    csv.push_str(&format!("# base_config_fingerprint={fingerprint}\n"));
    csv.push_str("axis,value,accuracy,best_epoch\n");
    for &(value, accuracy, best_epoch) in &rows {
        csv.push_str(&format!("{},{value},{accuracy},{best_epoch}\n", axis.as_str()));
    }
    write_artifact(&ctx.out.join("sweep.csv"), &csv)?;

    let series = [Series {
        name: format!("accuracy vs {}", axis.as_str()),
        points: rows.iter().map(|&(v, acc, _)| (v as f64, acc)).collect(),
    }];
    let svg = charts::line_chart(
        &format!("Test accuracy across {}", axis.as_str()),
        axis.as_str(),
        "accuracy",
        &series,
        &prov.comment_line(),
    );
    write_artifact(&ctx.out.join("sweep.svg"), &svg)
}
