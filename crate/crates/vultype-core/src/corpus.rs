//! Labeled function corpora: loading, rare-class merging, frequency
//! grouping, stratified splitting, and synthetic corpus generation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codegraph::{build_token_chain_graph, parse_graph, tokenize, CodeGraph, DEFAULT_TOKEN_LIMIT};
use crate::error::{Error, Result};
use crate::seed;

/// Label that absorbs classes rarer than the merge threshold.
pub const REMAIN_LABEL: &str = "Remain";

/// A graph attached to a sample: either inline or a path relative to
/// the corpus file.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphRef {
    Inline(CodeGraph),
    Path(String),
}

/// One labeled code function — the corpus atom.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    pub id: String,
    pub code: String,
    pub label: String,
    pub graph: Option<GraphRef>,
}

/// Frequency group of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Head,
    Medium,
    Tail,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Group::Head => "head",
            Group::Medium => "medium",
            Group::Tail => "tail",
        })
    }
}

/// Count thresholds for grouping and rare-class merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupThresholds {
    /// Classes with fewer samples than this merge into [`REMAIN_LABEL`].
    pub remain: usize,
    /// Classes with more samples than this are head.
    pub head: usize,
    /// Classes with at least this many samples (up to `head`) are medium.
    pub tail: usize,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        GroupThresholds {
            remain: 20,
            head: 200,
            tail: 50,
        }
    }
}

/// Group for a class with `count` samples: more than `head` → head,
/// between `tail` and `head` inclusive → medium, below `tail` → tail.
pub fn assign_group(count: usize, thresholds: &GroupThresholds) -> Group {
    if count > thresholds.head {
        Group::Head
    } else if count >= thresholds.tail {
        Group::Medium
    } else {
        Group::Tail
    }
}

/// One row of a [`ClassGroupTable`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub count: usize,
    pub group: Group,
}

/// Per-class sample counts and frequency groups, ordered by
/// descending count (ties broken by name).
///
/// The merged rare-class bucket [`REMAIN_LABEL`] always reports as
/// tail, regardless of its aggregate size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassGroupTable {
    entries: Vec<ClassEntry>,
    thresholds: GroupThresholds,
}

impl ClassGroupTable {
    pub fn from_counts(counts: &BTreeMap<String, usize>, thresholds: GroupThresholds) -> Self {
        let mut entries: Vec<ClassEntry> = counts
            .iter()
            .map(|(name, &count)| ClassEntry {
                name: name.clone(),
                count,
                group: if name == REMAIN_LABEL {
                    Group::Tail
                } else {
                    assign_group(count, &thresholds)
                },
            })
            .collect();
        entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
        ClassGroupTable {
            entries,
            thresholds,
        }
    }

    pub fn from_samples(samples: &[FunctionSample], thresholds: GroupThresholds) -> Self {
        Self::from_counts(&label_counts(samples), thresholds)
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn thresholds(&self) -> &GroupThresholds {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn group_of(&self, class: &str) -> Option<Group> {
        self.entries.iter().find(|e| e.name == class).map(|e| e.group)
    }

    pub fn count_of(&self, class: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.name == class).map(|e| e.count)
    }

    pub fn classes_in(&self, group: Group) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.name.as_str())
            .collect()
    }
}

/// Tally samples per label.
pub fn label_counts(samples: &[FunctionSample]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        *counts.entry(s.label.clone()).or_insert(0) += 1;
    }
    counts
}

#[derive(Serialize, Deserialize)]
struct RawSample {
    id: String,
    code: String,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<serde_json::Value>,
}

/// Load a JSON-lines corpus and tally counts over the full corpus
/// (before any splitting). Whitespace-only lines are skipped.
pub fn load_corpus(path: &Path) -> Result<(Vec<FunctionSample>, ClassGroupTable)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    let mut seen_ids = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.code.is_empty() {
            return Err(Error::Validation(format!(
                "sample {:?} (line {line_no}): empty code",
                raw.id
            )));
        }
        if raw.label.is_empty() {
            return Err(Error::Validation(format!(
                "sample {:?} (line {line_no}): empty label",
                raw.id
            )));
        }
        if let Some(prev) = seen_ids.insert(raw.id.clone(), line_no) {
            return Err(Error::Validation(format!(
                "duplicate id {:?} (lines {prev} and {line_no})",
                raw.id
            )));
        }
        let graph = match raw.graph {
            None => None,
            Some(serde_json::Value::String(p)) => Some(GraphRef::Path(p)),
            Some(obj @ serde_json::Value::Object(_)) => {
                Some(GraphRef::Inline(parse_graph(&obj).map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("invalid inline graph: {e}"),
                })?))
            }
            Some(other) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "graph must be an object or a path string, got {other}"
                    ),
                })
            }
        };
        samples.push(FunctionSample {
            id: raw.id,
            code: raw.code,
            label: raw.label,
            graph,
        });
    }
    let table = ClassGroupTable::from_samples(&samples, GroupThresholds::default());
    Ok((samples, table))
}

/// Write a corpus in the same JSON-lines schema `load_corpus` reads.
pub fn write_corpus(samples: &[FunctionSample], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        let raw = RawSample {
            id: s.id.clone(),
            code: s.code.clone(),
            label: s.label.clone(),
            graph: match &s.graph {
                None => None,
                Some(GraphRef::Path(p)) => Some(serde_json::Value::String(p.clone())),
                Some(GraphRef::Inline(g)) => Some(g.to_json()),
            },
        };
        serde_json::to_writer(&mut out, &raw).map_err(|e| Error::Validation(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Resolve a sample's graph: inline graphs are returned as-is, path
/// references are loaded relative to `base_dir`.
pub fn resolve_graph(sample: &FunctionSample, base_dir: &Path) -> Result<Option<CodeGraph>> {
    match &sample.graph {
        None => Ok(None),
        Some(GraphRef::Inline(g)) => Ok(Some(g.clone())),
        Some(GraphRef::Path(p)) => {
            let full = base_dir.join(p);
            let text = std::fs::read_to_string(&full)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Validation(format!(
                    "graph file {}: {e}",
                    full.display()
                )))?;
            Ok(Some(parse_graph(&value)?))
        }
    }
}

/// Rewrite labels of classes with fewer than `threshold` samples to
/// [`REMAIN_LABEL`]. Idempotent: re-merging changes nothing beyond
/// possibly re-tagging the Remain bucket itself.
pub fn merge_remain(mut samples: Vec<FunctionSample>, threshold: usize) -> Vec<FunctionSample> {
    let counts = label_counts(&samples);
    for s in &mut samples {
        if counts[&s.label] < threshold {
            s.label = REMAIN_LABEL.to_string();
        }
    }
    samples
}

/// A stratified corpus split into train/valid/test id sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl DatasetSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }
}

/// Collect the samples named by `ids`, in `ids` order.
pub fn gather<'a>(samples: &'a [FunctionSample], ids: &[String]) -> Result<Vec<&'a FunctionSample>> {
    let by_id: BTreeMap<&str, &FunctionSample> =
        samples.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Validation(format!("split references unknown id {id:?}")))
        })
        .collect()
}

/// Split per class: floor allocation by ratio with the remainder going
/// to train, then at least one test sample for any class with three or
/// more samples. Each class shuffles with its own RNG derived from
/// (seed, class name), so adding a class never reshuffles the others.
pub fn stratified_split(
    samples: &[FunctionSample],
    ratios: [f64; 3],
    split_seed: u64,
) -> Result<DatasetSplit> {
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::Config(format!("split ratios must be non-negative, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {ratios:?} (sum {sum})"
        )));
    }

    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in samples {
        by_class.entry(s.label.as_str()).or_default().push(s.id.as_str());
    }

    let mut split = DatasetSplit {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        ratios,
        seed: split_seed,
    };
    for (class, mut ids) in by_class {
        let mut rng =
            ChaCha20Rng::seed_from_u64(seed::derive(split_seed, &format!("split/{class}")));
        ids.shuffle(&mut rng);
        let n = ids.len();
        // the 1e-9 nudge keeps exact products (e.g. 20·0.1) from
        // flooring one short under floating-point rounding
        let floor_of = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let mut n_train = floor_of(ratios[0]);
        let n_valid = floor_of(ratios[1]);
        let mut n_test = floor_of(ratios[2]);
        n_train += n - (n_train + n_valid + n_test);
        if n_test == 0 && n >= 3 {
            n_train -= 1;
            n_test += 1;
        }
        split
            .train
            .extend(ids[..n_train].iter().map(|s| s.to_string()));
        split
            .valid
            .extend(ids[n_train..n_train + n_valid].iter().map(|s| s.to_string()));
        split
            .test
            .extend(ids[n_train + n_valid..].iter().map(|s| s.to_string()));
        debug_assert_eq!(n - n_train - n_valid, n_test);
    }
    Ok(split)
}

/// Recipe for a synthetic long-tailed corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub counts: Vec<usize>,
    pub vocab_size: usize,
    /// Fraction of body tokens drawn from the class's cue set.
    pub signal_strength: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Zipf-decayed counts: `round(base / k^exponent)` for class rank
    /// k = 1..=n, clamped below at `floor`.
    pub fn zipf_counts(n_classes: usize, base: f64, exponent: f64, floor: usize) -> Vec<usize> {
        (1..=n_classes)
            .map(|k| ((base / (k as f64).powf(exponent)).round() as usize).max(floor))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.counts.is_empty() {
            return Err(Error::Config("synthetic spec needs at least one class".into()));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("synthetic class counts must be strictly positive".into()));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::Config(format!(
                "signal_strength must lie in [0,1], got {}",
                self.signal_strength
            )));
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        Ok(())
    }
}

fn render_function(id: &str, tokens: &[String]) -> String {
    let name = format!("fn_{}", id.replace('-', "_"));
    let mut body = String::new();
    for chunk in tokens.chunks(3) {
        match chunk {
            [x] => body.push_str(&format!("  {x} = a;\n")),
            [x, y] => body.push_str(&format!("  {x} = {y};\n")),
            [x, y, z] => body.push_str(&format!("  {x} = {y} + {z};\n")),
            _ => unreachable!(),
        }
    }
    format!("int {name}(int a) {{\n{body}  return a;\n}}\n")
}

/// Generate a corpus whose per-class counts match `spec.counts`
/// exactly. Class k is labeled `CWE-(100+k)`; each body token is a
/// class cue with probability `signal_strength`, otherwise a shared
/// background token. Token-chain graphs are attached inline.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<Vec<FunctionSample>> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(spec.seed, "synth-corpus"));
    let background: Vec<String> = (0..spec.vocab_size).map(|i| format!("v{i}")).collect();
    let mut samples = Vec::new();
    for (k, &count) in spec.counts.iter().enumerate() {
        let label = format!("CWE-{}", 100 + k);
        let cues: Vec<String> = (0..3).map(|j| format!("cue{k}x{j}")).collect();
        for i in 0..count {
            let id = format!("{label}-{i:04}");
            let body_len = rng.gen_range(12..=40);
            let tokens: Vec<String> = (0..body_len)
                .map(|_| {
                    if rng.gen::<f64>() < spec.signal_strength {
                        cues[rng.gen_range(0..cues.len())].clone()
                    } else {
                        background[rng.gen_range(0..background.len())].clone()
                    }
                })
                .collect();
            let code = render_function(&id, &tokens);
            let seq = tokenize(&code, DEFAULT_TOKEN_LIMIT);
            let graph = build_token_chain_graph(&seq)?;
            samples.push(FunctionSample {
                id,
                code,
                label: label.clone(),
                graph: Some(GraphRef::Inline(graph)),
            });
        }
    }
    Ok(samples)
}
