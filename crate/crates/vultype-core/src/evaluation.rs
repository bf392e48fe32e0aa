//! Post-hoc evaluation: accuracy / precision / recall / F1, frequency
//! group accuracies, per-class reports, representation export, and the
//! over-smoothing diagnostic.
//!
//! Multiclass precision/recall/F1 are macro-averaged; the binary mode
//! scores the designated positive class. Zero-denominator conventions:
//! the affected precision/recall is 0 and the event is recorded in the
//! report's notes rather than silently dropped.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::codegraph::NormalizedAdjacency;
use crate::corpus::{ClassGroupTable, Group};
use crate::error::{Error, Result};
use crate::model::propagation::{differentiated_propagation, mean_pairwise_cosine, propagate_k};
use crate::model::{GraphBranchConfig, ModelParameters, SampleInput};

/// How precision/recall/F1 are aggregated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EvalMode {
    /// Score one positive class against everything else.
    Binary { positive: String },
    /// Macro-average over classes present in the test labels.
    Multiclass,
}

/// Correct/total bookkeeping for one frequency group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: Group,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// One per-class row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub group: Group,
    /// Full-corpus training-side count from the group table.
    pub train_count: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Square confusion matrix; rows are true classes, columns predicted,
/// both in `classes` order (descending training count).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|r| r.iter().sum::<usize>()).sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Everything one evaluation pass produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: EvalMode,
    pub n_test: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub groups: Vec<GroupAccuracy>,
    pub per_class: Vec<ClassAccuracy>,
    pub confusion: ConfusionMatrix,
    /// Zero-division events and other scoring caveats.
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Flat `metric,value` rows (group and per-class lines included).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("n_test,{}\n", self.n_test));
        out.push_str(&format!("accuracy,{}\n", self.accuracy));
        out.push_str(&format!("precision,{}\n", self.precision));
        out.push_str(&format!("recall,{}\n", self.recall));
        out.push_str(&format!("f1,{}\n", self.f1));
        for g in &self.groups {
            out.push_str(&format!("group_accuracy_{},{}\n", g.group, g.accuracy));
        }
        for c in &self.per_class {
            out.push_str(&format!("class_accuracy_{},{}\n", c.label, c.accuracy));
        }
        out
    }
}

fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_inputs(
    predictions: &[String],
    labels: &[String],
    table: &ClassGroupTable,
) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Validation("cannot score an empty prediction set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    for l in labels.iter().chain(predictions.iter()) {
        if table.group_of(l).is_none() {
            return Err(Error::Validation(format!("label {l:?} is not in the class table")));
        }
    }
    Ok(())
}

/// Score predictions against labels. Group membership and the class
/// ordering come from `table` (full-corpus counts).
pub fn compute_metrics(
    predictions: &[String],
    labels: &[String],
    table: &ClassGroupTable,
    mode: EvalMode,
) -> Result<MetricsReport> {
    check_inputs(predictions, labels, table)?;
    let mut notes = Vec::new();

    let classes: Vec<String> = table.entries().iter().map(|e| e.name.clone()).collect();
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (p, l) in predictions.iter().zip(labels.iter()) {
        counts[index[l.as_str()]][index[p.as_str()]] += 1;
    }
    let confusion = ConfusionMatrix { classes, counts };

    let n_test = predictions.len();
    let accuracy = confusion.trace() as f64 / n_test as f64;

    let (precision, recall) = match &mode {
        EvalMode::Binary { positive } => {
            if table.group_of(positive).is_none() {
                return Err(Error::Validation(format!(
                    "positive class {positive:?} is not in the class table"
                )));
            }
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (p, l) in predictions.iter().zip(labels.iter()) {
                match (p == positive, l == positive) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let precision = if tp + fp == 0 {
                notes.push(format!("no predicted positives for {positive:?}; precision set to 0"));
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let recall = if tp + fn_ == 0 {
                notes.push(format!("no true positives for {positive:?}; recall set to 0"));
                0.0
            } else {
                tp as f64 / (tp + fn_) as f64
            };
            (precision, recall)
        }
        EvalMode::Multiclass => {
            // macro-average over classes that occur in the labels
            let k = confusion.classes.len();
            let mut p_sum = 0.0;
            let mut r_sum = 0.0;
            let mut present = 0usize;
            for c in 0..k {
                let true_total: usize = confusion.counts[c].iter().sum();
                if true_total == 0 {
                    continue;
                }
                present += 1;
                let tp = confusion.counts[c][c];
                let pred_total: usize = (0..k).map(|r| confusion.counts[r][c]).sum();
                if pred_total == 0 {
                    notes.push(format!(
                        "no predicted positives for {:?}; precision set to 0",
                        confusion.classes[c]
                    ));
                } else {
                    p_sum += tp as f64 / pred_total as f64;
                }
                r_sum += tp as f64 / true_total as f64;
            }
            (p_sum / present as f64, r_sum / present as f64)
        }
    };

    let mut group_tallies: BTreeMap<Group, (usize, usize)> = BTreeMap::new();
    for g in [Group::Head, Group::Medium, Group::Tail] {
        group_tallies.insert(g, (0, 0));
    }
    for (p, l) in predictions.iter().zip(labels.iter()) {
        let g = table.group_of(l).expect("validated above");
        let t = group_tallies.get_mut(&g).expect("seeded");
        t.1 += 1;
        if p == l {
            t.0 += 1;
        }
    }
    let groups = group_tallies
        .into_iter()
        .map(|(group, (correct, total))| GroupAccuracy {
            group,
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        })
        .collect();

    let per_class = per_class_report(predictions, labels, table)?.entries;

    Ok(MetricsReport {
        mode,
        n_test,
        accuracy,
        precision,
        recall,
        f1: f1_from(precision, recall),
        groups,
        per_class,
        confusion,
        notes,
    })
}

/// Per-class accuracies plus the table classes that never appear in
/// the test labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassReport {
    /// Sorted by descending training count (table order).
    pub entries: Vec<ClassAccuracy>,
    pub absent: Vec<String>,
}

pub fn per_class_report(
    predictions: &[String],
    labels: &[String],
    table: &ClassGroupTable,
) -> Result<PerClassReport> {
    check_inputs(predictions, labels, table)?;
    let mut tallies: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (p, l) in predictions.iter().zip(labels.iter()) {
        let t = tallies.entry(l.as_str()).or_insert((0, 0));
        t.1 += 1;
        if p == l {
            t.0 += 1;
        }
    }
    let mut entries = Vec::new();
    let mut absent = Vec::new();
    for e in table.entries() {
        match tallies.get(e.name.as_str()) {
            Some(&(correct, total)) => entries.push(ClassAccuracy {
                label: e.name.clone(),
                group: e.group,
                train_count: e.count,
                correct,
                total,
                accuracy: correct as f64 / total as f64,
            }),
            None => absent.push(e.name.clone()),
        }
    }
    Ok(PerClassReport { entries, absent })
}

/// One exported sample: final-layer and pooled views plus identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRow {
    pub id: String,
    pub label: String,
    pub group: Group,
    /// Fused pre-softmax logits O.
    pub fused: Vec<f64>,
    /// Pooled graph-branch vector before its MLP.
    pub graph_pooled: Vec<f64>,
    /// Pooled sequence-branch vector before its MLP.
    pub seq_pooled: Vec<f64>,
}

/// Run the model over prepared samples and collect the vectors used
/// for representation visualization. One row per sample, in input
/// order.
pub fn export_representations(
    params: &ModelParameters,
    gcfg: &GraphBranchConfig,
    samples: &[(String, String, SampleInput)],
    table: &ClassGroupTable,
) -> Result<Vec<RepresentationRow>> {
    let mut rows = Vec::with_capacity(samples.len());
    for (id, label, input) in samples {
        let group = table
            .group_of(label)
            .ok_or_else(|| Error::Validation(format!("label {label:?} is not in the class table")))?;
        let (rep, _) = params.forward(input, gcfg)?;
        rows.push(RepresentationRow {
            id: id.clone(),
            label: label.clone(),
            group,
            fused: rep.fused.to_vec(),
            graph_pooled: rep.graph_pooled.to_vec(),
            seq_pooled: rep.seq_pooled.to_vec(),
        });
    }
    Ok(rows)
}

/// CSV with a header row; vector columns are fixed-width
/// `fused_i` / `graph_i` / `seq_i`.
pub fn representations_to_csv(rows: &[RepresentationRow]) -> String {
    let mut out = String::new();
    if rows.is_empty() {
        return "id,label,group\n".into();
    }
    let (nf, ng, ns) = (rows[0].fused.len(), rows[0].graph_pooled.len(), rows[0].seq_pooled.len());
    out.push_str("id,label,group");
    for i in 0..nf {
        out.push_str(&format!(",fused_{i}"));
    }
    for i in 0..ng {
        out.push_str(&format!(",graph_{i}"));
    }
    for i in 0..ns {
        out.push_str(&format!(",seq_{i}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}", r.id, r.label, r.group));
        for v in r.fused.iter().chain(&r.graph_pooled).chain(&r.seq_pooled) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// One depth of the over-smoothing comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OversmoothingRow {
    pub depth: usize,
    /// Mean pairwise cosine after stacking Â `depth` times.
    pub vanilla_similarity: f64,
    /// Mean pairwise cosine after differentiated propagation with
    /// `depth` layers.
    pub differentiated_similarity: f64,
}

/// The comparison table plus a connectivity note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OversmoothingDiagnostic {
    pub rows: Vec<OversmoothingRow>,
    /// Connected components of the graph; similarity collapse is only
    /// expected within a component.
    pub components: usize,
}

fn connected_components(adj: &NormalizedAdjacency) -> usize {
    let n = adj.dim();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for (u, _) in adj.row(v) {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    components
}

/// Tabulate mean pairwise cosine similarity of node features under
/// stacked propagation vs. differentiated propagation at each depth.
/// Depth 0 reports the raw-feature similarity for both series.
pub fn oversmoothing_diagnostic(
    adj: &NormalizedAdjacency,
    features: &Array2<f64>,
    depths: &[usize],
    alpha: f64,
) -> Result<OversmoothingDiagnostic> {
    let mut rows = Vec::with_capacity(depths.len());
    for &depth in depths {
        let vanilla = propagate_k(features, adj, depth)?;
        let differentiated = if depth == 0 {
            features.clone()
        } else {
            differentiated_propagation(features, adj, depth, alpha)?
        };
        rows.push(OversmoothingRow {
            depth,
            vanilla_similarity: mean_pairwise_cosine(&vanilla),
            differentiated_similarity: mean_pairwise_cosine(&differentiated),
        });
    }
    Ok(OversmoothingDiagnostic {
        rows,
        components: connected_components(adj),
    })
}

/// Mean cosine similarity of all same-label pairs vs. all
/// different-label pairs — the separability summary used on exported
/// representations.
pub fn intra_inter_cosine(vectors: &[Vec<f64>], labels: &[String]) -> Result<(f64, f64)> {
    if vectors.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} vectors vs {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if vectors.len() < 2 {
        return Err(Error::Validation("need at least two vectors".into()));
    }
    let cos = |a: &[f64], b: &[f64]| -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let c = cos(&vectors[i], &vectors[j]);
            if labels[i] == labels[j] {
                intra += c;
                n_intra += 1;
            } else {
                inter += c;
                n_inter += 1;
            }
        }
    }
    if n_intra == 0 || n_inter == 0 {
        return Err(Error::Validation(
            "need at least one same-label and one different-label pair".into(),
        ));
    }
    Ok((intra / n_intra as f64, inter / n_inter as f64))
}

/// Build prediction/label string pairs from a binary confusion count.
/// Ordering is deterministic: TP, then FP, TN, FN blocks.
pub fn binary_fixture(
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    positive: &str,
    negative: &str,
) -> (Vec<String>, Vec<String>) {
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    let mut push = |pred: &str, label: &str, n: usize| {
        for _ in 0..n {
            predictions.push(pred.to_string());
            labels.push(label.to_string());
        }
    };
    push(positive, positive, tp);
    push(positive, negative, fp);
    push(negative, negative, tn);
    push(negative, positive, fn_);
    (predictions, labels)
}
