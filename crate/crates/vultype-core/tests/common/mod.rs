//! Shared setup for the integration suites: synthetic corpora prepared
//! end to end (tokenize → vocab → hash embeddings → graphs → splits).

#![allow(dead_code)]

use std::path::Path;

use vultype_core::codegraph::{tokenize, TokenSequence};
use vultype_core::corpus::{
    stratified_split, synth_generate, ClassGroupTable, GroupThresholds, SyntheticSpec,
};
use vultype_core::embeddings::{hash_embeddings, Vocabulary};
use vultype_core::model::{GraphBranchConfig, SequenceBranchConfig};
use vultype_core::training::{prepare_dataset, PreparedDataset};

pub fn small_graph_config(dim: usize, layers: usize, mlp_hidden: usize) -> GraphBranchConfig {
    GraphBranchConfig {
        layers,
        alpha: 0.1,
        dim,
        mlp_hidden,
    }
}

pub fn small_sequence_config(
    token_limit: usize,
    hidden: usize,
    mlp_hidden: usize,
) -> SequenceBranchConfig {
    SequenceBranchConfig {
        token_limit,
        hidden,
        mlp_hidden,
    }
}

/// Generate `spec`, split it 8:1:1 with the spec's seed, build a
/// min-frequency-1 vocabulary and hashed embeddings, and prepare all
/// three splits.
pub fn prepared_synthetic(
    spec: &SyntheticSpec,
    gcfg: &GraphBranchConfig,
    scfg: &SequenceBranchConfig,
) -> PreparedDataset {
    let samples = synth_generate(spec).expect("synthetic corpus");
    let table = ClassGroupTable::from_samples(&samples, GroupThresholds::default());
    let split = stratified_split(&samples, [0.8, 0.1, 0.1], spec.seed).expect("split");
    let streams: Vec<TokenSequence> = samples
        .iter()
        .map(|s| tokenize(&s.code, scfg.token_limit))
        .collect();
    let vocab = Vocabulary::build(&streams, 1);
    let emb = hash_embeddings(&vocab, gcfg.dim, spec.seed).expect("embeddings");
    prepare_dataset(
        &samples,
        &split,
        &table,
        &vocab,
        &emb,
        gcfg,
        scfg,
        Path::new("."),
    )
    .expect("prepared dataset")
}
