//! Shared data pipeline: one function that takes a run config and
//! produces everything training and evaluation need, so every command
//! sees the same split, vocabulary, and embeddings for a given seed.

use vultype_core::codegraph::{tokenize, TokenSequence};
use vultype_core::corpus::{
    load_corpus, merge_remain, stratified_split, ClassGroupTable, DatasetSplit, FunctionSample,
};
use vultype_core::embeddings::{
    hash_embeddings, train_embeddings, EmbeddingParams, EmbeddingTable, Vocabulary,
};
use vultype_core::training::{prepare_dataset, PreparedDataset};
use vultype_core::{seed, Result};

use crate::config::{EmbeddingKind, RunConfig};

/// Everything derived from a corpus under one config and seed.
pub struct Assembled {
    pub samples: Vec<FunctionSample>,
    pub table: ClassGroupTable,
    pub split: DatasetSplit,
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub dataset: PreparedDataset,
}

/// Load the corpus and run the full preparation chain: rare-class
/// merge, grouping, stratified split, tokenization, vocabulary,
/// embeddings, and per-sample feature/graph assembly.
pub fn assemble(cfg: &RunConfig, seed_value: u64) -> Result<Assembled> {
    let corpus_path = cfg.corpus_path()?;
    let (raw, _) = load_corpus(corpus_path).map_err(|e| match e {
        // the core reports bare OS errors; callers need the path
        vultype_core::Error::Io(io) => vultype_core::Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", corpus_path.display()),
        )),
        other => other,
    })?;
    let samples = merge_remain(raw, cfg.data.remain_threshold);
    let table = ClassGroupTable::from_samples(&samples, cfg.thresholds());
    let split = stratified_split(&samples, cfg.data.split, seed_value)?;

    let gcfg = cfg.model.graph_config();
    let scfg = cfg.model.sequence_config();
    let streams: Vec<TokenSequence> = samples
        .iter()
        .map(|s| tokenize(&s.code, scfg.token_limit))
        .collect();
    let vocab = Vocabulary::build(&streams, cfg.data.min_token_freq);
    let embeddings = match cfg.data.embedding {
        EmbeddingKind::Hash => {
            hash_embeddings(&vocab, gcfg.dim, seed::derive(seed_value, "embeddings"))?
        }
        EmbeddingKind::Trained => train_embeddings(
            &streams,
            &vocab,
            &EmbeddingParams {
                dim: gcfg.dim,
                seed: seed::derive(seed_value, "embeddings"),
                ..EmbeddingParams::default()
            },
        )?,
    };

    let base_dir = cfg.graph_dir()?;
    let dataset = prepare_dataset(
        &samples,
        &split,
        &table,
        &vocab,
        &embeddings,
        &gcfg,
        &scfg,
        base_dir.as_path(),
    )?;
    Ok(Assembled {
        samples,
        table,
        split,
        vocab,
        embeddings,
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;
    use vultype_core::corpus::{synth_generate, write_corpus, SyntheticSpec};

    fn tiny_config(dir: &Path) -> RunConfig {
        let spec = SyntheticSpec {
            counts: vec![12, 12],
            vocab_size: 20,
            signal_strength: 0.8,
            seed: 5,
        };
        let samples = synth_generate(&spec).unwrap();
        let corpus = dir.join("corpus.jsonl");
        write_corpus(&samples, &corpus).unwrap();

        let mut cfg = RunConfig::default();
        cfg.data.corpus = Some(corpus);
        cfg.data.remain_threshold = 2;
        cfg.model.dim = 8;
        cfg.model.layers = 2;
        cfg.model.graph_mlp_hidden = 8;
        cfg.model.token_limit = 16;
        cfg.model.hidden = 8;
        cfg.model.seq_mlp_hidden = 8;
        cfg
    }

    #[test]
    fn assemble_is_deterministic_for_a_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let a = assemble(&cfg, 9).unwrap();
        let b = assemble(&cfg, 9).unwrap();
        assert_eq!(a.split, b.split);
        assert_eq!(a.vocab.tokens(), b.vocab.tokens());
        assert_eq!(a.embeddings.matrix(), b.embeddings.matrix());
        assert_eq!(a.dataset.classes, b.dataset.classes);

        let c = assemble(&cfg, 10).unwrap();
        assert_ne!(a.split, c.split, "different seed shuffles the split");
    }

    #[test]
    fn embedding_dim_follows_model_dim() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let a = assemble(&cfg, 1).unwrap();
        assert_eq!(a.embeddings.dim(), 8);
        assert_eq!(a.samples.len(), 24);
        assert_eq!(a.split.total(), 24);
    }

    #[test]
    fn trained_embeddings_also_wire_through() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.data.embedding = EmbeddingKind::Trained;
        let a = assemble(&cfg, 1).unwrap();
        assert_eq!(a.embeddings.dim(), 8);
        assert_eq!(a.embeddings.vocab_size(), a.vocab.len());
    }
}
