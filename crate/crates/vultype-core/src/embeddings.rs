//! Vocabulary construction and token embeddings.
//!
//! Embeddings are trained in-process with skip-gram negative sampling
//! (window 5, 5 negatives, 5 epochs by default) or produced by a
//! seeded hash fallback for fast tests. Tables initialize both node
//! features and sequence inputs; they are frozen during model
//! training.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::codegraph::{tokenize, CodeGraph, TokenSequence};
use crate::error::{Error, Result};
use crate::seed;

const EMBEDDING_MAGIC: &[u8; 8] = b"VTEMB001";

/// Token → index map with two fixed specials: UNK at 0, PAD at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
    min_freq: usize,
}

pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";

impl Vocabulary {
    pub const UNK: usize = 0;
    pub const PAD: usize = 1;

    /// Index tokens with frequency ≥ `min_freq`, ordered by
    /// (frequency desc, token asc) starting at index 2.
    pub fn build(streams: &[TokenSequence], min_freq: usize) -> Vocabulary {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in streams {
            for t in s.tokens() {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_freq.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = vec![UNK_TOKEN.to_string(), PAD_TOKEN.to_string()];
        tokens.extend(ranked.iter().map(|(t, _)| t.to_string()));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_freq,
        }
    }

    /// Rebuild from an ordered token list (deserialization path).
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Vocabulary> {
        if tokens.len() < 2 || tokens[0] != UNK_TOKEN || tokens[1] != PAD_TOKEN {
            return Err(Error::Validation(
                "vocabulary must start with the UNK and PAD specials".into(),
            ));
        }
        let index: BTreeMap<String, usize> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != tokens.len() {
            return Err(Error::Validation("vocabulary contains duplicate tokens".into()));
        }
        Ok(Vocabulary {
            tokens,
            index,
            min_freq,
        })
    }

    /// Index of a token, falling back to UNK.
    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // UNK and PAD are always present
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }
}

/// Skip-gram training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            dim: 128,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

/// A |V|×d table of token vectors, rows aligned with vocabulary
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: Array2<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row(&self, idx: usize) -> ndarray::ArrayView1<'_, f64> {
        self.matrix.row(idx)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

fn seeded_init(vocab: &Vocabulary, dim: usize, init_seed: u64) -> Array2<f64> {
    // word2vec-style init: uniform(-0.5/d, 0.5/d); UNK/PAD start zero
    let mut m = Array2::<f64>::zeros((vocab.len(), dim));
    let half = 0.5 / dim as f64;
    for i in 2..vocab.len() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(init_seed, &format!("emb-row/{i}")));
        for v in m.row_mut(i).iter_mut() {
            *v = rng.gen_range(-half..half);
        }
    }
    m
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Train skip-gram embeddings with negative sampling over the given
/// token streams. Deterministic given `params.seed`; zero epochs
/// returns the seeded initialization unchanged.
pub fn train_embeddings(
    streams: &[TokenSequence],
    vocab: &Vocabulary,
    params: &EmbeddingParams,
) -> Result<EmbeddingTable> {
    if params.dim == 0 {
        return Err(Error::Config("embedding dim must be positive".into()));
    }
    if params.window == 0 {
        return Err(Error::Config("skip-gram window must be positive".into()));
    }
    let mut w_in = seeded_init(vocab, params.dim, params.seed);
    let mut w_out = Array2::<f64>::zeros((vocab.len(), params.dim));

    let indexed: Vec<Vec<usize>> = streams
        .iter()
        .map(|s| s.tokens().iter().map(|t| vocab.index_of(t)).collect())
        .collect();
    let total_tokens: usize = indexed.iter().map(|s| s.len()).sum();
    if total_tokens == 0 || params.epochs == 0 {
        return Ok(EmbeddingTable { matrix: w_in });
    }

    // unigram^0.75 negative-sampling distribution as a cumulative table
    let mut counts = vec![0usize; vocab.len()];
    for s in &indexed {
        for &i in s {
            counts[i] += 1;
        }
    }
    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut acc = 0.0;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let mass = acc;

    let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(params.seed, "skipgram"));
    let total_steps = (total_tokens * params.epochs) as f64;
    let mut step = 0usize;
    let lr0 = params.learning_rate;
    let mut delta = vec![0.0f64; params.dim];

    for _ in 0..params.epochs {
        for stream in &indexed {
            for (t, &center) in stream.iter().enumerate() {
                let lr = (lr0 * (1.0 - step as f64 / total_steps)).max(lr0 * 1e-4);
                step += 1;
                let lo = t.saturating_sub(params.window);
                let hi = (t + params.window).min(stream.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == t {
                        continue;
                    }
                    let target = stream[ctx_pos];
                    let v_c: Vec<f64> = w_in.row(center).to_vec();
                    delta.iter_mut().for_each(|d| *d = 0.0);
                    // positive pair, then negatives
                    for neg in 0..=params.negatives {
                        let (out_idx, label) = if neg == 0 {
                            (target, 1.0)
                        } else {
                            let r = rng.gen::<f64>() * mass;
                            let idx = cumulative.partition_point(|&c| c <= r).min(vocab.len() - 1);
                            if idx == target {
                                continue;
                            }
                            (idx, 0.0)
                        };
                        let mut u = w_out.row_mut(out_idx);
                        let dot: f64 = u.iter().zip(&v_c).map(|(a, b)| a * b).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for (k, uk) in u.iter_mut().enumerate() {
                            delta[k] += g * *uk;
                            *uk += g * v_c[k];
                        }
                    }
                    for (k, vk) in w_in.row_mut(center).iter_mut().enumerate() {
                        *vk += delta[k];
                    }
                }
            }
        }
    }
    Ok(EmbeddingTable { matrix: w_in })
}

/// Seeded hash fallback: each ordinary token gets a random row derived
/// from its spelling alone; UNK and PAD stay zero. No training.
pub fn hash_embeddings(vocab: &Vocabulary, dim: usize, table_seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dim must be positive".into()));
    }
    let mut m = Array2::<f64>::zeros((vocab.len(), dim));
    let half = 0.5 / dim as f64;
    for (i, token) in vocab.tokens().iter().enumerate().skip(2) {
        let mut rng =
            ChaCha20Rng::seed_from_u64(seed::derive(table_seed, &format!("hash-emb/{token}")));
        for v in m.row_mut(i).iter_mut() {
            *v = rng.gen_range(-half..half);
        }
    }
    Ok(EmbeddingTable { matrix: m })
}

/// Embed a token sequence as a len×d matrix (UNK row for unknowns).
pub fn embed_tokens(
    sequence: &TokenSequence,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((sequence.len(), table.dim()));
    for (i, t) in sequence.tokens().iter().enumerate() {
        out.row_mut(i).assign(&table.row(vocab.index_of(t)));
    }
    out
}

/// Embed graph nodes as a V×d matrix. Node text is tokenized;
/// multi-token text is mean-pooled; empty text uses the UNK row.
pub fn embed_nodes(graph: &CodeGraph, vocab: &Vocabulary, table: &EmbeddingTable) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((graph.node_count(), table.dim()));
    for (i, node) in graph.nodes().iter().enumerate() {
        let toks = tokenize(&node.text, usize::MAX);
        if toks.is_empty() {
            out.row_mut(i).assign(&table.row(Vocabulary::UNK));
            continue;
        }
        let mut acc = Array1::<f64>::zeros(table.dim());
        for t in toks.tokens() {
            acc += &table.row(vocab.index_of(t));
        }
        acc /= toks.len() as f64;
        out.row_mut(i).assign(&acc);
    }
    out
}

/// Write the table as a binary matrix file with a JSON header.
pub fn save_embeddings(
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    params: &EmbeddingParams,
    path: &Path,
) -> Result<()> {
    #[derive(Serialize)]
    struct Header<'a> {
        dim: usize,
        tokens: &'a [String],
        min_freq: usize,
        params: &'a EmbeddingParams,
    }
    let header = serde_json::to_vec(&Header {
        dim: table.dim(),
        tokens: vocab.tokens(),
        min_freq: vocab.min_freq(),
        params,
    })
    .map_err(|e| Error::Validation(e.to_string()))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(EMBEDDING_MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for v in table.matrix.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a table written by [`save_embeddings`].
pub fn load_embeddings(path: &Path) -> Result<(EmbeddingTable, Vocabulary, EmbeddingParams)> {
    #[derive(Deserialize)]
    struct Header {
        dim: usize,
        tokens: Vec<String>,
        min_freq: usize,
        params: EmbeddingParams,
    }
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::Validation(format!(
            "{} is not an embedding table file (bad magic)",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Validation(format!("embedding header: {e}")))?;
    let vocab = Vocabulary::from_tokens(header.tokens, header.min_freq)?;
    let n = vocab.len() * header.dim;
    let mut buf = vec![0u8; n * 8];
    file.read_exact(&mut buf)?;
    let values: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk size is 8")))
        .collect();
    let matrix = Array2::from_shape_vec((vocab.len(), header.dim), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("embedding table contains non-finite values".into()));
    }
    Ok((EmbeddingTable { matrix }, vocab, header.params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::codegraph::build_token_chain_graph;

    fn seqs(texts: &[&str]) -> Vec<TokenSequence> {
        texts.iter().map(|t| tokenize(t, 512)).collect()
    }

    #[test]
    fn vocab_indexes_every_token_at_min_freq_one() {
        let streams = seqs(&["a b c", "b c d"]);
        let v = Vocabulary::build(&streams, 1);
        // 2 specials + 4 distinct tokens
        assert_eq!(v.len(), 6);
        for t in ["a", "b", "c", "d"] {
            assert!(v.index_of(t) >= 2, "{t} should be indexed");
        }
    }

    #[test]
    fn vocab_rare_token_maps_to_unk() {
        let streams = seqs(&["a a b"]);
        let v = Vocabulary::build(&streams, 2);
        assert!(v.index_of("a") >= 2);
        assert_eq!(v.index_of("b"), Vocabulary::UNK);
        assert_eq!(v.index_of("never-seen"), Vocabulary::UNK);
    }

    #[test]
    fn vocab_deterministic_and_frequency_ordered() {
        let streams = seqs(&["z z z y y x", "x z"]);
        let a = Vocabulary::build(&streams, 1);
        let b = Vocabulary::build(&streams, 1);
        assert_eq!(a, b);
        // z (4) before y (2) before x (2)? y and x tie at 2 → name order
        assert_eq!(a.index_of("z"), 2);
        assert!(a.index_of("x") < a.index_of("y"));
    }

    #[test]
    fn vocab_specials_pinned() {
        let v = Vocabulary::build(&[], 1);
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(0), Some(UNK_TOKEN));
        assert_eq!(v.token(1), Some(PAD_TOKEN));
    }

    fn small_params(dim: usize, epochs: usize, emb_seed: u64) -> EmbeddingParams {
        EmbeddingParams {
            dim,
            window: 5,
            negatives: 5,
            epochs,
            learning_rate: 0.025,
            seed: emb_seed,
        }
    }

    #[test]
    fn zero_epochs_returns_seeded_init() {
        let streams = seqs(&["a b c d e", "c d e f g"]);
        let v = Vocabulary::build(&streams, 1);
        let p = small_params(16, 0, 5);
        let t = train_embeddings(&streams, &v, &p).unwrap();
        let expected = seeded_init(&v, 16, 5);
        assert_eq!(t.matrix(), &expected);
        // UNK/PAD rows zero
        assert!(t.row(0).iter().all(|&x| x == 0.0));
        assert!(t.row(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn requested_dim_honored() {
        let streams = seqs(&["a b c"]);
        let v = Vocabulary::build(&streams, 1);
        let t = train_embeddings(&streams, &v, &small_params(128, 1, 1)).unwrap();
        assert_eq!(t.dim(), 128);
        assert_eq!(t.vocab_size(), v.len());
        assert!(t.matrix().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn training_deterministic_under_seed() {
        let streams = seqs(&["a b c d e f g h", "h g f e d c b a"]);
        let v = Vocabulary::build(&streams, 1);
        let t1 = train_embeddings(&streams, &v, &small_params(8, 2, 9)).unwrap();
        let t2 = train_embeddings(&streams, &v, &small_params(8, 2, 9)).unwrap();
        assert_eq!(t1, t2);
    }

    fn cosine(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb).max(1e-300)
    }

    #[test]
    fn co_occurring_tokens_end_up_closer() {
        // two topics that never mix: sentences draw only from their
        // own token set, so a-tokens co-occur with a-tokens only
        use rand::Rng as _;
        let mut majority = 0;
        for trial_seed in 0..5u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(trial_seed, "topics"));
            let mut texts = Vec::new();
            for _ in 0..60 {
                let topic: usize = rng.gen_range(0..2);
                let toks: Vec<String> = (0..12)
                    .map(|_| format!("{}{}", if topic == 0 { "a" } else { "b" }, rng.gen_range(0..5)))
                    .collect();
                texts.push(toks.join(" "));
            }
            let streams: Vec<TokenSequence> =
                texts.iter().map(|t| tokenize(t, 512)).collect();
            let v = Vocabulary::build(&streams, 1);
            let t = train_embeddings(&streams, &v, &small_params(16, 5, trial_seed)).unwrap();
            let same = cosine(t.row(v.index_of("a0")), t.row(v.index_of("a1")));
            let cross = cosine(t.row(v.index_of("a0")), t.row(v.index_of("b1")));
            if same > cross {
                majority += 1;
            }
        }
        assert!(majority >= 3, "co-occurrence separation held in {majority}/5 seeds");
    }

    #[test]
    fn hash_embeddings_deterministic_specials_zero() {
        let streams = seqs(&["a b c"]);
        let v = Vocabulary::build(&streams, 1);
        let t1 = hash_embeddings(&v, 12, 3).unwrap();
        let t2 = hash_embeddings(&v, 12, 3).unwrap();
        assert_eq!(t1, t2);
        assert!(t1.row(0).iter().all(|&x| x == 0.0));
        assert!(t1.row(1).iter().all(|&x| x == 0.0));
        assert!(t1.row(v.index_of("a")).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn hash_embedding_rows_depend_on_spelling_not_index() {
        let v1 = Vocabulary::build(&seqs(&["common rare"]), 1);
        let v2 = Vocabulary::build(&seqs(&["common common other rare"]), 1);
        let t1 = hash_embeddings(&v1, 8, 7).unwrap();
        let t2 = hash_embeddings(&v2, 8, 7).unwrap();
        assert_eq!(
            t1.row(v1.index_of("rare")).to_vec(),
            t2.row(v2.index_of("rare")).to_vec()
        );
    }

    #[test]
    fn embed_tokens_shape_and_unk_fallback() {
        let streams = seqs(&["a b"]);
        let v = Vocabulary::build(&streams, 1);
        let t = hash_embeddings(&v, 6, 1).unwrap();
        let seq = tokenize("a mystery", 512);
        let m = embed_tokens(&seq, &v, &t);
        assert_eq!(m.shape(), &[2, 6]);
        assert_eq!(m.row(0).to_vec(), t.row(v.index_of("a")).to_vec());
        assert_eq!(m.row(1).to_vec(), t.row(Vocabulary::UNK).to_vec());
    }

    #[test]
    fn embed_nodes_single_known_token_is_lookup() {
        let streams = seqs(&["x y"]);
        let v = Vocabulary::build(&streams, 1);
        let t = hash_embeddings(&v, 6, 2).unwrap();
        let g = build_token_chain_graph(&tokenize("x y", 512)).unwrap();
        let m = embed_nodes(&g, &v, &t);
        assert_eq!(m.shape(), &[2, 6]);
        assert_eq!(m.row(0).to_vec(), t.row(v.index_of("x")).to_vec());
    }

    #[test]
    fn embed_nodes_multi_token_text_is_mean() {
        let streams = seqs(&["int x"]);
        let v = Vocabulary::build(&streams, 1);
        let t = hash_embeddings(&v, 6, 2).unwrap();
        let g = crate::codegraph::parse_graph(&serde_json::json!({
            "nodes": [{"id": 0, "code": "int x", "type": "DECL"}],
            "edges": [],
        }))
        .unwrap();
        let m = embed_nodes(&g, &v, &t);
        let expected: Vec<f64> = t
            .row(v.index_of("int"))
            .iter()
            .zip(t.row(v.index_of("x")).iter())
            .map(|(a, b)| (a + b) / 2.0)
            .collect();
        for (got, want) in m.row(0).iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_nodes_empty_text_uses_unk() {
        let streams = seqs(&["x"]);
        let v = Vocabulary::build(&streams, 1);
        let t = hash_embeddings(&v, 4, 2).unwrap();
        let g = crate::codegraph::parse_graph(&serde_json::json!({
            "nodes": [{"id": 0, "code": "", "type": "BLOCK"}],
            "edges": [],
        }))
        .unwrap();
        let m = embed_nodes(&g, &v, &t);
        assert_eq!(m.row(0).to_vec(), t.row(Vocabulary::UNK).to_vec());
    }

    proptest! {
        #[test]
        fn prop_node_average_permutation_invariant(
            toks in proptest::collection::vec("[a-e]", 1..6),
            perm_seed in 0u64..100,
        ) {
            let text = toks.join(" ");
            let streams = seqs(&[text.as_str()]);
            let v = Vocabulary::build(&streams, 1);
            let t = hash_embeddings(&v, 5, 1).unwrap();

            let mut shuffled = toks.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha20Rng::seed_from_u64(perm_seed));
            let make = |ts: &[String]| {
                crate::codegraph::parse_graph(&serde_json::json!({
                    "nodes": [{"id": 0, "code": ts.join(" "), "type": "T"}],
                    "edges": [],
                })).unwrap()
            };
            let m1 = embed_nodes(&make(&toks), &v, &t);
            let m2 = embed_nodes(&make(&shuffled), &v, &t);
            for (a, b) in m1.iter().zip(m2.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let streams = seqs(&["a b c d", "b c d e"]);
        let v = Vocabulary::build(&streams, 1);
        let p = small_params(8, 1, 4);
        let t = train_embeddings(&streams, &v, &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        save_embeddings(&t, &v, &p, &path).unwrap();
        let (t2, v2, p2) = load_embeddings(&path).unwrap();
        assert_eq!(t2, t);
        assert_eq!(v2, v);
        assert_eq!(p2, p);
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not-emb.bin");
        std::fs::write(&path, b"JUNKJUNKJUNKJUNK").unwrap();
        assert!(load_embeddings(&path).is_err());
    }
}
