//! Code structure graphs, tokenization, and the normalized adjacency
//! consumed by the graph branch.
//!
//! Graphs arrive from external extractors as JSON (`{"nodes": [...],
//! "edges": [[src, dst, kind]]}`) or are built in-process as token chains
//! (one node per token, NCS edges between consecutive tokens).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation limit for token sequences.
pub const DEFAULT_TOKEN_LIMIT: usize = 512;

/// Edge kinds of the code structure graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Ast,
    Cfg,
    Dfg,
    Ncs,
}

impl EdgeKind {
    pub fn parse(s: &str) -> Result<EdgeKind> {
        match s {
            "AST" => Ok(EdgeKind::Ast),
            "CFG" => Ok(EdgeKind::Cfg),
            "DFG" => Ok(EdgeKind::Dfg),
            "NCS" => Ok(EdgeKind::Ncs),
            other => Err(Error::Validation(format!(
                "unknown edge kind {other:?}, expected one of AST|CFG|DFG|NCS"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Ast => "AST",
            EdgeKind::Cfg => "CFG",
            EdgeKind::Dfg => "DFG",
            EdgeKind::Ncs => "NCS",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One node of a code structure graph. Ids are compacted to `0..V-1`
/// at ingestion; the original id is kept in [`CodeGraph::original_ids`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub text: String,
    pub kind: String,
}

/// A typed-edge code structure graph. Stored directed; propagation
/// consumes it symmetrized via [`normalize_adjacency`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodeGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize, EdgeKind)>,
    original_ids: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    id: u64,
    code: String,
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    nodes: Vec<RawNode>,
    edges: Vec<(u64, u64, String)>,
}

impl CodeGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    /// Edges over compacted node ids, deduplicated on (src, dst, kind).
    pub fn edges(&self) -> &[(usize, usize, EdgeKind)] {
        &self.edges
    }

    /// Original ingestion id for each compacted node id.
    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    /// Serialize back to the ingestion JSON schema (with compacted ids).
    pub fn to_json(&self) -> serde_json::Value {
        let raw = RawGraph {
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| RawNode {
                    id: i as u64,
                    code: n.text.clone(),
                    kind: n.kind.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(s, d, k)| (s as u64, d as u64, k.as_str().to_string()))
                .collect(),
        };
        serde_json::to_value(raw).expect("graph serialization cannot fail")
    }

    /// Node visit order for the GRU transform: position along the NCS
    /// chain where one exists, remaining nodes appended in id order.
    pub fn ncs_order(&self) -> Vec<usize> {
        let mut succ: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut indeg: BTreeMap<usize, usize> = BTreeMap::new();
        for &(s, d, k) in &self.edges {
            if k == EdgeKind::Ncs {
                succ.entry(s).or_default().insert(d);
                *indeg.entry(d).or_insert(0) += 1;
                indeg.entry(s).or_insert(0);
            }
        }
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut visited = vec![false; self.nodes.len()];
        let starts: Vec<usize> = indeg
            .iter()
            .filter(|&(_, &d)| d == 0)
            .map(|(&n, _)| n)
            .collect();
        for start in starts {
            let mut cur = start;
            loop {
                if visited[cur] {
                    break;
                }
                visited[cur] = true;
                order.push(cur);
                match succ.get(&cur).and_then(|s| s.iter().find(|&&n| !visited[n])) {
                    Some(&next) => cur = next,
                    None => break,
                }
            }
        }
        for i in 0..self.nodes.len() {
            if !visited[i] {
                order.push(i);
            }
        }
        order
    }
}

/// Parse an externally extracted graph record.
///
/// Ids are compacted to `0..V-1` in input order, duplicate
/// (src, dst, kind) triples are dropped, and every edge endpoint must
/// reference a declared node.
pub fn parse_graph(value: &serde_json::Value) -> Result<CodeGraph> {
    let raw: RawGraph = serde_json::from_value(value.clone())
        .map_err(|e| Error::Validation(format!("graph record does not match schema: {e}")))?;

    let mut id_map: BTreeMap<u64, usize> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    let mut original_ids = Vec::with_capacity(raw.nodes.len());
    for node in &raw.nodes {
        if id_map.insert(node.id, nodes.len()).is_some() {
            return Err(Error::Validation(format!("duplicate node id {}", node.id)));
        }
        nodes.push(GraphNode {
            text: node.code.clone(),
            kind: node.kind.clone(),
        });
        original_ids.push(node.id);
    }

    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(raw.edges.len());
    for (src, dst, kind) in &raw.edges {
        let kind = EdgeKind::parse(kind)?;
        let s = *id_map.get(src).ok_or_else(|| {
            Error::Validation(format!("edge ({src}, {dst}): unknown node id {src}"))
        })?;
        let d = *id_map.get(dst).ok_or_else(|| {
            Error::Validation(format!("edge ({src}, {dst}): unknown node id {dst}"))
        })?;
        if seen.insert((s, d, kind)) {
            edges.push((s, d, kind));
        }
    }

    Ok(CodeGraph {
        nodes,
        edges,
        original_ids,
    })
}

/// Build the minimal token-chain graph: one node per token, NCS edges
/// linking consecutive tokens. Used when no external graph is supplied.
pub fn build_token_chain_graph(tokens: &TokenSequence) -> Result<CodeGraph> {
    if tokens.is_empty() {
        return Err(Error::Validation(
            "cannot build a token-chain graph from an empty token sequence".into(),
        ));
    }
    let nodes: Vec<GraphNode> = tokens
        .tokens()
        .iter()
        .map(|t| GraphNode {
            text: t.clone(),
            kind: "TOKEN".to_string(),
        })
        .collect();
    let edges: Vec<(usize, usize, EdgeKind)> = (1..nodes.len())
        .map(|i| (i - 1, i, EdgeKind::Ncs))
        .collect();
    let original_ids = (0..nodes.len() as u64).collect();
    Ok(CodeGraph {
        nodes,
        edges,
        original_ids,
    })
}

/// An ordered token sequence, truncated to its limit (prefix kept).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
    limit: usize,
}

impl TokenSequence {
    pub fn new(mut tokens: Vec<String>, limit: usize) -> TokenSequence {
        tokens.truncate(limit);
        TokenSequence { tokens, limit }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

/// Tokenize C-like source into identifiers, numbers, string/char
/// literals, operators and punctuation. Whitespace and comments are
/// skipped; order is preserved; the result is truncated to `limit`.
pub fn tokenize(code: &str, limit: usize) -> TokenSequence {
    const THREE_CHAR_OPS: [&str; 4] = ["<<=", ">>=", "...", "->*"];
    const TWO_CHAR_OPS: [&str; 20] = [
        "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
        "%=", "&=", "|=", "^=", "::",
    ];

    let chars: Vec<char> = code.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        // comments
        if c == '/' && i + 1 < chars.len() {
            if chars[i + 1] == '/' {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            if chars[i + 1] == '*' {
                i += 2;
                while i + 1 < chars.len() && !(chars[i] == '*' && chars[i + 1] == '/') {
                    i += 1;
                }
                i = (i + 2).min(chars.len());
                continue;
            }
        }
        // string / char literals, kept as single tokens including quotes
        if c == '"' || c == '\'' {
            let quote = c;
            let start = i;
            i += 1;
            while i < chars.len() {
                if chars[i] == '\\' {
                    i += 2;
                    continue;
                }
                if chars[i] == quote {
                    i += 1;
                    break;
                }
                i += 1;
            }
            let end = i.min(chars.len());
            tokens.push(chars[start..end].iter().collect());
            continue;
        }
        // identifiers
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
            continue;
        }
        // numbers: decimal/hex ints, floats with exponent, type suffixes
        if c.is_ascii_digit() {
            let start = i;
            i += 1;
            if c == '0' && i < chars.len() && (chars[i] == 'x' || chars[i] == 'X') {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_hexdigit() {
                    i += 1;
                }
            } else {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
            }
            while i < chars.len() && matches!(chars[i], 'u' | 'U' | 'l' | 'L' | 'f' | 'F') {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
            continue;
        }
        // operators, longest match first
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        if let Some(op) = THREE_CHAR_OPS.iter().find(|op| rest.starts_with(**op)) {
            tokens.push((*op).to_string());
            i += 3;
            continue;
        }
        if let Some(op) = TWO_CHAR_OPS.iter().find(|op| rest.starts_with(**op)) {
            tokens.push((*op).to_string());
            i += 2;
            continue;
        }
        tokens.push(c.to_string());
        i += 1;
    }
    TokenSequence::new(tokens, limit)
}

/// The symmetric-normalized self-looped adjacency
/// `D^{-1/2} (A + I) D^{-1/2}`, stored sparsely (CSR).
///
/// Edge kinds are collapsed into one unweighted adjacency, directed
/// edges are symmetrized, and the diagonal always holds the self
/// connection.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    dim: usize,
    indptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Sparse row iteration: `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    /// Sparse matrix times dense matrix: `out = Â · h`.
    pub fn apply(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        if h.nrows() != self.dim {
            return Err(Error::Shape(format!(
                "adjacency dim {} does not match feature rows {}",
                self.dim,
                h.nrows()
            )));
        }
        let mut out = Array2::<f64>::zeros(h.raw_dim());
        for i in 0..self.dim {
            let mut row = out.row_mut(i);
            for (j, v) in self.row(i) {
                row.scaled_add(v, &h.row(j));
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Build `D^{-1/2} (A + I) D^{-1/2}` from a code graph.
///
/// `A` is the unweighted symmetrized union of all edge kinds; the self
/// connection contributes exactly one to every degree.
pub fn normalize_adjacency(graph: &CodeGraph) -> Result<NormalizedAdjacency> {
    let v = graph.node_count();
    if v == 0 {
        return Err(Error::Validation(
            "cannot normalize the adjacency of an empty graph".into(),
        ));
    }
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); v];
    for i in 0..v {
        neighbors[i].insert(i);
    }
    for &(s, d, _) in graph.edges() {
        neighbors[s].insert(d);
        neighbors[d].insert(s);
    }
    let degrees: Vec<f64> = neighbors.iter().map(|n| n.len() as f64).collect();

    let mut indptr = Vec::with_capacity(v + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    indptr.push(0);
    for i in 0..v {
        for &j in &neighbors[i] {
            cols.push(j);
            vals.push(1.0 / (degrees[i] * degrees[j]).sqrt());
        }
        indptr.push(cols.len());
    }
    Ok(NormalizedAdjacency {
        dim: v,
        indptr,
        cols,
        vals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn graph_json(nodes: &[(u64, &str)], edges: &[(u64, u64, &str)]) -> serde_json::Value {
        json!({
            "nodes": nodes.iter().map(|(id, code)| json!({"id": id, "code": code, "type": "IDENTIFIER"})).collect::<Vec<_>>(),
            "edges": edges.iter().map(|(s, d, k)| json!([s, d, k])).collect::<Vec<_>>(),
        })
    }

    #[test]
    fn parse_single_node_no_edges() {
        let g = parse_graph(&graph_json(&[(0, "x")], &[])).unwrap();
        assert_eq!(g.node_count(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn parse_compacts_sparse_ids() {
        let g = parse_graph(&graph_json(&[(7, "a"), (3, "b")], &[(7, 3, "AST")])).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.original_ids(), &[7, 3]);
        assert_eq!(g.edges(), &[(0, 1, EdgeKind::Ast)]);
    }

    #[test]
    fn parse_dangling_edge_names_endpoints() {
        let err = parse_graph(&graph_json(&[(0, "a")], &[(0, 7, "AST")])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(0, 7)"), "message should name the edge: {msg}");
        assert!(msg.contains('7'));
    }

    #[test]
    fn parse_unknown_edge_kind_rejected() {
        let err = parse_graph(&graph_json(&[(0, "a"), (1, "b")], &[(0, 1, "PDG")])).unwrap_err();
        assert!(err.to_string().contains("PDG"));
    }

    #[test]
    fn parse_duplicate_edges_deduplicated() {
        let g = parse_graph(&graph_json(
            &[(0, "a"), (1, "b")],
            &[(0, 1, "CFG"), (0, 1, "CFG")],
        ))
        .unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn parse_duplicate_node_id_rejected() {
        let err = parse_graph(&graph_json(&[(2, "a"), (2, "b")], &[])).unwrap_err();
        assert!(err.to_string().contains("duplicate node id 2"));
    }

    #[test]
    fn roundtrip_parse_serialize() {
        let g = parse_graph(&graph_json(
            &[(5, "int"), (9, "x"), (11, "=")],
            &[(5, 9, "AST"), (9, 11, "NCS"), (5, 11, "DFG")],
        ))
        .unwrap();
        let back = parse_graph(&g.to_json()).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn token_chain_two_tokens() {
        let seq = TokenSequence::new(vec!["int".into(), "x".into()], 512);
        let g = build_token_chain_graph(&seq).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges(), &[(0, 1, EdgeKind::Ncs)]);
    }

    #[test]
    fn token_chain_single_token() {
        let seq = TokenSequence::new(vec!["x".into()], 512);
        let g = build_token_chain_graph(&seq).unwrap();
        assert_eq!(g.node_count(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn token_chain_empty_rejected() {
        let seq = TokenSequence::new(vec![], 512);
        assert!(build_token_chain_graph(&seq).is_err());
    }

    #[test]
    fn token_chain_edge_count_induction() {
        for k in 1..20usize {
            let toks: Vec<String> = (0..k).map(|i| format!("t{i}")).collect();
            let g = build_token_chain_graph(&TokenSequence::new(toks, 512)).unwrap();
            assert_eq!(g.edges().len(), k - 1);
        }
    }

    #[test]
    fn ncs_order_follows_chain() {
        let g = parse_graph(&graph_json(
            &[(0, "a"), (1, "b"), (2, "c")],
            &[(1, 2, "NCS"), (0, 1, "NCS")],
        ))
        .unwrap();
        assert_eq!(g.ncs_order(), vec![0, 1, 2]);
    }

    #[test]
    fn ncs_order_falls_back_to_id_order() {
        let g = parse_graph(&graph_json(&[(0, "a"), (1, "b")], &[(0, 1, "AST")])).unwrap();
        assert_eq!(g.ncs_order(), vec![0, 1]);
    }

    // Hand-tokenized oracle fixture: 20 C-like snippets.
    #[test]
    fn tokenize_matches_hand_oracle() {
        let cases: Vec<(&str, Vec<&str>)> = vec![
            ("a+b", vec!["a", "+", "b"]),
            ("int x = 42;", vec!["int", "x", "=", "42", ";"]),
            ("x->y", vec!["x", "->", "y"]),
            ("i++", vec!["i", "++"]),
            ("a <= b", vec!["a", "<=", "b"]),
            (
                "if (a && b) return 0;",
                vec!["if", "(", "a", "&&", "b", ")", "return", "0", ";"],
            ),
            (
                "char *s = \"hi\";",
                vec!["char", "*", "s", "=", "\"hi\"", ";"],
            ),
            ("0x1F + 2", vec!["0x1F", "+", "2"]),
            ("f(1, 2.5)", vec!["f", "(", "1", ",", "2.5", ")"]),
            ("a==b!=c", vec!["a", "==", "b", "!=", "c"]),
            ("// comment\nx", vec!["x"]),
            ("/* c */ y", vec!["y"]),
            ("n <<= 2", vec!["n", "<<=", "2"]),
            (
                "p = &buf[i];",
                vec!["p", "=", "&", "buf", "[", "i", "]", ";"],
            ),
            ("std::vector", vec!["std", "::", "vector"]),
            ("s += 't'", vec!["s", "+=", "'t'"]),
            (
                "while (n--) {}",
                vec!["while", "(", "n", "--", ")", "{", "}"],
            ),
            ("s.x", vec!["s", ".", "x"]),
            (
                "u64 mask = ~0ULL >> sh;",
                vec!["u64", "mask", "=", "~", "0ULL", ">>", "sh", ";"],
            ),
            (
                "memcpy(dst, src, len)",
                vec!["memcpy", "(", "dst", ",", "src", ",", "len", ")"],
            ),
        ];
        for (code, expected) in cases {
            let got = tokenize(code, DEFAULT_TOKEN_LIMIT);
            assert_eq!(got.tokens(), expected.as_slice(), "snippet: {code:?}");
        }
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert!(tokenize("", DEFAULT_TOKEN_LIMIT).is_empty());
    }

    #[test]
    fn tokenize_truncates_to_limit_keeping_prefix() {
        let code = (0..600).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let seq = tokenize(&code, 512);
        assert_eq!(seq.len(), 512);
        assert_eq!(seq.tokens()[0], "t0");
        assert_eq!(seq.tokens()[511], "t511");
    }

    #[test]
    fn normalize_single_node_is_identity() {
        let seq = TokenSequence::new(vec!["x".into()], 512);
        let g = build_token_chain_graph(&seq).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let dense = adj.to_dense();
        assert_eq!(dense.shape(), &[1, 1]);
        assert!((dense[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_two_nodes_one_edge_all_half() {
        // D = diag(2, 2), every entry of (A+I) is 1 -> every entry 0.5.
        let seq = TokenSequence::new(vec!["a".into(), "b".into()], 512);
        let g = build_token_chain_graph(&seq).unwrap();
        let dense = normalize_adjacency(&g).unwrap().to_dense();
        for &v in dense.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_regular_graph_rows_sum_to_one() {
        // Cycle over 5 nodes: every node has degree 3 counting the self loop.
        let nodes: Vec<(u64, &str)> = (0..5).map(|i| (i as u64, "n")).collect();
        let edges: Vec<(u64, u64, &str)> =
            (0..5).map(|i| (i as u64, ((i + 1) % 5) as u64, "CFG")).collect();
        let g = parse_graph(&graph_json(&nodes, &edges)).unwrap();
        let dense = normalize_adjacency(&g).unwrap().to_dense();
        for i in 0..5 {
            let sum: f64 = dense.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn normalize_empty_graph_rejected() {
        let g = parse_graph(&json!({"nodes": [], "edges": []})).unwrap();
        assert!(normalize_adjacency(&g).is_err());
    }

    fn random_graph_strategy() -> impl Strategy<Value = CodeGraph> {
        (1usize..50)
            .prop_flat_map(|v| {
                let edges = proptest::collection::vec((0..v, 0..v), 0..(3 * v));
                (Just(v), edges)
            })
            .prop_map(|(v, edges)| {
                let nodes: Vec<(u64, String)> =
                    (0..v as u64).map(|i| (i, format!("n{i}"))).collect();
                let value = json!({
                    "nodes": nodes.iter().map(|(id, code)| json!({"id": id, "code": code, "type": "T"})).collect::<Vec<_>>(),
                    "edges": edges.iter().map(|&(s, d)| json!([s as u64, d as u64, "AST"])).collect::<Vec<_>>(),
                });
                parse_graph(&value).unwrap()
            })
    }

    proptest! {
        #[test]
        fn prop_normalized_adjacency_symmetric_nonnegative(g in random_graph_strategy()) {
            let dense = normalize_adjacency(&g).unwrap().to_dense();
            let v = g.node_count();
            for i in 0..v {
                for j in 0..v {
                    prop_assert!(dense[(i, j)] >= 0.0);
                    prop_assert!((dense[(i, j)] - dense[(j, i)]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn prop_sqrt_degree_vector_is_unit_eigenvector(g in random_graph_strategy()) {
            // D^{1/2}·1 is an eigenvector with eigenvalue 1.
            let adj = normalize_adjacency(&g).unwrap();
            let dense = adj.to_dense();
            let v = g.node_count();
            let mut deg = vec![0.0f64; v];
            for i in 0..v {
                // recover degree from the diagonal: entry is 1/deg_i
                deg[i] = 1.0 / dense[(i, i)];
            }
            let x: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
            for i in 0..v {
                let mut yi = 0.0;
                for j in 0..v {
                    yi += dense[(i, j)] * x[j];
                }
                prop_assert!((yi - x[i]).abs() < 1e-8, "component {}: {} vs {}", i, yi, x[i]);
            }
        }

        #[test]
        fn prop_graph_roundtrip(g in random_graph_strategy()) {
            let back = parse_graph(&g.to_json()).unwrap();
            prop_assert_eq!(back.nodes(), g.nodes());
            prop_assert_eq!(back.edges(), g.edges());
        }
    }

    #[test]
    fn spectral_radius_at_most_one_on_small_graphs() {
        // power iteration on a few fixed small graphs
        for (v, edge_list) in [
            (3usize, vec![(0u64, 1u64), (1, 2)]),
            (4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]),
            (5, vec![(0, 1), (0, 2), (0, 3), (0, 4)]),
        ] {
            let nodes: Vec<(u64, &str)> = (0..v as u64).map(|i| (i, "n")).collect();
            let edges: Vec<(u64, u64, &str)> =
                edge_list.iter().map(|&(s, d)| (s, d, "AST")).collect();
            let g = parse_graph(&graph_json(&nodes, &edges)).unwrap();
            let adj = normalize_adjacency(&g).unwrap();
            let mut x = Array2::<f64>::ones((v, 1));
            let mut lambda = 0.0f64;
            for _ in 0..200 {
                let y = adj.apply(&x).unwrap();
                let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
                lambda = norm / x.iter().map(|a| a * a).sum::<f64>().sqrt();
                x = y / norm.max(1e-300);
            }
            assert!(lambda <= 1.0 + 1e-9, "spectral radius estimate {lambda}");
        }
    }
}
