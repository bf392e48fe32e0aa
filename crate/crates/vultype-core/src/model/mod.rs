//! The dual-branch representation learner.
//!
//! Graph branch: GRU node transform → differentiated propagation →
//! hybrid pooling → MLP head. Sequence branch: BiLSTM → hybrid pooling
//! → MLP head. The two heads emit class logits which are fused by
//! elementwise addition; softmax happens once, inside the loss.

pub mod gru;
pub mod lstm;
pub mod mlp;
pub mod pool;
pub mod propagation;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::codegraph::NormalizedAdjacency;
use crate::error::{Error, Result};
use crate::seed;

pub use gru::GruCell;
pub use lstm::LstmCell;
pub use mlp::{Linear, Mlp};

/// Graph-branch hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBranchConfig {
    /// Propagation depth L.
    pub layers: usize,
    /// Teleport weight α: how much of the transformed features is
    /// mixed back in unpropagated.
    pub alpha: f64,
    /// Shared feature dimension d (embedding and node-state width).
    pub dim: usize,
    /// Hidden width of the graph-branch MLP head.
    pub mlp_hidden: usize,
}

impl Default for GraphBranchConfig {
    fn default() -> Self {
        GraphBranchConfig {
            layers: 16,
            alpha: 0.1,
            dim: 128,
            mlp_hidden: 128,
        }
    }
}

impl GraphBranchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("graph branch needs at least one layer".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "teleport weight must lie in [0,1], got {}",
                self.alpha
            )));
        }
        if self.dim == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("graph branch dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Sequence-branch hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceBranchConfig {
    /// Token truncation limit n.
    pub token_limit: usize,
    /// Hidden size of each LSTM direction.
    pub hidden: usize,
    /// Hidden width of the sequence-branch MLP head.
    pub mlp_hidden: usize,
}

impl Default for SequenceBranchConfig {
    fn default() -> Self {
        SequenceBranchConfig {
            token_limit: 512,
            hidden: 512,
            mlp_hidden: 512,
        }
    }
}

impl SequenceBranchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_limit == 0 || self.hidden == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("sequence branch dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// All trainable weights. The same struct doubles as the gradient
/// container: `zeros_like` + `accumulate` + `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub gru: GruCell,
    pub graph_mlp: Mlp,
    pub lstm_fwd: LstmCell,
    pub lstm_bwd: LstmCell,
    pub seq_mlp: Mlp,
    pub n_classes: usize,
}

/// One sample's model-ready inputs: embedded node features, the
/// normalized adjacency, the GRU visit order, and embedded tokens.
#[derive(Debug, Clone)]
pub struct SampleInput {
    pub node_features: Array2<f64>,
    pub adjacency: NormalizedAdjacency,
    pub node_order: Vec<usize>,
    pub token_features: Array2<f64>,
}

/// Forward outputs kept for inspection and export.
#[derive(Debug, Clone)]
pub struct Representation {
    /// Propagated node states H^L (V×d).
    pub node_states: Array2<f64>,
    /// Pooled graph-branch vector before its MLP head.
    pub graph_pooled: Array1<f64>,
    /// Pooled sequence-branch vector before its MLP head.
    pub seq_pooled: Array1<f64>,
    pub graph_logits: Array1<f64>,
    pub seq_logits: Array1<f64>,
    /// Fused logits O = graph + sequence.
    pub fused: Array1<f64>,
}

/// Intermediate activations needed by [`ModelParameters::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    gru: gru::GruCache,
    pool_g: pool::PoolCache,
    mlp_g: mlp::MlpCache,
    bi: lstm::BiLstmCache,
    pool_s: pool::PoolCache,
    mlp_s: mlp::MlpCache,
}

/// Elementwise sum of the two branch logit vectors.
pub fn fuse(graph_logits: &Array1<f64>, seq_logits: &Array1<f64>) -> Result<Array1<f64>> {
    if graph_logits.len() != seq_logits.len() {
        return Err(Error::Shape(format!(
            "branch logit lengths differ: {} vs {}",
            graph_logits.len(),
            seq_logits.len()
        )));
    }
    Ok(graph_logits + seq_logits)
}

impl ModelParameters {
    /// Seeded initialization; every tensor draws from its own derived
    /// RNG, uniform in ±1/√fan_in.
    pub fn init(
        gcfg: &GraphBranchConfig,
        scfg: &SequenceBranchConfig,
        n_classes: usize,
        init_seed: u64,
    ) -> Result<ModelParameters> {
        gcfg.validate()?;
        scfg.validate()?;
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "need at least two classes, got {n_classes}"
            )));
        }
        Ok(ModelParameters {
            gru: GruCell::init(gcfg.dim, gcfg.dim, seed::derive(init_seed, "gru")),
            graph_mlp: Mlp::init(
                gcfg.dim,
                gcfg.mlp_hidden,
                n_classes,
                seed::derive(init_seed, "graph-mlp"),
            ),
            lstm_fwd: LstmCell::init(gcfg.dim, scfg.hidden, seed::derive(init_seed, "lstm-fwd")),
            lstm_bwd: LstmCell::init(gcfg.dim, scfg.hidden, seed::derive(init_seed, "lstm-bwd")),
            seq_mlp: Mlp::init(
                2 * scfg.hidden,
                scfg.mlp_hidden,
                n_classes,
                seed::derive(init_seed, "seq-mlp"),
            ),
            n_classes,
        })
    }

    pub fn zeros_like(&self) -> ModelParameters {
        ModelParameters {
            gru: self.gru.zeros_like(),
            graph_mlp: self.graph_mlp.zeros_like(),
            lstm_fwd: self.lstm_fwd.zeros_like(),
            lstm_bwd: self.lstm_bwd.zeros_like(),
            seq_mlp: self.seq_mlp.zeros_like(),
            n_classes: self.n_classes,
        }
    }

    pub fn accumulate(&mut self, other: &ModelParameters) {
        self.gru.accumulate(&other.gru);
        self.graph_mlp.accumulate(&other.graph_mlp);
        self.lstm_fwd.accumulate(&other.lstm_fwd);
        self.lstm_bwd.accumulate(&other.lstm_bwd);
        self.seq_mlp.accumulate(&other.seq_mlp);
    }

    pub fn scale(&mut self, s: f64) {
        self.gru.scale(s);
        self.graph_mlp.scale(s);
        self.lstm_fwd.scale(s);
        self.lstm_bwd.scale(s);
        self.seq_mlp.scale(s);
    }

    pub fn param_count(&self) -> usize {
        self.flatten_iter().count()
    }

    fn flatten_iter(&self) -> impl Iterator<Item = &f64> {
        self.gru
            .w_x
            .iter()
            .chain(self.gru.w_h.iter())
            .chain(self.gru.b.iter())
            .chain(self.graph_mlp.hidden.w.iter())
            .chain(self.graph_mlp.hidden.b.iter())
            .chain(self.graph_mlp.out.w.iter())
            .chain(self.graph_mlp.out.b.iter())
            .chain(self.lstm_fwd.w_x.iter())
            .chain(self.lstm_fwd.w_h.iter())
            .chain(self.lstm_fwd.b.iter())
            .chain(self.lstm_bwd.w_x.iter())
            .chain(self.lstm_bwd.w_h.iter())
            .chain(self.lstm_bwd.b.iter())
            .chain(self.seq_mlp.hidden.w.iter())
            .chain(self.seq_mlp.hidden.b.iter())
            .chain(self.seq_mlp.out.w.iter())
            .chain(self.seq_mlp.out.b.iter())
    }

    fn flatten_iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.gru
            .w_x
            .iter_mut()
            .chain(self.gru.w_h.iter_mut())
            .chain(self.gru.b.iter_mut())
            .chain(self.graph_mlp.hidden.w.iter_mut())
            .chain(self.graph_mlp.hidden.b.iter_mut())
            .chain(self.graph_mlp.out.w.iter_mut())
            .chain(self.graph_mlp.out.b.iter_mut())
            .chain(self.lstm_fwd.w_x.iter_mut())
            .chain(self.lstm_fwd.w_h.iter_mut())
            .chain(self.lstm_fwd.b.iter_mut())
            .chain(self.lstm_bwd.w_x.iter_mut())
            .chain(self.lstm_bwd.w_h.iter_mut())
            .chain(self.lstm_bwd.b.iter_mut())
            .chain(self.seq_mlp.hidden.w.iter_mut())
            .chain(self.seq_mlp.hidden.b.iter_mut())
            .chain(self.seq_mlp.out.w.iter_mut())
            .chain(self.seq_mlp.out.b.iter_mut())
    }

    /// All parameters in one fixed order (row-major per tensor).
    pub fn flatten(&self) -> Vec<f64> {
        self.flatten_iter().copied().collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        for (dst, src) in self.flatten_iter_mut().zip(flat) {
            *dst = *src;
        }
        Ok(())
    }

    /// Euclidean norm over all entries (used for gradient clipping).
    pub fn global_norm(&self) -> f64 {
        self.flatten_iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Full forward pass over one sample.
    pub fn forward(
        &self,
        input: &SampleInput,
        gcfg: &GraphBranchConfig,
    ) -> Result<(Representation, ForwardCache)> {
        let (h0, gru_cache) = self
            .gru
            .forward_sequence(&input.node_features, &input.node_order)?;
        let hl = propagation::differentiated_propagation(
            &h0,
            &input.adjacency,
            gcfg.layers,
            gcfg.alpha,
        )?;
        let (pooled_g, pool_g) = pool::hybrid_pool(&hl)?;
        let (graph_logits, mlp_g) = self.graph_mlp.forward(&pooled_g)?;

        let (concat, bi) = lstm::bilstm_forward(&self.lstm_fwd, &self.lstm_bwd, &input.token_features)?;
        let (pooled_s, pool_s) = pool::hybrid_pool(&concat)?;
        let (seq_logits, mlp_s) = self.seq_mlp.forward(&pooled_s)?;

        let fused = fuse(&graph_logits, &seq_logits)?;
        Ok((
            Representation {
                node_states: hl,
                graph_pooled: pooled_g,
                seq_pooled: pooled_s,
                graph_logits,
                seq_logits,
                fused,
            },
            ForwardCache {
                gru: gru_cache,
                pool_g,
                mlp_g,
                bi,
                pool_s,
                mlp_s,
            },
        ))
    }

    /// Backward pass from a gradient on the fused logits. Since
    /// O = G + S, both branch heads receive the same upstream
    /// gradient. Embeddings are frozen, so input gradients are
    /// discarded.
    pub fn backward(
        &self,
        input: &SampleInput,
        gcfg: &GraphBranchConfig,
        cache: &ForwardCache,
        d_fused: &Array1<f64>,
    ) -> Result<ModelParameters> {
        let (g_mlp_g, d_pooled_g) = self.graph_mlp.backward(&cache.mlp_g, d_fused);
        let d_hl = pool::hybrid_pool_backward(&cache.pool_g, &d_pooled_g);
        let d_h0 = propagation::differentiated_propagation_backward(
            &d_hl,
            &input.adjacency,
            gcfg.layers,
            gcfg.alpha,
        )?;
        let (g_gru, _) = self.gru.backward_sequence(&cache.gru, &d_h0);

        let (g_mlp_s, d_pooled_s) = self.seq_mlp.backward(&cache.mlp_s, d_fused);
        let d_concat = pool::hybrid_pool_backward(&cache.pool_s, &d_pooled_s);
        let (g_lstm_f, g_lstm_b, _) =
            lstm::bilstm_backward(&self.lstm_fwd, &self.lstm_bwd, &cache.bi, &d_concat);

        Ok(ModelParameters {
            gru: g_gru,
            graph_mlp: g_mlp_g,
            lstm_fwd: g_lstm_f,
            lstm_bwd: g_lstm_b,
            seq_mlp: g_mlp_s,
            n_classes: self.n_classes,
        })
    }
}
