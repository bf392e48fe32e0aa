//! Training objectives: cross-entropy, focal, label-smoothing CE,
//! label-aware smoothing, class-balanced (CE and focal), and the
//! adaptive objective that blends focal into label-smoothing CE over
//! the course of training.
//!
//! Losses are per-sample scalar functions of predicted class
//! probabilities; batch reduction (mean) happens in the trainer. The
//! gradient entry point takes raw logits and chains through softmax
//! analytically.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical floor inside every logarithm.
const LOG_FLOOR: f64 = 1e-12;

/// Which objective to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Focal,
    Lsce,
    LabelAwareSmooth,
    ClassBalanced,
    ClassBalancedFocal,
    Adaptive,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Focal => "focal",
            LossKind::Lsce => "lsce",
            LossKind::LabelAwareSmooth => "label_aware_smooth",
            LossKind::ClassBalanced => "class_balanced",
            LossKind::ClassBalancedFocal => "class_balanced_focal",
            LossKind::Adaptive => "adaptive",
        }
    }
}

fn default_gamma() -> f64 {
    2.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.9999
}

/// Objective selection plus hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Focal modulating factor.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Smoothing mass moved off the true class.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Effective-number decay for class-balanced weights.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

impl Default for LossConfig {
    /// The adaptive objective is the headline configuration.
    fn default() -> Self {
        LossConfig::new(LossKind::Adaptive)
    }
}

impl LossConfig {
    pub fn new(kind: LossKind) -> LossConfig {
        LossConfig {
            kind,
            gamma: default_gamma(),
            epsilon: default_epsilon(),
            beta: default_beta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be ≥ 0, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0,1), got {}",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0,1), got {}", self.beta)));
        }
        Ok(())
    }
}

/// Per-class training-sample counts, indexed like the trainer's class
/// list. Every class present in training must have at least one
/// sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFrequencyTable {
    counts: Vec<usize>,
}

impl ClassFrequencyTable {
    pub fn new(counts: Vec<usize>) -> Result<ClassFrequencyTable> {
        if counts.is_empty() {
            return Err(Error::Validation("class frequency table cannot be empty".into()));
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Validation(format!(
                "class {i} has no training samples; every class needs at least one"
            )));
        }
        Ok(ClassFrequencyTable { counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// Effective-number weights `w_a = (1−β)/(1−β^{N_a})`, renormalized
    /// to mean 1.
    pub fn class_balanced_weights(&self, beta: f64) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("beta must lie in [0,1), got {beta}")));
        }
        let mut w: Vec<f64> = self
            .counts
            .iter()
            .map(|&n| {
                if beta == 0.0 {
                    1.0
                } else {
                    (1.0 - beta) / (1.0 - beta.powi(n as i32))
                }
            })
            .collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        for v in &mut w {
            *v /= mean;
        }
        Ok(w)
    }

    /// Per-class smoothing for the label-aware objective: ε grows with
    /// class frequency, interpolated on a log-count scale from 0 (the
    /// rarest class) to `eps_max` (the most frequent). With all counts
    /// equal the interpolation degenerates to the midpoint.
    pub fn label_aware_epsilons(&self, eps_max: f64) -> Vec<f64> {
        let lo = *self.counts.iter().min().expect("non-empty") as f64;
        let hi = *self.counts.iter().max().expect("non-empty") as f64;
        if (hi - lo).abs() < f64::EPSILON {
            return vec![eps_max / 2.0; self.counts.len()];
        }
        let (log_lo, log_hi) = (lo.ln(), hi.ln());
        self.counts
            .iter()
            .map(|&n| eps_max * ((n as f64).ln() - log_lo) / (log_hi - log_lo))
            .collect()
    }
}

/// The training-time interpolation state: `T = 1 − (E_now/E_max)²`,
/// with `E_now` 0-based so the first epoch trains at T = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub e_now: usize,
    pub e_max: usize,
    pub t: f64,
}

impl EpochSchedule {
    pub fn new(e_now: usize, e_max: usize) -> Result<EpochSchedule> {
        Ok(EpochSchedule {
            e_now,
            e_max,
            t: schedule_t(e_now, e_max)?,
        })
    }
}

/// Quadratic schedule weight 1 − (e_now/e_max)²: 1 at the start of
/// training, 0 once `e_now` reaches `e_max`.
pub fn schedule_t(e_now: usize, e_max: usize) -> Result<f64> {
    if e_max == 0 {
        return Err(Error::Config("total epochs must be ≥ 1".into()));
    }
    if e_now > e_max {
        return Err(Error::Config(format!(
            "current epoch {e_now} exceeds total epochs {e_max}"
        )));
    }
    let ratio = e_now as f64 / e_max as f64;
    Ok(1.0 - ratio * ratio)
}

fn check_probs(probs: &Array1<f64>, target: usize) -> Result<()> {
    if target >= probs.len() {
        return Err(Error::Validation(format!(
            "target class {target} out of range for {} classes",
            probs.len()
        )));
    }
    if probs.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::Validation("probabilities must be finite and non-negative".into()));
    }
    let sum: f64 = probs.sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!(
            "probabilities must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

fn clamped_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// `−log ŷ_target`.
pub fn ce_loss(probs: &Array1<f64>, target: usize) -> Result<f64> {
    check_probs(probs, target)?;
    Ok(-clamped_ln(probs[target]))
}

/// `−(1−ŷ_target)^γ · log ŷ_target`.
pub fn focal_loss(probs: &Array1<f64>, target: usize, gamma: f64) -> Result<f64> {
    check_probs(probs, target)?;
    if gamma < 0.0 {
        return Err(Error::Config(format!("gamma must be ≥ 0, got {gamma}")));
    }
    let p = probs[target];
    let q = (1.0 - p).max(0.0);
    Ok(-q.powf(gamma) * clamped_ln(p))
}

/// `−Σ_i ((1−ε)y_i + ε/n) · log ŷ_i`.
pub fn lsce_loss(probs: &Array1<f64>, target: usize, epsilon: f64) -> Result<f64> {
    check_probs(probs, target)?;
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon must lie in [0,1), got {epsilon}")));
    }
    let n = probs.len() as f64;
    let mut loss = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        let w = if i == target { 1.0 - epsilon } else { 0.0 } + epsilon / n;
        loss -= w * clamped_ln(p);
    }
    Ok(loss)
}

/// LSCE where the smoothing strength is the true class's entry in a
/// per-class table (heads get smoothed harder than tails).
pub fn label_aware_smooth_loss(
    probs: &Array1<f64>,
    target: usize,
    epsilons: &[f64],
) -> Result<f64> {
    if epsilons.len() != probs.len() {
        return Err(Error::Config(format!(
            "epsilon table covers {} classes but prediction has {}",
            epsilons.len(),
            probs.len()
        )));
    }
    lsce_loss(probs, target, epsilons[target])
}

/// CE scaled by the true class's weight.
pub fn class_balanced_loss(probs: &Array1<f64>, target: usize, weights: &[f64]) -> Result<f64> {
    if weights.len() != probs.len() {
        return Err(Error::Config(format!(
            "weight table covers {} classes but prediction has {}",
            weights.len(),
            probs.len()
        )));
    }
    Ok(weights[target] * ce_loss(probs, target)?)
}

/// Focal loss scaled by the true class's weight.
pub fn class_balanced_focal_loss(
    probs: &Array1<f64>,
    target: usize,
    weights: &[f64],
    gamma: f64,
) -> Result<f64> {
    if weights.len() != probs.len() {
        return Err(Error::Config(format!(
            "weight table covers {} classes but prediction has {}",
            weights.len(),
            probs.len()
        )));
    }
    Ok(weights[target] * focal_loss(probs, target, gamma)?)
}

/// `T·focal + (1−T)·lsce` on identical inputs.
pub fn adaptive_loss(
    probs: &Array1<f64>,
    target: usize,
    t: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Validation(format!("schedule weight must lie in [0,1], got {t}")));
    }
    Ok(t * focal_loss(probs, target, gamma)? + (1.0 - t) * lsce_loss(probs, target, epsilon)?)
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Array1<f64> = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// A loss config resolved against the per-run context (class counts,
/// epoch schedule), ready to evaluate sample after sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Ce,
    Focal { gamma: f64 },
    Lsce { epsilon: f64 },
    LabelAwareSmooth { epsilons: Vec<f64> },
    ClassBalanced { weights: Vec<f64> },
    ClassBalancedFocal { weights: Vec<f64>, gamma: f64 },
    Adaptive { t: f64, gamma: f64, epsilon: f64 },
}

impl Objective {
    /// Bind a [`LossConfig`] to its context. Count-dependent kinds
    /// need `counts`; the adaptive kind needs `schedule`.
    pub fn resolve(
        cfg: &LossConfig,
        counts: Option<&ClassFrequencyTable>,
        schedule: Option<&EpochSchedule>,
    ) -> Result<Objective> {
        cfg.validate()?;
        let need_counts = || {
            counts.ok_or_else(|| {
                Error::Config(format!(
                    "loss kind {:?} needs per-class training counts",
                    cfg.kind.as_str()
                ))
            })
        };
        Ok(match cfg.kind {
            LossKind::Ce => Objective::Ce,
            LossKind::Focal => Objective::Focal { gamma: cfg.gamma },
            LossKind::Lsce => Objective::Lsce { epsilon: cfg.epsilon },
            LossKind::LabelAwareSmooth => Objective::LabelAwareSmooth {
                epsilons: need_counts()?.label_aware_epsilons(cfg.epsilon),
            },
            LossKind::ClassBalanced => Objective::ClassBalanced {
                weights: need_counts()?.class_balanced_weights(cfg.beta)?,
            },
            LossKind::ClassBalancedFocal => Objective::ClassBalancedFocal {
                weights: need_counts()?.class_balanced_weights(cfg.beta)?,
                gamma: cfg.gamma,
            },
            LossKind::Adaptive => {
                let s = schedule.ok_or_else(|| {
                    Error::Config("adaptive loss needs an epoch schedule".into())
                })?;
                Objective::Adaptive {
                    t: s.t,
                    gamma: cfg.gamma,
                    epsilon: cfg.epsilon,
                }
            }
        })
    }

    /// Per-sample loss on probabilities.
    pub fn loss(&self, probs: &Array1<f64>, target: usize) -> Result<f64> {
        match self {
            Objective::Ce => ce_loss(probs, target),
            Objective::Focal { gamma } => focal_loss(probs, target, *gamma),
            Objective::Lsce { epsilon } => lsce_loss(probs, target, *epsilon),
            Objective::LabelAwareSmooth { epsilons } => {
                label_aware_smooth_loss(probs, target, epsilons)
            }
            Objective::ClassBalanced { weights } => class_balanced_loss(probs, target, weights),
            Objective::ClassBalancedFocal { weights, gamma } => {
                class_balanced_focal_loss(probs, target, weights, *gamma)
            }
            Objective::Adaptive { t, gamma, epsilon } => {
                adaptive_loss(probs, target, *t, *gamma, *epsilon)
            }
        }
    }

    /// dL/dŷ for this objective (y one-hot at `target`).
    fn prob_gradient(&self, probs: &Array1<f64>, target: usize) -> Array1<f64> {
        let n = probs.len();
        let mut g = Array1::<f64>::zeros(n);
        let p_t = probs[target];
        // −d/dp [ (1−p)^γ ln p ] with the p→1 limit handled explicitly
        let focal_grad = |gamma: f64| -> f64 {
            let q = (1.0 - p_t).max(0.0);
            if q < 1e-15 {
                return 0.0;
            }
            gamma * q.powf(gamma - 1.0) * clamped_ln(p_t) - q.powf(gamma) / p_t.max(LOG_FLOOR)
        };
        let lsce_grad = |g: &mut Array1<f64>, epsilon: f64, scale: f64| {
            let nf = n as f64;
            for i in 0..n {
                let w = if i == target { 1.0 - epsilon } else { 0.0 } + epsilon / nf;
                g[i] += scale * (-w / probs[i].max(LOG_FLOOR));
            }
        };
        match self {
            Objective::Ce => g[target] = -1.0 / p_t.max(LOG_FLOOR),
            Objective::Focal { gamma } => g[target] = focal_grad(*gamma),
            Objective::Lsce { epsilon } => lsce_grad(&mut g, *epsilon, 1.0),
            Objective::LabelAwareSmooth { epsilons } => lsce_grad(&mut g, epsilons[target], 1.0),
            Objective::ClassBalanced { weights } => {
                g[target] = weights[target] * (-1.0 / p_t.max(LOG_FLOOR))
            }
            Objective::ClassBalancedFocal { weights, gamma } => {
                g[target] = weights[target] * focal_grad(*gamma)
            }
            Objective::Adaptive { t, gamma, epsilon } => {
                g[target] += t * focal_grad(*gamma);
                lsce_grad(&mut g, *epsilon, 1.0 - t);
            }
        }
        g
    }

    /// Loss and its gradient with respect to raw logits, chaining
    /// dL/dŷ through the softmax Jacobian:
    /// `dL/dz_j = p_j (g_j − Σ_k g_k p_k)`.
    pub fn loss_and_logit_gradient(
        &self,
        logits: &Array1<f64>,
        target: usize,
    ) -> Result<(f64, Array1<f64>)> {
        let probs = softmax(logits);
        let loss = self.loss(&probs, target)?;
        let g = self.prob_gradient(&probs, target);
        let inner: f64 = g.iter().zip(probs.iter()).map(|(a, b)| a * b).sum();
        let dz: Array1<f64> = probs
            .iter()
            .zip(g.iter())
            .map(|(&p, &gi)| p * (gi - inner))
            .collect();
        Ok((loss, dz))
    }
}
