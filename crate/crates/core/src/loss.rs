//! Training losses and the γ-margin loss.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UplError};
use crate::nn::DenseMatrix;

/// Floor applied to `p_{i,y_i}` before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Plain cross-entropy.
    Uniform,
    /// `total / (k · m_c)`.
    InverseFrequency,
    /// `(1 − α) / (1 − α^{m_c}) · α^{1 − m_c}`.
    BalancedSoftmax,
}

/// Per-class multipliers on the cross-entropy terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub beta: Vec<f64>,
    pub scheme: WeightScheme,
    pub alpha_balance: f64,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            beta: vec![1.0; num_classes],
            scheme: WeightScheme::Uniform,
            alpha_balance: 0.99,
        }
    }
}

/// Class weights from per-class training counts.
pub fn class_weights(scheme: WeightScheme, counts: &[usize], alpha_balance: f64) -> Result<ClassWeights> {
    if !(alpha_balance > 0.0 && alpha_balance < 1.0) {
        return Err(UplError::invalid(format!(
            "alpha_balance {alpha_balance} outside (0, 1)"
        )));
    }
    if counts.is_empty() {
        return Err(UplError::invalid("no classes"));
    }
    let beta = match scheme {
        WeightScheme::Uniform => vec![1.0; counts.len()],
        WeightScheme::InverseFrequency | WeightScheme::BalancedSoftmax => {
            if let Some(class) = counts.iter().position(|&c| c == 0) {
                return Err(UplError::ZeroClassCount { class });
            }
            let total: usize = counts.iter().sum();
            let k = counts.len() as f64;
            counts
                .iter()
                .map(|&m| match scheme {
                    WeightScheme::InverseFrequency => total as f64 / (k * m as f64),
                    _ => balanced_softmax_beta(m, alpha_balance),
                })
                .collect()
        }
    };
    Ok(ClassWeights {
        beta,
        scheme,
        alpha_balance,
    })
}

fn balanced_softmax_beta(count: usize, alpha: f64) -> f64 {
    let m = count as f64;
    (1.0 - alpha) / (1.0 - alpha.powf(m)) * alpha.powf(1.0 - m)
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient with respect to the logits (zero on unmasked rows).
    pub grad: DenseMatrix,
    /// Masked nodes whose target probability hit [`LOG_CLAMP`].
    pub clamped: usize,
}

/// Weighted cross-entropy averaged over the masked nodes:
/// `1/|mask| Σ β_{y_i} · (−log p_{i,y_i})`.
///
/// `probabilities` are softmax outputs; the returned gradient is with respect
/// to the pre-softmax logits.
pub fn weighted_ce_loss(
    probabilities: &DenseMatrix,
    targets: &[usize],
    weights: &ClassWeights,
    mask: &[bool],
) -> Result<LossOutput> {
    let (n, k) = probabilities.shape();
    if targets.len() != n || mask.len() != n {
        return Err(UplError::DimensionMismatch {
            context: "weighted_ce_loss",
            expected: format!("{n} targets and mask entries"),
            actual: format!("{} targets, {} mask entries", targets.len(), mask.len()),
        });
    }
    if weights.beta.len() != k {
        return Err(UplError::DimensionMismatch {
            context: "weighted_ce_loss",
            expected: format!("{k} class weights"),
            actual: weights.beta.len().to_string(),
        });
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(UplError::EmptyMask);
    }
    let scale = 1.0 / count as f64;
    let mut grad = DenseMatrix::zeros(n, k);
    let mut total = 0.0;
    let mut clamped = 0;
    for i in (0..n).filter(|&i| mask[i]) {
        let y = targets[i];
        if y >= k {
            return Err(UplError::invalid(format!("target {y} of node {i} outside [0, {k})")));
        }
        let beta = weights.beta[y];
        let p = probabilities.get(i, y);
        if p <= LOG_CLAMP {
            clamped += 1;
        }
        total += beta * -p.max(LOG_CLAMP).ln();
        let row = grad.row_mut(i);
        for (c, g) in row.iter_mut().enumerate() {
            let onehot = if c == y { 1.0 } else { 0.0 };
            *g = beta * (probabilities.get(i, c) - onehot) * scale;
        }
    }
    Ok(LossOutput {
        loss: total * scale,
        grad,
        clamped,
    })
}

/// `0` when `score_product ≥ γ`, otherwise `min(1, 1 − score_product/γ)`.
pub fn gamma_margin_loss(score_product: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(UplError::invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(if score_product >= gamma {
        0.0
    } else {
        (1.0 - score_product / gamma).min(1.0)
    })
}
