//! Two-layer graph convolutional network with manual backpropagation.
//!
//! ```text
//! A1     = G · (X · W1) + b1
//! H      = ReLU(A1)
//! Hd     = dropout(H)            (inverted dropout, train mode only)
//! logits = G · (Hd · W2) + b2
//! P      = softmax(logits)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{spmm, spmm_transpose, DenseMatrix};
use crate::error::{Result, UplError};
use crate::graph::FilterMatrix;
use crate::rng::UplRng;

/// Weights and biases of both layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl GcnParams {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot(in_dim: usize, hidden: usize, num_classes: usize, rng: &mut UplRng) -> Self {
        Self {
            w1: glorot_init(rng, in_dim, hidden),
            b1: vec![0.0; hidden],
            w2: glorot_init(rng, hidden, num_classes),
            b2: vec![0.0; num_classes],
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize, num_classes: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(in_dim, hidden),
            b1: vec![0.0; hidden],
            w2: DenseMatrix::zeros(hidden, num_classes),
            b2: vec![0.0; num_classes],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden_dim(), self.num_classes())
    }

    pub fn in_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    /// Checks that the four tensors agree on their shared dimensions.
    pub fn validate(&self) -> Result<()> {
        let consistent = self.b1.len() == self.w1.cols()
            && self.w2.rows() == self.w1.cols()
            && self.b2.len() == self.w2.cols();
        if !consistent {
            return Err(UplError::DimensionMismatch {
                context: "GcnParams",
                expected: format!(
                    "w1 {:?}, b1 {}, w2 ({}, _), b2 = w2 cols",
                    self.w1.shape(),
                    self.w1.cols(),
                    self.w1.cols()
                ),
                actual: format!(
                    "b1 {}, w2 {:?}, b2 {}",
                    self.b1.len(),
                    self.w2.shape(),
                    self.b2.len()
                ),
            });
        }
        if !self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite())) {
            return Err(UplError::NonFinite("GCN parameters".into()));
        }
        Ok(())
    }

    /// `[w1, b1, w2, b2]` as flat slices.
    pub fn buffers(&self) -> [&[f64]; 4] {
        [self.w1.values(), &self.b1, self.w2.values(), &self.b2]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.values_mut(),
            &mut self.b1,
            self.w2.values_mut(),
            &mut self.b2,
        ]
    }
}

/// Uniform on `±sqrt(6 / (rows + cols))`.
pub fn glorot_init(rng: &mut UplRng, rows: usize, cols: usize) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    DenseMatrix::from_vec(rows, cols, values).expect("shape matches by construction")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub enum ForwardMode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut UplRng },
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer-1 pre-activation `A1`.
    pub pre_activation: DenseMatrix,
    /// `ReLU(A1)` after dropout.
    pub hidden: DenseMatrix,
    /// Per-entry dropout multiplier (`0` or `1/(1-p)`); `None` in eval mode.
    pub dropout_scale: Option<Vec<f64>>,
    pub logits: DenseMatrix,
    pub probabilities: DenseMatrix,
}

pub fn gcn_forward(
    params: &GcnParams,
    filter: &FilterMatrix,
    features: &DenseMatrix,
    mode: ForwardMode<'_>,
) -> Result<ForwardCache> {
    if features.rows() != filter.dim() {
        return Err(UplError::DimensionMismatch {
            context: "gcn_forward",
            expected: format!("{} feature rows", filter.dim()),
            actual: features.rows().to_string(),
        });
    }
    let mut pre_activation = spmm(filter, &features.matmul(&params.w1)?)?;
    pre_activation.add_row_broadcast(&params.b1)?;

    let mut hidden = pre_activation.clone();
    for v in hidden.values_mut() {
        *v = v.max(0.0);
    }
    let dropout_scale = match mode {
        ForwardMode::Eval => None,
        ForwardMode::Train { dropout, rng } => {
            if !(0.0..1.0).contains(&dropout) {
                return Err(UplError::invalid(format!("dropout rate {dropout} outside [0, 1)")));
            }
            let keep = 1.0 / (1.0 - dropout);
            let scale: Vec<f64> = (0..hidden.values().len())
                .map(|_| if dropout > 0.0 && rng.gen::<f64>() < dropout { 0.0 } else { keep })
                .collect();
            for (h, s) in hidden.values_mut().iter_mut().zip(&scale) {
                *h *= s;
            }
            Some(scale)
        }
    };

    let mut logits = spmm(filter, &hidden.matmul(&params.w2)?)?;
    logits.add_row_broadcast(&params.b2)?;
    if !logits.is_finite() {
        return Err(UplError::NonFinite("GCN logits".into()));
    }
    let probabilities = softmax_rows(&logits);
    Ok(ForwardCache {
        pre_activation,
        hidden,
        dropout_scale,
        logits,
        probabilities,
    })
}

/// Gradients of a scalar loss with respect to every parameter, given the
/// gradient on the logits. Reuses the dropout mask recorded in `cache`.
/// Weight decay is not included.
pub fn gcn_backward(
    cache: &ForwardCache,
    params: &GcnParams,
    filter: &FilterMatrix,
    features: &DenseMatrix,
    loss_grad: &DenseMatrix,
) -> Result<GcnParams> {
    let n = filter.dim();
    let stale = cache.logits.shape() != (n, params.num_classes())
        || cache.hidden.shape() != (n, params.hidden_dim())
        || cache.pre_activation.shape() != (n, params.hidden_dim())
        || features.shape() != (n, params.in_dim());
    if stale {
        return Err(UplError::DimensionMismatch {
            context: "gcn_backward (stale cache)",
            expected: format!(
                "{n} nodes, {} -> {} -> {}",
                params.in_dim(),
                params.hidden_dim(),
                params.num_classes()
            ),
            actual: format!(
                "hidden {:?}, logits {:?}, features {:?}",
                cache.hidden.shape(),
                cache.logits.shape(),
                features.shape()
            ),
        });
    }
    if loss_grad.shape() != cache.logits.shape() {
        return Err(UplError::DimensionMismatch {
            context: "gcn_backward",
            expected: format!("loss gradient {:?}", cache.logits.shape()),
            actual: format!("{:?}", loss_grad.shape()),
        });
    }

    let b2 = loss_grad.column_sums();
    let d_hw = spmm_transpose(filter, loss_grad)?;
    let w2 = cache.hidden.transpose_matmul(&d_hw)?;
    let mut d_pre = d_hw.matmul_transpose(&params.w2)?;
    if let Some(scale) = &cache.dropout_scale {
        for (d, s) in d_pre.values_mut().iter_mut().zip(scale) {
            *d *= s;
        }
    }
    for (d, &a) in d_pre.values_mut().iter_mut().zip(cache.pre_activation.values()) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
    let b1 = d_pre.column_sums();
    let d_xw = spmm_transpose(filter, &d_pre)?;
    let w1 = features.transpose_matmul(&d_xw)?;
    Ok(GcnParams { w1, b1, w2, b2 })
}
