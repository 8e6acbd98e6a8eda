//! Selective edge removal (SER) and entropy-variance uncertainty.
//!
//! Each perturbation deletes `s_k` distinct edges, drawn without replacement
//! with probability proportional to `deg(u) + deg(v)` on the unperturbed
//! graph. A node's uncertainty is the population variance, across `t`
//! perturbations, of the entropy of its predicted class distribution.

use rand::seq::index::sample_weighted;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UplError};
use crate::graph::{apply_filter, FilterKind, SparseGraph};
use crate::nn::{gcn_forward, DenseMatrix, ForwardMode, GcnParams};
use crate::rng::{child, stream, UplRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Number of perturbed graphs.
    pub t: usize,
    /// Edges removed per perturbation.
    pub s_k: usize,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            t: 100,
            s_k: 100,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(UplError::invalid("perturbation count t must be at least 1"));
        }
        Ok(())
    }
}

/// Per-node variance of prediction entropy across perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores(pub Vec<f64>);

impl UncertaintyScores {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Draws the edges removed by one perturbation, as canonical `(u, v)` pairs
/// with `u < v`.
pub fn sample_removed_edges(graph: &SparseGraph, s_k: usize, rng: &mut UplRng) -> Vec<(usize, usize)> {
    let edges: Vec<(usize, usize)> = graph.edges().collect();
    let amount = s_k.min(edges.len());
    if amount == 0 {
        return Vec::new();
    }
    if amount == edges.len() {
        return edges;
    }
    let degrees = graph.degrees();
    let weight = |i: usize| {
        let (u, v) = edges[i];
        (degrees[u] + degrees[v]) as f64
    };
    // every edge has weight ≥ 2, so the weighted draw cannot fail
    let picked = sample_weighted(rng, edges.len(), weight, amount)
        .expect("edge weights are positive and finite");
    let mut removed: Vec<(usize, usize)> = picked.into_iter().map(|i| edges[i]).collect();
    removed.sort_unstable();
    removed
}

/// One SER perturbation of `graph`.
pub fn sample_perturbation(graph: &SparseGraph, s_k: usize, rng: &mut UplRng) -> SparseGraph {
    let removed = sample_removed_edges(graph, s_k, rng);
    graph.without_edges(&removed)
}

/// Shannon entropy with natural log; `0 · ln 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    let sum: f64 = dist.iter().sum();
    if dist.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-6 {
        return Err(UplError::invalid(format!(
            "not a probability distribution (sum {sum})"
        )));
    }
    Ok(raw_entropy(dist))
}

fn raw_entropy(dist: &[f64]) -> f64 {
    -dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

fn row_entropies(probs: &DenseMatrix) -> Result<Vec<f64>> {
    (0..probs.rows()).map(|i| entropy(probs.row(i))).collect()
}

/// Population variance of the per-node entropies across perturbations.
/// `entropies[k][i]` is the entropy of node `i` under perturbation `k`.
fn entropy_variance(entropies: &[Vec<f64>]) -> Result<UncertaintyScores> {
    let t = entropies.len();
    if t == 0 {
        return Err(UplError::invalid("uncertainty needs at least one perturbation"));
    }
    let n = entropies[0].len();
    if entropies.iter().any(|e| e.len() != n) {
        return Err(UplError::invalid("perturbations disagree on the number of nodes"));
    }
    let scores = (0..n)
        .map(|i| {
            let mean = entropies.iter().map(|e| e[i]).sum::<f64>() / t as f64;
            entropies.iter().map(|e| (e[i] - mean).powi(2)).sum::<f64>() / t as f64
        })
        .collect();
    Ok(UncertaintyScores(scores))
}

/// Entropy-variance scores from `t` per-perturbation probability matrices.
pub fn uncertainty_scores(per_perturbation_probs: &[DenseMatrix]) -> Result<UncertaintyScores> {
    let entropies = per_perturbation_probs
        .iter()
        .map(row_entropies)
        .collect::<Result<Vec<_>>>()?;
    entropy_variance(&entropies)
}

/// Nearest-rank quantile: the element at index `⌈α·n⌉ − 1` of the sorted scores.
pub fn quantile_threshold(scores: &[f64], alpha_q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(UplError::invalid("quantile of an empty score set"));
    }
    if !(alpha_q > 0.0 && alpha_q <= 1.0) {
        return Err(UplError::invalid(format!("quantile level {alpha_q} outside (0, 1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // absorb representation error in α·n (0.7 · 10 must give rank 7)
    let rank = (alpha_q * n as f64 - 1e-9).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Runs the full SER procedure for a trained model: `t` perturbations of
/// `graph`, eval-mode inference on each, and entropy-variance scores for every
/// node. Perturbation `k` uses its own RNG stream, so the result does not
/// depend on how the work is scheduled across threads.
pub fn ser_uncertainty(
    params: &GcnParams,
    graph: &SparseGraph,
    filter_kind: FilterKind,
    features: &DenseMatrix,
    config: &PerturbationConfig,
) -> Result<UncertaintyScores> {
    config.validate()?;
    let entropies = (0..config.t)
        .into_par_iter()
        .map(|k| {
            let mut rng = child(config.seed, stream::SER_BASE + k as u64);
            let perturbed = sample_perturbation(graph, config.s_k, &mut rng);
            let filter = apply_filter(filter_kind, &perturbed)?;
            let cache = gcn_forward(params, &filter, features, ForwardMode::Eval)?;
            row_entropies(&cache.probabilities)
        })
        .collect::<Result<Vec<_>>>()?;
    entropy_variance(&entropies)
}
