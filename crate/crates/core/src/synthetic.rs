//! Planted-partition graphs with class-dependent sparse features, for tests
//! and smoke runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, UplError};
use crate::graph::SparseGraph;
use crate::nn::DenseMatrix;
use crate::rng::UplRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartition {
    pub class_sizes: Vec<usize>,
    /// Expected neighbours inside the own class.
    pub degree_in: f64,
    /// Expected neighbours in other classes.
    pub degree_out: f64,
    pub feature_dim: usize,
    /// Probability that an active feature comes from the class's own block.
    pub feature_signal: f64,
    /// Active features per node.
    pub active_features: usize,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        Self {
            class_sizes: vec![60; 4],
            degree_in: 3.0,
            degree_out: 1.0,
            feature_dim: 40,
            feature_signal: 0.5,
            active_features: 6,
        }
    }
}

impl PlantedPartition {
    pub fn generate(&self, rng: &mut UplRng) -> Result<Dataset> {
        let k = self.class_sizes.len();
        if k == 0 || self.class_sizes.contains(&0) {
            return Err(UplError::invalid("every class needs at least one node"));
        }
        if self.feature_dim < k || self.active_features == 0 {
            return Err(UplError::invalid("need feature_dim ≥ classes and at least one active feature"));
        }
        let labels: Vec<usize> = self
            .class_sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
            .collect();
        let n = labels.len();
        let size = |c: usize| self.class_sizes[c] as f64;
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let p = if labels[u] == labels[v] {
                    self.degree_in / (size(labels[u]) - 1.0).max(1.0)
                } else {
                    self.degree_out / (n as f64 - size(labels[u])).max(1.0)
                };
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let block = self.feature_dim / k;
        let mut features = DenseMatrix::zeros(n, self.feature_dim);
        for (node, &class) in labels.iter().enumerate() {
            for _ in 0..self.active_features {
                let j = if rng.gen::<f64>() < self.feature_signal {
                    class * block + rng.gen_range(0..block)
                } else {
                    rng.gen_range(0..self.feature_dim)
                };
                features.set(node, j, 1.0);
            }
        }
        let graph = SparseGraph::from_edges(n, &edges)?;
        Dataset::new("planted", graph, features, labels, k, None)
    }
}
