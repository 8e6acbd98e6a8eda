//! Undirected graphs in CSR form and the graph filters built from them.
//!
//! A [`SparseGraph`] stores the adjacency `A` of a simple undirected graph.
//! [`apply_filter`] turns it into one of the aggregation operators used by
//! message passing:
//!
//! | kind          | operator                 |
//! |---------------|--------------------------|
//! | `SymNorm`     | `D̃^{-1/2} (A + I) D̃^{-1/2}` |
//! | `RandomWalk`  | `D^{-1} A + I`           |
//! | `MeanAgg`     | `D̃^{-1} (A + I)`          |
//! | `SumAgg`      | `A + I`                  |
//!
//! `D̃` is the degree matrix of `A + I`, i.e. the augmented degree `deg + 1`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UplError};

/// Adjacency of a simple undirected graph.
///
/// Both orientations of every edge are stored, rows are sorted, and there are
/// no self-loops or duplicates. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    edge_count: usize,
}

impl SparseGraph {
    /// Builds a graph from an edge list. Orientation is ignored, duplicates
    /// collapse and self-loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(UplError::invalid("graph must have at least one node"));
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            for index in [u, v] {
                if index >= num_nodes {
                    return Err(UplError::NodeOutOfRange { index, num_nodes });
                }
            }
            if u != v {
                rows[u].push(v);
                rows[v].push(u);
            }
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_indices.extend_from_slice(row);
            row_offsets.push(col_indices.len());
        }
        let edge_count = col_indices.len() / 2;
        Ok(Self {
            num_nodes,
            row_offsets,
            col_indices,
            edge_count,
        })
    }

    pub fn empty(num_nodes: usize) -> Result<Self> {
        Self::from_edges(num_nodes, &[])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[node]..self.row_offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.row_offsets[node + 1] - self.row_offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|u| self.degree(u)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && v < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in lexicographic order.
    /// The position in this sequence is the edge's canonical id.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Copy of the graph with the given undirected edges deleted (both
    /// orientations). Pairs that are not edges are ignored.
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> SparseGraph {
        if removed.is_empty() {
            return self.clone();
        }
        let removed: HashSet<(usize, usize)> =
            removed.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        let mut row_offsets = Vec::with_capacity(self.num_nodes + 1);
        let mut col_indices = Vec::with_capacity(self.col_indices.len());
        row_offsets.push(0);
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if !removed.contains(&(u.min(v), u.max(v))) {
                    col_indices.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        let edge_count = col_indices.len() / 2;
        SparseGraph {
            num_nodes: self.num_nodes,
            row_offsets,
            col_indices,
            edge_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[default]
    SymNorm,
    RandomWalk,
    MeanAgg,
    SumAgg,
}

impl std::str::FromStr for FilterKind {
    type Err = UplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym_norm" => Ok(FilterKind::SymNorm),
            "random_walk" => Ok(FilterKind::RandomWalk),
            "mean_agg" => Ok(FilterKind::MeanAgg),
            "sum_agg" => Ok(FilterKind::SumAgg),
            other => Err(UplError::invalid(format!("unknown filter kind `{other}`"))),
        }
    }
}

/// Square sparse operator in CSR layout, one value per stored entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    kind: FilterKind,
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl FilterMatrix {
    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    /// Rows and columns (the matrix is square).
    pub fn dim(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Sum of absolute values in row `i`.
    pub fn abs_row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v.abs()).sum()
    }
}

/// Builds the requested filter from `graph`.
///
/// Every filter stores the pattern of `A + I`. Only the random-walk filter
/// rejects isolated nodes, since it needs `D^{-1}` of the raw degree.
pub fn apply_filter(kind: FilterKind, graph: &SparseGraph) -> Result<FilterMatrix> {
    let n = graph.num_nodes();
    let degrees = graph.degrees();
    if kind == FilterKind::RandomWalk {
        if let Some(node) = degrees.iter().position(|&d| d == 0) {
            return Err(UplError::IsolatedNode { node });
        }
    }
    let inv_sqrt_aug: Vec<f64> = degrees
        .iter()
        .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(graph.col_indices().len() + n);
    let mut values = Vec::with_capacity(graph.col_indices().len() + n);
    row_offsets.push(0);
    for i in 0..n {
        let neighbors = graph.neighbors(i);
        let split = neighbors.partition_point(|&j| j < i);
        let cols = neighbors[..split]
            .iter()
            .copied()
            .chain(std::iter::once(i))
            .chain(neighbors[split..].iter().copied());
        for j in cols {
            let value = match kind {
                FilterKind::SymNorm => inv_sqrt_aug[i] * inv_sqrt_aug[j],
                FilterKind::RandomWalk => {
                    if i == j {
                        1.0
                    } else {
                        1.0 / degrees[i] as f64
                    }
                }
                FilterKind::MeanAgg => 1.0 / (degrees[i] + 1) as f64,
                FilterKind::SumAgg => 1.0,
            };
            col_indices.push(j);
            values.push(value);
        }
        row_offsets.push(col_indices.len());
    }
    Ok(FilterMatrix {
        kind,
        num_nodes: n,
        row_offsets,
        col_indices,
        values,
    })
}

/// Per-class degree statistics on the augmented adjacency `A + I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub per_class_max_aug_degree: Vec<usize>,
    pub per_class_min_aug_degree: Vec<usize>,
    pub global_min_aug_degree: usize,
    /// `m_i`: labeled nodes per class.
    pub labeled_counts: Vec<usize>,
    /// `u_i`: unlabeled nodes per class.
    pub unlabeled_counts: Vec<usize>,
}

/// Augmented-degree statistics per class.
///
/// `labels` must give a class for every node (ground truth for unlabeled
/// nodes). Maxima and minima are taken over all nodes of a class, the global
/// minimum over every node of the graph.
pub fn class_degree_stats(
    graph: &SparseGraph,
    labels: &[usize],
    num_classes: usize,
    labeled_mask: &[bool],
    unlabeled_mask: &[bool],
) -> Result<DegreeStats> {
    let n = graph.num_nodes();
    for (name, len) in [
        ("labels", labels.len()),
        ("labeled_mask", labeled_mask.len()),
        ("unlabeled_mask", unlabeled_mask.len()),
    ] {
        if len != n {
            return Err(UplError::DimensionMismatch {
                context: "class_degree_stats",
                expected: format!("{name} of length {n}"),
                actual: len.to_string(),
            });
        }
    }
    let mut max_aug = vec![0usize; num_classes];
    let mut min_aug = vec![usize::MAX; num_classes];
    let mut members = vec![0usize; num_classes];
    let mut labeled_counts = vec![0usize; num_classes];
    let mut unlabeled_counts = vec![0usize; num_classes];
    let mut global_min = usize::MAX;
    for node in 0..n {
        let class = labels[node];
        if class >= num_classes {
            return Err(UplError::invalid(format!(
                "label {class} of node {node} outside [0, {num_classes})"
            )));
        }
        let aug = graph.degree(node) + 1;
        max_aug[class] = max_aug[class].max(aug);
        min_aug[class] = min_aug[class].min(aug);
        global_min = global_min.min(aug);
        members[class] += 1;
        if labeled_mask[node] {
            labeled_counts[class] += 1;
        }
        if unlabeled_mask[node] {
            unlabeled_counts[class] += 1;
        }
    }
    if let Some(class) = members.iter().position(|&c| c == 0) {
        return Err(UplError::EmptyClass { class });
    }
    Ok(DegreeStats {
        per_class_max_aug_degree: max_aug,
        per_class_min_aug_degree: min_aug,
        global_min_aug_degree: global_min,
        labeled_counts,
        unlabeled_counts,
    })
}

/// Row-wise infinity norm of `filter` restricted to rows of nodes in `class_id`.
pub fn filter_class_inf_norm(filter: &FilterMatrix, labels: &[usize], class_id: usize) -> Result<f64> {
    if labels.len() != filter.dim() {
        return Err(UplError::DimensionMismatch {
            context: "filter_class_inf_norm",
            expected: format!("{} labels", filter.dim()),
            actual: labels.len().to_string(),
        });
    }
    labels
        .iter()
        .enumerate()
        .filter(|&(_, &label)| label == class_id)
        .map(|(i, _)| filter.abs_row_sum(i))
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
        .ok_or(UplError::EmptyClass { class: class_id })
}
