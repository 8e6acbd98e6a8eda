#![allow(dead_code)]

use rand::Rng;
use upl_core::graph::{apply_filter, FilterKind, FilterMatrix, SparseGraph};
use upl_core::loss::{class_weights, weighted_ce_loss, ClassWeights, WeightScheme};
use upl_core::nn::{gcn_backward, gcn_forward, DenseMatrix, ForwardMode, GcnParams};
use upl_core::rng::{seeded, UplRng};

/// A small random GCN problem: graph, features, params, targets and mask.
pub struct GradInstance {
    pub filter: FilterMatrix,
    pub features: DenseMatrix,
    pub params: GcnParams,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
    pub weights: ClassWeights,
    pub dropout: f64,
    pub dropout_seed: u64,
}

pub fn erdos_renyi(n: usize, p: f64, rng: &mut UplRng) -> SparseGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    SparseGraph::from_edges(n, &edges).unwrap()
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut UplRng) -> DenseMatrix {
    let values = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    DenseMatrix::from_vec(rows, cols, values).unwrap()
}

pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = seeded(seed);
    let n = rng.gen_range(3..=8);
    let in_dim = rng.gen_range(2..=5);
    let hidden = rng.gen_range(2..=6);
    let classes = rng.gen_range(2..=4);
    let kinds = [FilterKind::SymNorm, FilterKind::MeanAgg, FilterKind::SumAgg];
    let kind = kinds[rng.gen_range(0..kinds.len())];
    let graph = erdos_renyi(n, 0.5, &mut rng);
    let filter = apply_filter(kind, &graph).unwrap();
    let features = random_matrix(n, in_dim, 1.0, &mut rng);
    let params = GcnParams {
        w1: random_matrix(in_dim, hidden, 1.0, &mut rng),
        b1: (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        w2: random_matrix(hidden, classes, 1.0, &mut rng),
        b2: (0..classes).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    };
    let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    mask[0] = true;
    let mut counts = vec![1; classes];
    for (i, &t) in targets.iter().enumerate() {
        if mask[i] {
            counts[t] += 1;
        }
    }
    let weights = class_weights(WeightScheme::BalancedSoftmax, &counts, 0.9).unwrap();
    GradInstance {
        filter,
        features,
        params,
        targets,
        mask,
        weights,
        dropout: if seed.is_multiple_of(2) { 0.0 } else { 0.3 },
        dropout_seed: seed ^ 0xdead_beef,
    }
}

impl GradInstance {
    fn mode_rng(&self) -> UplRng {
        seeded(self.dropout_seed)
    }

    pub fn loss(&self, params: &GcnParams) -> f64 {
        let mut rng = self.mode_rng();
        let mode = ForwardMode::Train {
            dropout: self.dropout,
            rng: &mut rng,
        };
        let cache = gcn_forward(params, &self.filter, &self.features, mode).unwrap();
        weighted_ce_loss(&cache.probabilities, &self.targets, &self.weights, &self.mask)
            .unwrap()
            .loss
    }

    pub fn analytic(&self) -> GcnParams {
        let mut rng = self.mode_rng();
        let mode = ForwardMode::Train {
            dropout: self.dropout,
            rng: &mut rng,
        };
        let cache = gcn_forward(&self.params, &self.filter, &self.features, mode).unwrap();
        let loss = weighted_ce_loss(&cache.probabilities, &self.targets, &self.weights, &self.mask).unwrap();
        gcn_backward(&cache, &self.params, &self.filter, &self.features, &loss.grad).unwrap()
    }

    /// Central differences over every parameter entry.
    pub fn numeric(&self, eps: f64) -> GcnParams {
        let mut grads = self.params.zeros_like();
        let mut probe = self.params.clone();
        for layer in 0..4 {
            for idx in 0..self.params.buffers()[layer].len() {
                let original = probe.buffers()[layer][idx];
                probe.buffers_mut()[layer][idx] = original + eps;
                let up = self.loss(&probe);
                probe.buffers_mut()[layer][idx] = original - eps;
                let down = self.loss(&probe);
                probe.buffers_mut()[layer][idx] = original;
                grads.buffers_mut()[layer][idx] = (up - down) / (2.0 * eps);
            }
        }
        grads
    }
}

/// Largest entrywise `|a − n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &GcnParams, numeric: &GcnParams, floor: f64) -> f64 {
    analytic
        .buffers()
        .iter()
        .zip(numeric.buffers())
        .flat_map(|(a, n)| a.iter().zip(n.iter()).map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)))
        .fold(0.0, f64::max)
}

/// Straight transcription of the two-class bound, independent of the library:
/// per class `R + (u_i/u)(B(√(2 ln2 d)+1)ΠU/(γ√(m+u)) · (D_i/D)^{d−1}
/// + c₀ Q √min(m,u) + √(S Q ln(1/δ)/2))`.
#[allow(clippy::too_many_arguments)]
pub fn bound_oracle(
    gamma: f64,
    delta: f64,
    depth: usize,
    b_f: f64,
    caps: &[f64],
    m: [usize; 2],
    u: [usize; 2],
    max_aug: [usize; 2],
    min_aug: usize,
    risks: [f64; 2],
) -> f64 {
    let c0 = (32.0 * (4.0f64.ln() + 1.0) / 3.0).sqrt();
    let u_total = (u[0] + u[1]) as f64;
    let mut total = 0.0;
    for i in 0..2 {
        let (mi, ui) = (m[i] as f64, u[i] as f64);
        let q = 1.0 / mi + 1.0 / ui;
        let big = if mi > ui { mi } else { ui };
        let s = (mi + ui) / ((mi + ui - 0.5) * (1.0 - 1.0 / (2.0 * big)));
        let mut cap_product = 1.0;
        for c in caps {
            cap_product *= c;
        }
        let mut degree = 1.0;
        for _ in 1..depth {
            degree *= max_aug[i] as f64 / min_aug as f64;
        }
        let c1 = b_f * ((2.0 * 2f64.ln() * depth as f64).sqrt() + 1.0);
        let rad = c1 * cap_product / (gamma * (mi + ui).sqrt()) * degree;
        let sample = c0 * q * (if mi < ui { mi } else { ui }).sqrt();
        let conf = (s * q * (1.0 / delta).ln() / 2.0).sqrt();
        total += risks[i] + ui / u_total * (rad + sample + conf);
    }
    total
}
