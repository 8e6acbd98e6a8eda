use upl_core::graph::SparseGraph;
use upl_core::rng::seeded;
use upl_core::ser::sample_removed_edges;

#[test]
fn single_removal_follows_degree_weights() {
    let g = SparseGraph::from_edges(7, &[(0, 1), (0, 2), (0, 3), (1, 2), (3, 4), (5, 6)]).unwrap();
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let weights: Vec<f64> = edges.iter().map(|&(u, v)| (g.degree(u) + g.degree(v)) as f64).collect();
    assert_eq!(weights, vec![5.0, 5.0, 5.0, 4.0, 3.0, 2.0]);
    let total: f64 = weights.iter().sum();
    let draws = 20_000;
    let mut counts = vec![0usize; edges.len()];
    let mut rng = seeded(5);
    for _ in 0..draws {
        let removed = sample_removed_edges(&g, 1, &mut rng);
        assert_eq!(removed.len(), 1);
        counts[edges.iter().position(|e| *e == removed[0]).unwrap()] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        let p = weights[i] / total;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((c as f64 / draws as f64 - p).abs() < 5.0 * sd, "edge {i}");
    }
}

#[test]
fn heavier_edges_removed_first_more_often() {
    // star centre edges outweigh the pendant pair
    let g = SparseGraph::from_edges(6, &[(0, 1), (0, 2), (0, 3), (4, 5)]).unwrap();
    let mut rng = seeded(1);
    let mut pendant = 0;
    for _ in 0..5000 {
        if sample_removed_edges(&g, 2, &mut rng).contains(&(4, 5)) {
            pendant += 1;
        }
    }
    // P(pendant in a 2-draw) = 2/14 + Σ (4/14)(2/10) = 1/7 + 12/70 ≈ 0.314
    let freq = pendant as f64 / 5000.0;
    assert!((freq - 0.3143).abs() < 0.03, "{freq}");
}
