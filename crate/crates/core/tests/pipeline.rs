use std::collections::HashSet;

use upl_core::data::Dataset;
use upl_core::graph::{FilterKind, SparseGraph};
use upl_core::nn::{DenseMatrix, GcnParams};
use upl_core::pipeline::{evaluate, run_baseline, run_upl, Method, Model, UplConfig};
use upl_core::rng::seeded;
use upl_core::split::{make_imbalanced_split, SplitSpec, TrainCounts, ValTestRule};
use upl_core::synthetic::PlantedPartition;

fn dataset(counts: Vec<usize>, seed: u64) -> Dataset {
    let generator = PlantedPartition {
        class_sizes: vec![50; counts.len()],
        feature_dim: 30,
        ..PlantedPartition::default()
    };
    let d = generator.generate(&mut seeded(seed)).unwrap().row_normalized();
    let spec = SplitSpec {
        train: TrainCounts::PerClass(counts),
        val_test: ValTestRule::Fixed { val: 30, test: 40 },
        seed: 0,
    };
    let split = make_imbalanced_split(&d, &spec, &mut seeded(seed + 1)).unwrap();
    d.with_masks(split.masks).unwrap()
}

fn quick_config() -> UplConfig {
    let mut config = UplConfig::default();
    config.outer_iterations = 3;
    config.training.epochs = 60;
    config.training.patience = 20;
    config.training.hidden_dim = 16;
    config.perturbation.t = 10;
    config.perturbation.s_k = 10;
    config
}

#[test]
fn empty_band_equals_balanced_softmax_baseline() {
    let d = dataset(vec![10, 10, 2], 3);
    let mut config = quick_config();
    config.eta_l = 1.01;
    config.eta_u = 1.01;
    let upl = run_upl(&d, &config).unwrap();
    let baseline = run_baseline(&d, Method::BalancedSoftmax, &config.training).unwrap();
    assert_eq!(upl.model, baseline.model);
    assert!(upl.pseudo_labels.is_empty());
    assert_eq!(upl.history.iterations.len(), 3);
}

#[test]
fn balanced_split_equals_balanced_softmax_baseline() {
    let d = dataset(vec![6, 6, 6], 4);
    let mut config = quick_config();
    config.eta_l = 0.0;
    config.eta_u = 1.0;
    config.alpha_q = 1.0;
    let upl = run_upl(&d, &config).unwrap();
    let baseline = run_baseline(&d, Method::BalancedSoftmax, &config.training).unwrap();
    assert_eq!(upl.model, baseline.model);
}

#[test]
fn pseudo_labels_respect_invariants_and_runs_are_deterministic() {
    let d = dataset(vec![10, 10, 2], 5);
    let mut config = quick_config();
    config.eta_l = 0.0;
    config.eta_u = 1.0;
    let a = run_upl(&d, &config).unwrap();
    let b = run_upl(&d, &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);

    let labeled = d.masks().unwrap().labeled();
    let nodes: HashSet<usize> = a.pseudo_labels.entries.iter().map(|e| e.0).collect();
    assert_eq!(nodes.len(), a.pseudo_labels.len());
    assert!(!a.pseudo_labels.is_empty());
    for &(node, class) in &a.pseudo_labels.entries {
        assert!(!labeled[node]);
        assert_eq!(class, 2, "only the minority class may be pseudo-labelled");
    }
    assert_eq!(a.history.iterations.iter().filter(|r| r.selected_best).count(), 1);
}

#[test]
fn pseudo_label_set_is_replaced_each_iteration() {
    let d = dataset(vec![10, 10, 2], 6);
    let mut config = quick_config();
    config.eta_l = 0.0;
    config.eta_u = 1.0;
    config.outer_iterations = 2;
    let two = run_upl(&d, &config).unwrap();
    config.outer_iterations = 3;
    let three = run_upl(&d, &config).unwrap();
    // iteration 2 trains on exactly the set produced by iteration 1
    assert_eq!(three.history.iterations[2].pseudo_label_counts, two.pseudo_labels.class_counts(3));
    for j in 0..2 {
        let (mut a, mut b) = (three.history.iterations[j].clone(), two.history.iterations[j].clone());
        a.selected_best = false;
        b.selected_best = false;
        assert_eq!(a, b, "iteration {j} must not depend on later iterations");
    }
}

#[test]
fn raising_alpha_q_never_shrinks_the_selection() {
    let d = dataset(vec![10, 10, 2], 7);
    let mut config = quick_config();
    config.outer_iterations = 1;
    config.eta_l = 0.0;
    config.eta_u = 1.0;
    let mut previous = 0;
    for alpha_q in [0.2, 0.5, 0.8, 1.0] {
        config.alpha_q = alpha_q;
        let size = run_upl(&d, &config).unwrap().pseudo_labels.len();
        assert!(size >= previous, "alpha_q {alpha_q}: {size} < {previous}");
        previous = size;
    }
}

#[test]
fn baselines_differ_only_in_weights() {
    let d = dataset(vec![10, 10, 2], 8);
    let config = quick_config().training;
    let vanilla = run_baseline(&d, Method::Vanilla, &config).unwrap();
    let reweight = run_baseline(&d, Method::Reweight, &config).unwrap();
    assert_ne!(vanilla.model, reweight.model);
    assert!(run_baseline(&d, Method::Upl, &config).is_err());
}

fn one_hot_dataset(labels: Vec<usize>, k: usize) -> Dataset {
    let n = labels.len();
    let mut features = DenseMatrix::zeros(n, k);
    for (i, &y) in labels.iter().enumerate() {
        features.set(i, y, 1.0);
    }
    Dataset::new("one-hot", SparseGraph::empty(n).unwrap(), features, labels, k, None).unwrap()
}

#[test]
fn evaluate_examples() {
    let labels = vec![0, 1, 2, 1, 0];
    let d = one_hot_dataset(labels.clone(), 3);
    let mut w2 = DenseMatrix::identity(3);
    w2.values_mut().iter_mut().for_each(|v| *v *= 50.0);
    let perfect = Model {
        filter: FilterKind::SumAgg,
        params: GcnParams {
            w1: DenseMatrix::identity(3),
            b1: vec![0.0; 3],
            w2,
            b2: vec![0.0; 3],
        },
    };
    let all = vec![true; 5];
    let report = evaluate(&perfect, &d, &all).unwrap();
    assert_eq!(report.balanced_accuracy, 1.0);
    assert_eq!(report.macro_f1, 1.0);
    assert!(report.risk <= 1e-10);

    let constant = Model {
        filter: FilterKind::SumAgg,
        params: GcnParams {
            w1: DenseMatrix::zeros(3, 3),
            b1: vec![0.0; 3],
            w2: DenseMatrix::zeros(3, 3),
            b2: vec![1.0, 0.0, 0.0],
        },
    };
    let two_class = vec![true, true, false, true, true];
    let report = evaluate(&constant, &d, &two_class).unwrap();
    assert_eq!(report.balanced_accuracy, 0.5);
    // every node has p = (e, 1, 1) / (e + 2)
    let e = std::f64::consts::E;
    let expected = (2.0 * -(e / (e + 2.0)).ln() + 2.0 * -(1.0 / (e + 2.0)).ln()) / 4.0;
    assert!((report.risk - expected).abs() < 1e-12);
    assert!(evaluate(&constant, &d, &[false; 5]).is_err());
}
