//! Vanilla, balanced-softmax and UPL on a planted-partition graph with three
//! minority classes.
//!
//! cargo run --release -p upl-core --example synthetic_comparison [seeds]

use std::time::Instant;

use upl_core::pipeline::{evaluate, run_baseline, run_upl, Method, UplConfig};
use upl_core::rng::{child, seeded, stream};
use upl_core::split::{make_imbalanced_split, SplitSpec, TrainCounts, ValTestRule};
use upl_core::synthetic::PlantedPartition;

fn main() -> upl_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let generator = PlantedPartition {
        class_sizes: vec![200; 7],
        degree_in: 3.0,
        degree_out: 1.5,
        feature_dim: 140,
        feature_signal: 0.25,
        active_features: 10,
    };
    for seed in 0..seeds {
        let base = generator.generate(&mut seeded(seed))?.row_normalized();
        let spec = SplitSpec {
            train: TrainCounts::PerClass(vec![20, 20, 20, 20, 2, 2, 2]),
            val_test: ValTestRule::Fixed { val: 300, test: 600 },
            seed,
        };
        let split = make_imbalanced_split(&base, &spec, &mut child(seed, stream::SPLIT))?;
        let dataset = base.with_masks(split.masks)?;
        let test = dataset.masks()?.test.clone();
        let mut config = UplConfig::default();
        config.training.seed = seed;

        for method in [Method::Vanilla, Method::BalancedSoftmax, Method::Upl] {
            let start = Instant::now();
            let result = match method {
                Method::Upl => run_upl(&dataset, &config)?,
                other => run_baseline(&dataset, other, &config.training)?,
            };
            let report = evaluate(&result.model, &dataset, &test)?;
            let pseudo = result.history.best().map_or(0, |r| r.pseudo_label_counts.iter().sum::<usize>());
            println!(
                "seed {seed} {:>16}: test bAcc {:.4}  macro-F1 {:.4}  pseudo-labels {pseudo:>4}  {:.1}s",
                method.name(),
                report.balanced_accuracy,
                report.macro_f1,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
