//! Class-imbalanced train/validation/test splits.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Masks};
use crate::error::{Result, UplError};
use crate::metrics::imbalance_ratio;
use crate::rng::UplRng;

/// How many training nodes each class receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainCounts {
    PerClass(Vec<usize>),
    /// The last `minority_classes` classes get `max(1, round(base / rho))`,
    /// the others `base`.
    Imbalanced {
        base: usize,
        rho: f64,
        minority_classes: usize,
    },
}

/// Where validation and test nodes come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValTestRule {
    /// Every non-training node, split 1:1 within each class.
    HalfRemainder,
    /// Fixed totals drawn from the non-training nodes, allocated to classes
    /// in proportion to their size. Everything else stays unlabeled.
    Fixed { val: usize, test: usize },
    /// Keep the dataset's own validation and test masks and draw training
    /// nodes from outside them.
    Dataset,
}

impl Default for ValTestRule {
    fn default() -> Self {
        ValTestRule::Fixed { val: 500, test: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: TrainCounts,
    #[serde(default)]
    pub val_test: ValTestRule,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    pub fn per_class(counts: Vec<usize>) -> Self {
        Self {
            train: TrainCounts::PerClass(counts),
            val_test: ValTestRule::default(),
            seed: 0,
        }
    }

    /// Resolves the per-class training counts for `num_classes` classes.
    pub fn train_counts(&self, num_classes: usize) -> Result<Vec<usize>> {
        let counts = match &self.train {
            TrainCounts::PerClass(counts) => {
                if counts.len() != num_classes {
                    return Err(UplError::invalid(format!(
                        "{} training counts given for {num_classes} classes",
                        counts.len()
                    )));
                }
                counts.clone()
            }
            TrainCounts::Imbalanced {
                base,
                rho,
                minority_classes,
            } => {
                if !(*rho >= 1.0) || !rho.is_finite() {
                    return Err(UplError::invalid(format!("imbalance ratio {rho} must be ≥ 1")));
                }
                if *minority_classes > num_classes {
                    return Err(UplError::invalid(format!(
                        "{minority_classes} minority classes requested for {num_classes} classes"
                    )));
                }
                let small = ((*base as f64 / rho).round() as usize).max(1);
                (0..num_classes)
                    .map(|c| if c + minority_classes >= num_classes { small } else { *base })
                    .collect()
            }
        };
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(UplError::ZeroClassCount { class });
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub masks: Masks,
    pub train_counts: Vec<usize>,
    /// Realised `max / min` of the training counts.
    pub rho: f64,
}

fn take_random(pool: &[usize], amount: usize, rng: &mut UplRng) -> Vec<usize> {
    let mut picked: Vec<usize> = sample(rng, pool.len(), amount).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

/// Largest-remainder allocation of `total` across classes proportional to `sizes`.
fn proportional(total: usize, sizes: &[usize]) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / sum as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = total - alloc.iter().sum::<usize>();
    for c in order {
        if left == 0 {
            break;
        }
        if alloc[c] < sizes[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Samples a training mask with the requested per-class counts (uniformly
/// without replacement within each class), then fills validation and test
/// according to `spec.val_test`.
pub fn make_imbalanced_split(dataset: &Dataset, spec: &SplitSpec, rng: &mut UplRng) -> Result<Split> {
    let n = dataset.num_nodes();
    let k = dataset.num_classes;
    let counts = spec.train_counts(k)?;

    let reserved = match spec.val_test {
        ValTestRule::Dataset => {
            let masks = dataset.masks()?;
            Some((masks.val.clone(), masks.test.clone()))
        }
        _ => None,
    };
    let mut eligible: Vec<Vec<usize>> = vec![Vec::new(); k];
    for node in 0..n {
        let free = reserved.as_ref().is_none_or(|(val, test)| !val[node] && !test[node]);
        if free {
            eligible[dataset.labels[node]].push(node);
        }
    }

    let mut masks = Masks::empty(n);
    let mut remainder: Vec<Vec<usize>> = Vec::with_capacity(k);
    for (class, pool) in eligible.iter().enumerate() {
        if pool.len() < counts[class] {
            return Err(UplError::invalid(format!(
                "class {class} has {} available nodes, {} requested for training",
                pool.len(),
                counts[class]
            )));
        }
        let train = take_random(pool, counts[class], rng);
        for &node in &train {
            masks.train[node] = true;
        }
        let mut rest: Vec<usize> = pool.iter().copied().filter(|&v| !masks.train[v]).collect();
        rest.shuffle(rng);
        remainder.push(rest);
    }

    match spec.val_test {
        ValTestRule::HalfRemainder => {
            for rest in &remainder {
                let half = rest.len() / 2;
                for &node in &rest[..half] {
                    masks.val[node] = true;
                }
                for &node in &rest[half..] {
                    masks.test[node] = true;
                }
            }
        }
        ValTestRule::Fixed { val, test } => {
            let sizes: Vec<usize> = remainder.iter().map(Vec::len).collect();
            let available: usize = sizes.iter().sum();
            if val + test > available {
                return Err(UplError::invalid(format!(
                    "{val} validation + {test} test nodes requested, {available} available"
                )));
            }
            let val_alloc = proportional(val, &sizes);
            let left: Vec<usize> = sizes.iter().zip(&val_alloc).map(|(s, v)| s - v).collect();
            let test_alloc = proportional(test, &left);
            for (class, rest) in remainder.iter().enumerate() {
                let (v, t) = (val_alloc[class], test_alloc[class]);
                for &node in &rest[..v] {
                    masks.val[node] = true;
                }
                for &node in &rest[v..v + t] {
                    masks.test[node] = true;
                }
            }
        }
        ValTestRule::Dataset => {
            if let Some((val, test)) = reserved {
                masks.val = val;
                masks.test = test;
            }
        }
    }
    masks.validate(n)?;
    let rho = imbalance_ratio(&counts)?;
    Ok(Split {
        masks,
        train_counts: counts,
        rho,
    })
}
