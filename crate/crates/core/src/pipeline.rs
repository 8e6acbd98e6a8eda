//! Baseline training and the uncertainty-aware pseudo-labeling loop.
//!
//! Every outer iteration trains a fresh GCN with balanced-softmax weights on
//! the true training labels plus the current pseudo-labels, scores every node
//! with SER, and replaces the pseudo-label set with the nodes that pass the
//! confidence band, the uncertainty quantile and the minority gate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Masks};
use crate::error::{Result, UplError};
use crate::graph::{apply_filter, FilterKind, FilterMatrix};
use crate::loss::{class_weights, weighted_ce_loss, ClassWeights, WeightScheme};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::nn::{gcn_backward, gcn_forward, AdamState, DenseMatrix, ForwardMode, GcnParams};
use crate::rng::{child, stream};
use crate::ser::{quantile_threshold, ser_uncertainty, PerturbationConfig, UncertaintyScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    Reweight,
    BalancedSoftmax,
    Upl,
}

impl Method {
    pub fn weight_scheme(self) -> WeightScheme {
        match self {
            Method::Vanilla => WeightScheme::Uniform,
            Method::Reweight => WeightScheme::InverseFrequency,
            Method::BalancedSoftmax | Method::Upl => WeightScheme::BalancedSoftmax,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Reweight => "reweight",
            Method::BalancedSoftmax => "balanced_softmax",
            Method::Upl => "upl",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = UplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Method::Vanilla),
            "reweight" => Ok(Method::Reweight),
            "balanced_softmax" => Ok(Method::BalancedSoftmax),
            "upl" => Ok(Method::Upl),
            other => Err(UplError::invalid(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// L2 penalty on the first-layer weight only.
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub filter: FilterKind,
    /// `α` of the balanced-softmax weights.
    pub alpha_balance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            patience: 100,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            hidden_dim: 64,
            seed: 0,
            filter: FilterKind::SymNorm,
            alpha_balance: 0.99,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(UplError::invalid("epochs must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(UplError::invalid("hidden_dim must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(UplError::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(UplError::invalid(format!("weight decay {} must be ≥ 0", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(UplError::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.alpha_balance > 0.0 && self.alpha_balance < 1.0) {
            return Err(UplError::invalid(format!("alpha_balance {} outside (0, 1)", self.alpha_balance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UplConfig {
    pub eta_l: f64,
    pub eta_u: f64,
    pub alpha_q: f64,
    pub outer_iterations: usize,
    pub perturbation: PerturbationConfig,
    pub training: TrainConfig,
}

impl Default for UplConfig {
    fn default() -> Self {
        Self {
            eta_l: 0.3,
            eta_u: 0.6,
            alpha_q: 0.9,
            outer_iterations: 10,
            perturbation: PerturbationConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

impl UplConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_l >= 0.0 && self.eta_l.is_finite() && self.eta_u.is_finite()) {
            return Err(UplError::invalid(format!("eta_l {} must be a non-negative real", self.eta_l)));
        }
        if self.eta_l > self.eta_u {
            return Err(UplError::invalid(format!(
                "eta_l {} exceeds eta_u {}",
                self.eta_l, self.eta_u
            )));
        }
        if !(self.alpha_q > 0.0 && self.alpha_q <= 1.0) {
            return Err(UplError::invalid(format!("alpha_q {} outside (0, 1]", self.alpha_q)));
        }
        if self.outer_iterations == 0 {
            return Err(UplError::invalid("outer_iterations must be at least 1"));
        }
        self.perturbation.validate()?;
        self.training.validate()
    }
}

/// A trained network together with the filter it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub filter: FilterKind,
    pub params: GcnParams,
}

/// Pseudo-labels as `(node, class)` pairs sorted by node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub entries: Vec<(usize, usize)>,
    /// Outer iteration that produced the set.
    pub iteration_produced: usize,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &(_, class) in &self.entries {
            counts[class] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Pseudo-labels per class used for training in this iteration.
    pub pseudo_label_counts: Vec<usize>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Metrics of the iteration's best epoch.
    pub best_epoch: usize,
    pub val_bacc: f64,
    pub val_macro_f1: f64,
    /// Holds the best model of the whole run.
    pub selected_best: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub iterations: Vec<IterationRecord>,
}

impl RunHistory {
    pub fn best(&self) -> Option<&IterationRecord> {
        self.iterations.iter().find(|r| r.selected_best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub model: Model,
    pub history: RunHistory,
    pub pseudo_labels: PseudoLabelSet,
}

/// `true` for classes whose count is below the mean count.
pub fn minority_mask(labeled_counts: &[usize]) -> Vec<bool> {
    if labeled_counts.is_empty() {
        return Vec::new();
    }
    let mean = labeled_counts.iter().sum::<usize>() as f64 / labeled_counts.len() as f64;
    labeled_counts.iter().map(|&c| (c as f64) < mean).collect()
}

fn argmax(row: &[f64]) -> (usize, f64) {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best })
}

/// Selects `v` iff `η_l ≤ max_c P(v) ≤ η_u`, `U(v) ≤ Q_{α_q}`, the argmax
/// class is a minority class and `v` is not excluded. The quantile is taken
/// over the scores of the non-excluded nodes.
pub fn select_pseudo_labels(
    probs: &DenseMatrix,
    scores: &UncertaintyScores,
    config: &UplConfig,
    minority: &[bool],
    excluded: &[bool],
) -> Result<PseudoLabelSet> {
    let n = probs.rows();
    if scores.values().len() != n || excluded.len() != n || minority.len() != probs.cols() {
        return Err(UplError::DimensionMismatch {
            context: "select_pseudo_labels",
            expected: format!("{n} scores and exclusion flags, {} minority flags", probs.cols()),
            actual: format!(
                "{} scores, {} exclusion flags, {} minority flags",
                scores.values().len(),
                excluded.len(),
                minority.len()
            ),
        });
    }
    let candidates: Vec<usize> = (0..n).filter(|&v| !excluded[v]).collect();
    if candidates.is_empty() || !minority.iter().any(|&m| m) {
        return Ok(PseudoLabelSet::default());
    }
    let pool: Vec<f64> = candidates.iter().map(|&v| scores.values()[v]).collect();
    let threshold = quantile_threshold(&pool, config.alpha_q)?;
    let entries = candidates
        .into_iter()
        .filter_map(|v| {
            let (class, confidence) = argmax(probs.row(v));
            let keep = confidence >= config.eta_l
                && confidence <= config.eta_u
                && scores.values()[v] <= threshold
                && minority[class];
            keep.then_some((v, class))
        })
        .collect();
    Ok(PseudoLabelSet {
        entries,
        iteration_produced: 0,
    })
}

struct Trained {
    params: GcnParams,
    record: IterationRecord,
    val_loss: f64,
}

fn divergence(iteration: usize, epoch: usize) -> impl Fn(UplError) -> UplError {
    move |err| {
        if err.is_divergence() {
            UplError::Divergence {
                iteration,
                epoch,
                reason: err.to_string(),
            }
        } else {
            err
        }
    }
}

/// `(a_bacc, a_loss)` beats `(b_bacc, b_loss)`: higher balanced accuracy, or
/// equal balanced accuracy and lower validation loss.
fn improves(a_bacc: f64, a_loss: f64, b_bacc: f64, b_loss: f64) -> bool {
    a_bacc > b_bacc || (a_bacc == b_bacc && a_loss < b_loss)
}

/// Full-batch training with early stopping on validation balanced accuracy.
#[allow(clippy::too_many_arguments)]
fn train_model(
    dataset: &Dataset,
    filter: &FilterMatrix,
    masks: &Masks,
    targets: &[usize],
    train_mask: &[bool],
    weights: &ClassWeights,
    config: &TrainConfig,
    iteration: usize,
) -> Result<Trained> {
    let features = &dataset.features;
    let uniform = ClassWeights::uniform(dataset.num_classes);
    let mut rng = child(config.seed, stream::TRAIN);
    let mut params = GcnParams::glorot(dataset.feature_dim(), config.hidden_dim, dataset.num_classes, &mut rng);
    let mut adam = AdamState::new(&params, config.learning_rate);

    let mut best: Option<(GcnParams, usize, f64, f64, f64)> = None;
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        let on_err = divergence(iteration, epoch);
        let mode = ForwardMode::Train {
            dropout: config.dropout,
            rng: &mut rng,
        };
        let cache = gcn_forward(&params, filter, features, mode).map_err(&on_err)?;
        let loss = weighted_ce_loss(&cache.probabilities, targets, weights, train_mask)?;
        if !loss.loss.is_finite() {
            return Err(on_err(UplError::NonFinite("training loss".into())));
        }
        let grads = gcn_backward(&cache, &params, filter, features, &loss.grad)?;
        adam.step(&mut params, &grads, config.weight_decay).map_err(&on_err)?;

        let eval = gcn_forward(&params, filter, features, ForwardMode::Eval).map_err(&on_err)?;
        let val_loss = weighted_ce_loss(&eval.probabilities, &dataset.labels, &uniform, &masks.val)?.loss;
        let predictions = eval.probabilities.argmax_rows();
        let confusion = ConfusionMatrix::new(&predictions, &dataset.labels, &masks.val, dataset.num_classes)?;
        let val_bacc = confusion.balanced_accuracy();
        train_curve.push(loss.loss);
        val_curve.push(val_loss);

        let better = match &best {
            None => true,
            Some((_, _, bacc, loss, _)) => improves(val_bacc, val_loss, *bacc, *loss),
        };
        if better {
            best = Some((params.clone(), epoch, val_bacc, val_loss, confusion.macro_f1()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (params, best_epoch, val_bacc, val_loss, val_macro_f1) =
        best.expect("at least one epoch always runs");
    log::debug!(
        "iteration {iteration}: {} epochs, best epoch {best_epoch}, val bAcc {val_bacc:.4}",
        train_curve.len()
    );
    Ok(Trained {
        params,
        val_loss,
        record: IterationRecord {
            iteration,
            pseudo_label_counts: vec![0; dataset.num_classes],
            train_loss: train_curve,
            val_loss: val_curve,
            best_epoch,
            val_bacc,
            val_macro_f1,
            selected_best: false,
        },
    })
}

fn validate_masks(dataset: &Dataset) -> Result<&Masks> {
    let masks = dataset.masks()?;
    for (name, mask) in [("train", &masks.train), ("val", &masks.val)] {
        if !mask.iter().any(|&m| m) {
            return Err(UplError::invalid(format!("{name} mask of dataset {} is empty", dataset.name)));
        }
    }
    Ok(masks)
}

/// Trains one model on the true training labels with the loss of `method`.
pub fn run_baseline(dataset: &Dataset, method: Method, config: &TrainConfig) -> Result<RunResult> {
    if method == Method::Upl {
        return Err(UplError::invalid("run_baseline does not run UPL; use run_upl"));
    }
    config.validate()?;
    let masks = validate_masks(dataset)?;
    let filter = apply_filter(config.filter, &dataset.graph)?;
    let counts = dataset.class_counts(&masks.train);
    let weights = class_weights(method.weight_scheme(), &counts, config.alpha_balance)?;
    let mut trained = train_model(dataset, &filter, masks, &dataset.labels, &masks.train, &weights, config, 0)?;
    trained.record.selected_best = true;
    Ok(RunResult {
        model: Model {
            filter: config.filter,
            params: trained.params,
        },
        history: RunHistory {
            iterations: vec![trained.record],
        },
        pseudo_labels: PseudoLabelSet::default(),
    })
}

/// Runs `config.outer_iterations` rounds of pseudo-labeling and returns the
/// model with the best validation balanced accuracy seen in any epoch of any
/// round.
pub fn run_upl(dataset: &Dataset, config: &UplConfig) -> Result<RunResult> {
    config.validate()?;
    let train_cfg = &config.training;
    let masks = validate_masks(dataset)?;
    let filter = apply_filter(train_cfg.filter, &dataset.graph)?;
    let n = dataset.num_nodes();
    let excluded = masks.labeled();
    let true_counts = dataset.class_counts(&masks.train);
    let minority = minority_mask(&true_counts);
    let mut seed_source = child(train_cfg.seed, stream::SER_SEED);

    let mut pseudo = PseudoLabelSet::default();
    let mut history = RunHistory::default();
    let mut best: Option<(GcnParams, f64, f64, usize)> = None;
    for iteration in 0..config.outer_iterations {
        let mut targets = dataset.labels.clone();
        let mut train_mask = masks.train.clone();
        for &(node, class) in &pseudo.entries {
            targets[node] = class;
            train_mask[node] = true;
        }
        let pseudo_counts = pseudo.class_counts(dataset.num_classes);
        let counts: Vec<usize> = true_counts.iter().zip(&pseudo_counts).map(|(a, b)| a + b).collect();
        let weights = class_weights(WeightScheme::BalancedSoftmax, &counts, train_cfg.alpha_balance)?;

        let mut trained = train_model(dataset, &filter, masks, &targets, &train_mask, &weights, train_cfg, iteration)?;
        trained.record.pseudo_label_counts = pseudo_counts;
        let better = match &best {
            None => true,
            Some((_, bacc, loss, _)) => improves(trained.record.val_bacc, trained.val_loss, *bacc, *loss),
        };
        if better {
            best = Some((trained.params.clone(), trained.record.val_bacc, trained.val_loss, iteration));
        }

        let ser_seed = seed_source.gen::<u64>() ^ config.perturbation.seed;
        pseudo = if minority.iter().any(|&m| m) {
            let perturbation = PerturbationConfig {
                seed: ser_seed,
                ..config.perturbation
            };
            let on_err = divergence(iteration, trained.record.best_epoch);
            let scores = ser_uncertainty(&trained.params, &dataset.graph, train_cfg.filter, &dataset.features, &perturbation)
                .map_err(&on_err)?;
            let probs = gcn_forward(&trained.params, &filter, &dataset.features, ForwardMode::Eval)
                .map_err(&on_err)?
                .probabilities;
            select_pseudo_labels(&probs, &scores, config, &minority, &excluded)?
        } else {
            PseudoLabelSet::default()
        };
        pseudo.iteration_produced = iteration;
        log::debug!("iteration {iteration}: {} pseudo-labels selected of {n} nodes", pseudo.len());
        history.iterations.push(trained.record);
    }
    let (params, _, _, best_iteration) = best.expect("at least one outer iteration always runs");
    history.iterations[best_iteration].selected_best = true;
    Ok(RunResult {
        model: Model {
            filter: train_cfg.filter,
            params,
        },
        history,
        pseudo_labels: pseudo,
    })
}

/// Metrics of `model` over the nodes selected by `mask`. The risk is the mean
/// cross-entropy over the mask.
pub fn evaluate(model: &Model, dataset: &Dataset, mask: &[bool]) -> Result<MetricsReport> {
    let filter = apply_filter(model.filter, &dataset.graph)?;
    let cache = gcn_forward(&model.params, &filter, &dataset.features, ForwardMode::Eval)?;
    let predictions = cache.probabilities.argmax_rows();
    let confusion = ConfusionMatrix::new(&predictions, &dataset.labels, mask, dataset.num_classes)?;
    let risk = weighted_ce_loss(
        &cache.probabilities,
        &dataset.labels,
        &ClassWeights::uniform(dataset.num_classes),
        mask,
    )?
    .loss;
    Ok(MetricsReport {
        balanced_accuracy: confusion.balanced_accuracy(),
        macro_f1: confusion.macro_f1(),
        per_class_recall: confusion.recalls(),
        risk,
        nodes: mask.iter().filter(|&&m| m).count(),
    })
}
