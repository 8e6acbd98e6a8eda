//! Generalization-bound calculator for two-class transductive node
//! classification under class imbalance.
//!
//! The total is a diagnostic: at realistic sample sizes it is usually above 1.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, UplError};
use crate::graph::{apply_filter, class_degree_stats, filter_class_inf_norm, FilterKind};
use crate::loss::gamma_margin_loss;
use crate::nn::{gcn_forward, ForwardMode, GcnParams};
use crate::pipeline::Model;

/// `c₀ = √(32 ln(4e) / 3)`.
pub fn c0() -> f64 {
    (32.0 * (4.0 * std::f64::consts::E).ln() / 3.0).sqrt()
}

/// Upper bound on the per-class infinity norm of the symmetric normalized
/// filter: `√(max_aug_degree_class / min_aug_degree_global)`.
pub fn lemma1_bound(max_aug_degree_class: usize, min_aug_degree_global: usize) -> Result<f64> {
    if max_aug_degree_class == 0 || min_aug_degree_global == 0 {
        return Err(UplError::invalid("augmented degrees must be at least 1"));
    }
    Ok((max_aug_degree_class as f64 / min_aug_degree_global as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Constants {
    /// `1/u + 1/m`.
    pub q: f64,
    /// `(m+u) / ((m+u−½)(1 − 1/(2 max(m,u))))`.
    pub s: f64,
    pub c0: f64,
}

pub fn prop1_constants(m: usize, u: usize) -> Result<Prop1Constants> {
    if m == 0 || u == 0 {
        return Err(UplError::invalid(format!("labeled and unlabeled counts must be positive (m={m}, u={u})")));
    }
    let (mf, uf) = (m as f64, u as f64);
    let total = mf + uf;
    Ok(Prop1Constants {
        q: 1.0 / uf + 1.0 / mf,
        s: total / ((total - 0.5) * (1.0 - 1.0 / (2.0 * mf.max(uf)))),
        c0: c0(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub gamma: f64,
    pub delta: f64,
    pub depth: usize,
    /// `B_f`: radius of the ball containing the feature vectors.
    pub feature_radius: f64,
    /// `U_F(j)`: Frobenius-norm cap of layer `j`.
    pub frobenius_caps: Vec<f64>,
    pub labeled_counts: Vec<usize>,
    pub unlabeled_counts: Vec<usize>,
    /// Largest `deg + 1` within each class.
    pub max_aug_degree: Vec<usize>,
    /// Smallest `deg + 1` over the whole graph.
    pub min_aug_degree: usize,
    /// Parameter of the three-valued Rademacher signs. Defaults to
    /// `m_i u_i / (m_i + u_i)²` per class. It does not enter the bound.
    #[serde(default)]
    pub rademacher_p: Option<f64>,
}

impl BoundInputs {
    pub fn num_classes(&self) -> usize {
        self.labeled_counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(UplError::invalid(format!("{name} must be positive and finite, got {x}")))
            }
        };
        positive("gamma", self.gamma)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(UplError::invalid(format!("delta {} outside (0, 1)", self.delta)));
        }
        if self.depth == 0 {
            return Err(UplError::invalid("depth must be at least 1"));
        }
        positive("feature radius", self.feature_radius)?;
        if self.frobenius_caps.len() != self.depth {
            return Err(UplError::DimensionMismatch {
                context: "frobenius caps",
                expected: format!("{} caps (one per layer)", self.depth),
                actual: self.frobenius_caps.len().to_string(),
            });
        }
        for &cap in &self.frobenius_caps {
            if !(cap >= 0.0 && cap.is_finite()) {
                return Err(UplError::invalid(format!("Frobenius cap {cap} must be ≥ 0")));
            }
        }
        let k = self.num_classes();
        if self.unlabeled_counts.len() != k || self.max_aug_degree.len() != k {
            return Err(UplError::DimensionMismatch {
                context: "bound inputs",
                expected: format!("{k} unlabeled counts and degrees"),
                actual: format!("{} and {}", self.unlabeled_counts.len(), self.max_aug_degree.len()),
            });
        }
        if self.min_aug_degree == 0 || self.max_aug_degree.iter().any(|&d| d < self.min_aug_degree) {
            return Err(UplError::invalid("augmented degrees must satisfy 1 ≤ min ≤ class max"));
        }
        if let Some(class) = (0..k).find(|&c| self.labeled_counts[c] == 0 || self.unlabeled_counts[c] == 0) {
            return Err(UplError::ZeroClassCount { class });
        }
        if let Some(p) = self.rademacher_p {
            if !(0.0..=0.5).contains(&p) {
                return Err(UplError::invalid(format!("rademacher_p {p} outside [0, 1/2]")));
            }
        }
        Ok(())
    }

    fn class(&self, class_id: usize) -> Result<()> {
        if class_id >= self.num_classes() {
            return Err(UplError::invalid(format!(
                "class {class_id} outside [0, {})",
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// `C₁ = B_f (√(2 ln 2 · d) + 1)`.
fn c1(inputs: &BoundInputs) -> f64 {
    inputs.feature_radius * ((2.0 * std::f64::consts::LN_2 * inputs.depth as f64).sqrt() + 1.0)
}

/// Bound on the transductive Rademacher complexity of class `class_id`:
/// `C₁ ‖G[i]‖_∞^{2(d−1)} Π_j U_F(j) / √(m_i + u_i)`.
pub fn prop2_rademacher_bound(inputs: &BoundInputs, class_inf_norm: f64, class_id: usize) -> Result<f64> {
    inputs.validate()?;
    inputs.class(class_id)?;
    let exponent = 2 * (inputs.depth as i32 - 1);
    let caps: f64 = inputs.frobenius_caps.iter().product();
    let size = (inputs.labeled_counts[class_id] + inputs.unlabeled_counts[class_id]) as f64;
    Ok(c1(inputs) * class_inf_norm.powi(exponent) * caps / size.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTerms {
    pub class: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    /// `u_i / u`.
    pub weight: f64,
    pub empirical_margin_risk: f64,
    /// `((deg_i^max + 1) / (deg^min + 1))^{d−1}`.
    pub degree_factor: f64,
    /// `C₁ Π U_F / (γ √(m_i+u_i))` times the degree factor.
    pub rademacher_term: f64,
    pub q: f64,
    pub s: f64,
    /// `c₀ Q_i √min(m_i, u_i)`.
    pub sample_term: f64,
    /// `√(S_i Q_i ln(1/δ) / 2)`.
    pub confidence_term: f64,
    pub rademacher_p: f64,
    pub subtotal: f64,
    /// Filled in by [`pair_bound_report`].
    pub lemma1_bound: Option<f64>,
    pub measured_inf_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub c0: f64,
    pub classes: Vec<ClassTerms>,
    pub total: f64,
    /// `total > 1`: the bound says nothing about a 0-1 risk.
    pub vacuous: bool,
    /// 0-1 error on the unlabeled nodes, when a model was supplied.
    pub observed_true_risk: Option<f64>,
    /// Original class ids when the report comes from a class pair.
    pub class_pair: Option<(usize, usize)>,
}

/// Assembles the two-class population-risk bound:
/// `Σ_i R_γ,i + (u_i/u) (Rad_i/γ + c₀ Q_i √min(m_i,u_i) + √(S_i Q_i ln(1/δ)/2))`,
/// with `Rad_i` carrying the degree factor.
pub fn theorem1_bound(inputs: &BoundInputs, empirical_margin_risks: &[f64]) -> Result<BoundReport> {
    inputs.validate()?;
    if inputs.num_classes() != 2 {
        return Err(UplError::invalid(format!(
            "the bound is stated for two classes, got {}; choose a class pair",
            inputs.num_classes()
        )));
    }
    if empirical_margin_risks.len() != 2 {
        return Err(UplError::DimensionMismatch {
            context: "theorem1_bound",
            expected: "2 empirical margin risks".into(),
            actual: empirical_margin_risks.len().to_string(),
        });
    }
    if let Some(&r) = empirical_margin_risks.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(UplError::invalid(format!("margin risk {r} outside [0, 1]")));
    }
    let u_total: usize = inputs.unlabeled_counts.iter().sum();
    let log_term = (1.0 / inputs.delta).ln();
    let classes: Vec<ClassTerms> = (0..2)
        .map(|i| {
            let (m, u) = (inputs.labeled_counts[i], inputs.unlabeled_counts[i]);
            let constants = prop1_constants(m, u)?;
            let lemma = lemma1_bound(inputs.max_aug_degree[i], inputs.min_aug_degree)?;
            let degree_factor = (inputs.max_aug_degree[i] as f64 / inputs.min_aug_degree as f64)
                .powi(inputs.depth as i32 - 1);
            let rademacher_term = prop2_rademacher_bound(inputs, lemma, i)? / inputs.gamma;
            let sample_term = constants.c0 * constants.q * (m.min(u) as f64).sqrt();
            let confidence_term = (constants.s * constants.q * log_term / 2.0).sqrt();
            let weight = u as f64 / u_total as f64;
            let (mf, uf) = (m as f64, u as f64);
            Ok(ClassTerms {
                class: i,
                labeled: m,
                unlabeled: u,
                weight,
                empirical_margin_risk: empirical_margin_risks[i],
                degree_factor,
                rademacher_term,
                q: constants.q,
                s: constants.s,
                sample_term,
                confidence_term,
                rademacher_p: inputs.rademacher_p.unwrap_or(mf * uf / (mf + uf).powi(2)),
                subtotal: empirical_margin_risks[i] + weight * (rademacher_term + sample_term + confidence_term),
                lemma1_bound: None,
                measured_inf_norm: None,
            })
        })
        .collect::<Result<_>>()?;
    let total: f64 = classes.iter().map(|c| c.subtotal).sum();
    if !total.is_finite() {
        return Err(UplError::NonFinite("bound total".into()));
    }
    Ok(BoundReport {
        inputs: inputs.clone(),
        c0: c0(),
        classes,
        total,
        vacuous: total > 1.0,
        observed_true_risk: None,
        class_pair: None,
    })
}

/// Frobenius norms of the layer weights, biases excluded.
pub fn frobenius_caps(params: &GcnParams) -> Vec<f64> {
    vec![params.w1.frobenius_norm(), params.w2.frobenius_norm()]
}

/// Mean γ-margin loss of `labels[i] · scores[i]` with labels in `{−1, +1}`.
pub fn empirical_gamma_margin_risk(scores: &[f64], labels: &[i8], gamma: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(UplError::EmptyMask);
    }
    if scores.len() != labels.len() {
        return Err(UplError::DimensionMismatch {
            context: "empirical_gamma_margin_risk",
            expected: format!("{} labels", scores.len()),
            actual: labels.len().to_string(),
        });
    }
    let mut total = 0.0;
    for (&s, &y) in scores.iter().zip(labels) {
        if y != 1 && y != -1 {
            return Err(UplError::invalid(format!("binary label must be ±1, got {y}")));
        }
        total += gamma_margin_loss(f64::from(y) * s, gamma)?;
    }
    Ok(total / scores.len() as f64)
}

/// Settings shared by every class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSettings {
    pub gamma: f64,
    pub delta: f64,
    pub depth: usize,
    /// Defaults to the largest feature-row ℓ2 norm.
    pub feature_radius: Option<f64>,
    /// Required when no model is given.
    pub frobenius_caps: Option<Vec<f64>>,
    /// Used when no model is given; defaults to 1, the largest possible
    /// γ-margin risk.
    pub margin_risks: Option<[f64; 2]>,
}

/// Builds and evaluates the bound for classes `a` (score sign +1) and `b`
/// (sign −1) of `dataset`. Labeled nodes are the training mask, unlabeled
/// nodes everything else. Degrees come from the full graph.
pub fn pair_bound_report(
    dataset: &Dataset,
    pair: (usize, usize),
    settings: &BoundSettings,
    model: Option<&Model>,
) -> Result<BoundReport> {
    let (a, b) = pair;
    let k = dataset.num_classes;
    if a == b || a >= k || b >= k {
        return Err(UplError::invalid(format!("invalid class pair ({a}, {b}) for {k} classes")));
    }
    let masks = dataset.masks()?;
    let unlabeled: Vec<bool> = masks.train.iter().map(|&t| !t).collect();
    let stats = class_degree_stats(&dataset.graph, &dataset.labels, k, &masks.train, &unlabeled)?;
    let filter = apply_filter(FilterKind::SymNorm, &dataset.graph)?;

    let frobenius = match (model, &settings.frobenius_caps) {
        (Some(model), _) => frobenius_caps(&model.params),
        (None, Some(caps)) => caps.clone(),
        (None, None) => {
            return Err(UplError::invalid("Frobenius caps are required when no model checkpoint is given"))
        }
    };
    let feature_radius = settings.feature_radius.unwrap_or_else(|| {
        (0..dataset.num_nodes())
            .map(|i| dataset.features.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    });
    let inputs = BoundInputs {
        gamma: settings.gamma,
        delta: settings.delta,
        depth: settings.depth,
        feature_radius,
        frobenius_caps: frobenius,
        labeled_counts: vec![stats.labeled_counts[a], stats.labeled_counts[b]],
        unlabeled_counts: vec![stats.unlabeled_counts[a], stats.unlabeled_counts[b]],
        max_aug_degree: vec![stats.per_class_max_aug_degree[a], stats.per_class_max_aug_degree[b]],
        min_aug_degree: stats.global_min_aug_degree,
        rademacher_p: None,
    };

    let (risks, observed) = match model {
        Some(model) => {
            let filter = apply_filter(model.filter, &dataset.graph)?;
            let logits = gcn_forward(&model.params, &filter, &dataset.features, ForwardMode::Eval)?.logits;
            let mut risks = [0.0; 2];
            for (slot, class) in [a, b].into_iter().enumerate() {
                let sign: i8 = if slot == 0 { 1 } else { -1 };
                let nodes: Vec<usize> = (0..dataset.num_nodes())
                    .filter(|&v| masks.train[v] && dataset.labels[v] == class)
                    .collect();
                let scores: Vec<f64> = nodes.iter().map(|&v| logits.get(v, a) - logits.get(v, b)).collect();
                risks[slot] = empirical_gamma_margin_risk(&scores, &vec![sign; scores.len()], settings.gamma)?;
            }
            let (mut errors, mut count) = (0usize, 0usize);
            for v in (0..dataset.num_nodes()).filter(|&v| unlabeled[v]) {
                let y = dataset.labels[v];
                if y == a || y == b {
                    let predicted_a = logits.get(v, a) - logits.get(v, b) > 0.0;
                    errors += usize::from(predicted_a != (y == a));
                    count += 1;
                }
            }
            (risks, (count > 0).then(|| errors as f64 / count as f64))
        }
        None => (settings.margin_risks.unwrap_or([1.0, 1.0]), None),
    };

    let mut report = theorem1_bound(&inputs, &risks)?;
    for (slot, class) in [a, b].into_iter().enumerate() {
        let terms = &mut report.classes[slot];
        terms.lemma1_bound = Some(lemma1_bound(inputs.max_aug_degree[slot], inputs.min_aug_degree)?);
        terms.measured_inf_norm = Some(filter_class_inf_norm(&filter, &dataset.labels, class)?);
    }
    report.observed_true_risk = observed;
    report.class_pair = Some(pair);
    Ok(report)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;

    fn toy() -> BoundInputs {
        BoundInputs {
            gamma: 1.0,
            delta: 0.1,
            depth: 2,
            feature_radius: 1.0,
            frobenius_caps: vec![1.0, 1.0],
            labeled_counts: vec![50, 5],
            unlabeled_counts: vec![500, 50],
            max_aug_degree: vec![3, 6],
            min_aug_degree: 1,
            rademacher_p: None,
        }
    }

    #[test]
    fn degree_ratio_examples() {
        assert_eq!(lemma1_bound(3, 3).unwrap(), 1.0);
        assert!((lemma1_bound(4, 2).unwrap() - 1.414_214).abs() < 1e-6);
        assert!(lemma1_bound(0, 1).is_err());
        assert!(lemma1_bound(2, 0).is_err());
    }

    #[test]
    fn sample_constant_examples() {
        assert!((c0() - 5.045_177).abs() < 1e-6);
        let k = prop1_constants(1000, 1000).unwrap();
        assert!((k.q - 0.002).abs() < 1e-15);
        assert!((k.s - 1.000_750).abs() < 1e-6);
        assert!(prop1_constants(1_000_000, 1_000_000).unwrap().s - 1.0 < 1e-5);
        assert!(prop1_constants(0, 3).is_err());
    }

    #[test]
    fn rademacher_examples() {
        let mut inputs = toy();
        inputs.depth = 1;
        inputs.frobenius_caps = vec![1.0];
        inputs.labeled_counts = vec![50, 50];
        inputs.unlabeled_counts = vec![50, 50];
        let r = prop2_rademacher_bound(&inputs, 7.0, 0).unwrap();
        assert!((r - 0.217_741).abs() < 1e-6);

        let base = toy();
        let mut doubled = toy();
        doubled.frobenius_caps = vec![2.0, 2.0];
        let ratio = prop2_rademacher_bound(&doubled, 1.3, 1).unwrap() / prop2_rademacher_bound(&base, 1.3, 1).unwrap();
        assert!((ratio - 4.0).abs() < 1e-12);
        assert!(prop2_rademacher_bound(&base, 1.5, 0).unwrap() > prop2_rademacher_bound(&base, 1.2, 0).unwrap());
    }

    #[test]
    fn total_bound_weights_and_monotone_degree() {
        let report = theorem1_bound(&toy(), &[0.1, 0.3]).unwrap();
        let weights: f64 = report.classes.iter().map(|c| c.weight).sum();
        assert!((weights - 1.0).abs() < 1e-15);
        assert!((report.total - report.classes.iter().map(|c| c.subtotal).sum::<f64>()).abs() < 1e-15);
        let mut higher = toy();
        higher.max_aug_degree[0] = 4;
        assert!(theorem1_bound(&higher, &[0.1, 0.3]).unwrap().total > report.total);
    }

    #[test]
    fn total_bound_rejects_more_than_two_classes() {
        let mut inputs = toy();
        inputs.labeled_counts.push(3);
        inputs.unlabeled_counts.push(3);
        inputs.max_aug_degree.push(2);
        assert!(theorem1_bound(&inputs, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let zero = GcnParams::zeros(2, 2, 2);
        assert_eq!(frobenius_caps(&zero), vec![0.0, 0.0]);
        let mut p = zero.clone();
        p.w1 = crate::nn::DenseMatrix::identity(2);
        assert!((frobenius_caps(&p)[0] - 1.414_214).abs() < 1e-6);
    }

    #[test]
    fn margin_risk_examples() {
        assert_eq!(empirical_gamma_margin_risk(&[2.0, 3.0], &[1, 1], 1.0).unwrap(), 0.0);
        assert_eq!(empirical_gamma_margin_risk(&[0.0, 0.0], &[1, -1], 1.0).unwrap(), 1.0);
        assert_eq!(empirical_gamma_margin_risk(&[2.0, -0.5], &[1, -1], 1.0).unwrap(), 0.25);
        assert!(empirical_gamma_margin_risk(&[], &[], 1.0).is_err());
        assert!(empirical_gamma_margin_risk(&[1.0], &[0], 1.0).is_err());
    }
}
