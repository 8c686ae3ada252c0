//! The three attack families of the evaluation protocol — gradient-based,
//! gradient-free, and random-noise — evaluated at one shared perturbation
//! energy budget.

use crate::error::{Error, Result};
use crate::modclass::{matched_norm_noise, PredictionOracle};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::util;
use crate::wireless::ConfusionMatrix;
use std::cell::Cell;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackFamily {
    GradientBased,
    GradientFree,
    RandomNoise,
}

impl AttackFamily {
    pub const ALL: [AttackFamily; 3] =
        [AttackFamily::GradientBased, AttackFamily::GradientFree, AttackFamily::RandomNoise];

    pub fn name(self) -> &'static str {
        match self {
            AttackFamily::GradientBased => "gradient-based",
            AttackFamily::GradientFree => "gradient-free",
            AttackFamily::RandomNoise => "random-noise",
        }
    }
}

/// Metric table reported per model condition (clean or under one family):
/// accuracy, macro precision/recall/F1, and per-class false positive /
/// false negative counts.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricTable {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub false_positives: Vec<u64>,
    pub false_negatives: Vec<u64>,
}

impl MetricTable {
    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        Self {
            accuracy: m.accuracy(),
            macro_precision: m.macro_precision(),
            macro_recall: m.macro_recall(),
            macro_f1: m.macro_f1(),
            false_positives: (0..m.classes()).map(|c| m.false_positives(c)).collect(),
            false_negatives: (0..m.classes()).map(|c| m.false_negatives(c)).collect(),
        }
    }
}

/// Result of evaluating one attack family, or the explicit reason it was
/// skipped. A skipped family is legal in a report only with its reason.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FamilyOutcome {
    pub family: AttackFamily,
    pub budget_power_ratio: Option<f64>,
    /// Accuracy under the family's strongest attack, when present.
    pub attacked_accuracy: Option<f64>,
    /// Per-attack attacked accuracy within the family (e.g. cw and fgsm).
    #[serde(default)]
    pub attacks: BTreeMap<String, f64>,
    pub metrics: Option<MetricTable>,
    /// Mean oracle queries per frame (gradient-free only).
    pub mean_queries: Option<f64>,
    pub skip_reason: Option<String>,
}

impl FamilyOutcome {
    pub fn skipped(family: AttackFamily, reason: &str) -> Self {
        Self {
            family,
            budget_power_ratio: None,
            attacked_accuracy: None,
            attacks: BTreeMap::new(),
            metrics: None,
            mean_queries: None,
            skip_reason: Some(reason.to_string()),
        }
    }

    pub fn is_present(&self) -> bool {
        self.skip_reason.is_none()
    }
}

/// Outcome of a gradient-free (prediction-oracle-only) attack on one input.
#[derive(Clone, Debug)]
pub struct RandomSearchRecord<T: Scalar> {
    pub success: bool,
    pub delta: Option<Tensor<T>>,
    pub queries_used: usize,
}

/// Black-box random-search evasion: best-of-`queries` random directions on
/// the L2 budget sphere, then greedy norm refinement of the first flipping
/// direction. Only the prediction oracle is consulted — the trait exposes no
/// weights or gradients, so this is black-box by construction.
pub fn random_search_attack<T: Scalar>(
    oracle: &dyn PredictionOracle<T>,
    input: &Tensor<T>,
    true_label: usize,
    budget_l2: f64,
    queries: usize,
    seed: u64,
) -> Result<RandomSearchRecord<T>> {
    if queries == 0 {
        return Ok(RandomSearchRecord { success: false, delta: None, queries_used: 0 });
    }
    if !(budget_l2 > 0.0) {
        return Err(Error::Config("random search needs a positive L2 budget".to_string()));
    }
    let mut queries_used = 0usize;
    let mut best_flip: Option<Tensor<T>> = None;
    let mut best_score = f64::INFINITY;
    let mut best_dir: Option<Tensor<T>> = None;

    for q in 0..queries {
        let candidate =
            matched_norm_noise::<T>(input.shape(), budget_l2, util::derive_seed(seed, &[q as u64]));
        let adv = input.add(&candidate)?;
        let scores = oracle.scores(&adv)?;
        queries_used += 1;
        if util::argmax(&scores) != true_label {
            best_flip = Some(candidate);
            break;
        }
        // Track the direction that most suppresses the true class, to report
        // a best-effort candidate even on failure.
        let margin = scores[true_label].to_f64_c();
        if margin < best_score {
            best_score = margin;
            best_dir = Some(candidate);
        }
    }

    let Some(mut delta) = best_flip else {
        return Ok(RandomSearchRecord { success: false, delta: best_dir, queries_used });
    };

    // Greedy refinement: shrink the flipping direction while it still flips,
    // spending remaining queries.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let base = delta.clone();
    while queries_used < queries && hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        let candidate = base.scaled(T::from_f64_c(mid));
        let adv = input.add(&candidate)?;
        queries_used += 1;
        if oracle.predict(&adv)? != true_label {
            hi = mid;
            delta = candidate;
        } else {
            lo = mid;
        }
    }
    Ok(RandomSearchRecord { success: true, delta: Some(delta), queries_used })
}

/// Counts every oracle call made through it; used to evidence query budgets
/// and the oracle-only access pattern in tests and reports.
pub struct CountingOracle<'a, T: Scalar> {
    inner: &'a dyn PredictionOracle<T>,
    queries: Cell<u64>,
}

impl<'a, T: Scalar> CountingOracle<'a, T> {
    pub fn new(inner: &'a dyn PredictionOracle<T>) -> Self {
        Self { inner, queries: Cell::new(0) }
    }

    pub fn queries(&self) -> u64 {
        self.queries.get()
    }
}

impl<T: Scalar> PredictionOracle<T> for CountingOracle<'_, T> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn scores(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        self.queries.set(self.queries.get() + 1);
        self.inner.scores(input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ThresholdOracle;

    // Classifies by the sign of the first coordinate; flipping requires
    // moving coordinate 0 across zero.
    impl PredictionOracle<f64> for ThresholdOracle {
        fn num_classes(&self) -> usize {
            2
        }
        fn scores(&self, input: &Tensor<f64>) -> Result<Vec<f64>> {
            let v = input.data()[0];
            Ok(if v >= 0.0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
        }
    }

    #[test]
    fn zero_queries_is_a_failure_record() {
        let oracle = ThresholdOracle;
        let x = Tensor::vector(vec![0.5, 0.0]);
        let r = random_search_attack(&oracle, &x, 0, 1.0, 0, 3).unwrap();
        assert!(!r.success);
        assert_eq!(r.queries_used, 0);
    }

    #[test]
    fn random_search_flips_an_easy_boundary() {
        let oracle = ThresholdOracle;
        let x = Tensor::vector(vec![0.1, 0.0]);
        let r = random_search_attack(&oracle, &x, 0, 2.0, 64, 5).unwrap();
        assert!(r.success, "a 2.0-radius sphere should cross the 0.1 boundary");
        let delta = r.delta.unwrap();
        let adv = x.add(&delta).unwrap();
        assert_eq!(oracle.predict(&adv).unwrap(), 1);
        assert!(r.queries_used <= 64);
    }

    #[test]
    fn counting_oracle_counts() {
        let inner = ThresholdOracle;
        let counting = CountingOracle::new(&inner);
        let x = Tensor::vector(vec![0.1, 0.0]);
        let _ = random_search_attack(&counting, &x, 0, 2.0, 32, 5).unwrap();
        assert!(counting.queries() > 0);
        assert!(counting.queries() <= 32);
    }

    #[test]
    fn metric_table_from_confusion() {
        let m = ConfusionMatrix::from_pairs(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let t = MetricTable::from_confusion(&m);
        assert!((t.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.false_negatives, vec![1, 0]);
        assert_eq!(t.false_positives, vec![0, 1]);
    }
}
