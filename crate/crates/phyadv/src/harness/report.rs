//! Machine-readable robustness report, generated as a pure function of an
//! experiment's artifact directory.

use super::families::{AttackFamily, FamilyOutcome, MetricTable};
use super::ood::OodReport;
use crate::error::{Error, Result};
use crate::modclass::ThreatModel;
use std::collections::BTreeMap;
use std::path::Path;

pub const REPORT_SCHEMA: &str = "phyadv-report/1";
/// File the experiment stages assemble for the report step.
pub const REPORT_INPUTS_FILE: &str = "report_inputs.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";

/// Cross-seed transfer grid: `success_rate[i][j]` is the rate at which
/// perturbations crafted on model `i` flip previously-correct predictions of
/// model `j`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TransferabilityMatrix {
    pub seeds: Vec<u64>,
    pub success_rate: Vec<Vec<f64>>,
}

impl TransferabilityMatrix {
    pub fn mean_diagonal(&self) -> f64 {
        let n = self.seeds.len();
        (0..n).map(|i| self.success_rate[i][i]).sum::<f64>() / n as f64
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.seeds.len();
        if n < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sum += self.success_rate[i][j];
                    count += 1;
                }
            }
        }
        sum / count as f64
    }
}

/// Everything the report step consumes, assembled by the experiment stages.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ReportInputs {
    pub case_study: String,
    pub threat_model: ThreatModel,
    pub seeds: BTreeMap<String, u64>,
    /// The shared perturbation energy budget all families were run at.
    pub budget_power_ratio: f64,
    pub clean_metrics: Option<MetricTable>,
    pub families: Vec<FamilyOutcome>,
    pub transferability: Option<TransferabilityMatrix>,
    pub ood: Option<OodReport>,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Verbatim echo of the experiment configuration.
    pub config_echo: String,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AdaptiveEvaluation {
    pub performed: bool,
    pub reason: String,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RobustnessReport {
    pub schema: String,
    pub case_study: String,
    pub threat_model: ThreatModel,
    pub seeds: BTreeMap<String, u64>,
    pub budget_power_ratio: f64,
    pub clean_metrics: Option<MetricTable>,
    pub families: Vec<FamilyOutcome>,
    /// Accuracy drop (clean − attacked) per present family.
    pub accuracy_drops: BTreeMap<String, f64>,
    pub transferability: Option<TransferabilityMatrix>,
    pub ood: Option<OodReport>,
    /// Families tied for the lowest attacked accuracy at the shared budget;
    /// ties are recorded, not broken arbitrarily.
    pub strongest_attack: Vec<String>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    /// Hook for adaptive-adversary evaluation; marked not-performed until a
    /// strategy is registered.
    pub adaptive_evaluation: AdaptiveEvaluation,
    pub config_echo: String,
}

/// Validate the inputs and assemble the report. Refuses mismatched budgets
/// across present families and families that are neither evaluated nor
/// explicitly skipped with a reason.
pub fn build_report(inputs: &ReportInputs) -> Result<RobustnessReport> {
    inputs.threat_model.validate()?;

    for family in AttackFamily::ALL {
        let found = inputs.families.iter().filter(|f| f.family == family).count();
        if found != 1 {
            return Err(Error::Config(format!(
                "report needs exactly one outcome (present or skipped-with-reason) per attack \
                 family; {} entries for {}",
                found,
                family.name()
            )));
        }
    }
    for f in &inputs.families {
        if f.is_present() {
            let budget = f.budget_power_ratio.ok_or_else(|| {
                Error::Config(format!("family {} has no recorded budget", f.family.name()))
            })?;
            if (budget - inputs.budget_power_ratio).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "budget mismatch: family {} ran at power ratio {budget}, report budget is {}; \
                     comparisons across families require identical perturbation energy",
                    f.family.name(),
                    inputs.budget_power_ratio
                )));
            }
            if f.attacked_accuracy.is_none() {
                return Err(Error::Config(format!(
                    "present family {} has no attacked accuracy",
                    f.family.name()
                )));
            }
        }
    }

    let mut warnings = Vec::new();
    let mut accuracy_drops = BTreeMap::new();
    let clean_acc = inputs.clean_metrics.as_ref().map(|m| m.accuracy);
    for f in inputs.families.iter().filter(|f| f.is_present()) {
        if let (Some(clean), Some(attacked)) = (clean_acc, f.attacked_accuracy) {
            accuracy_drops.insert(f.family.name().to_string(), clean - attacked);
        }
    }

    // Strongest attack: lowest attacked accuracy at the matched budget.
    let present: Vec<&FamilyOutcome> =
        inputs.families.iter().filter(|f| f.is_present()).collect();
    let strongest_attack: Vec<String> = match present
        .iter()
        .filter_map(|f| f.attacked_accuracy)
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    {
        Some(min_acc) => present
            .iter()
            .filter(|f| f.attacked_accuracy.is_some_and(|a| (a - min_acc).abs() < 1e-12))
            .map(|f| f.family.name().to_string())
            .collect(),
        None => Vec::new(),
    };
    if strongest_attack.len() > 1 {
        warnings.push(format!(
            "strongest-attack tie between {{{}}}; recorded, not broken arbitrarily",
            strongest_attack.join(", ")
        ));
    }

    // Evaluating only weak attacks can create a false sense of security.
    let gradient = inputs
        .families
        .iter()
        .find(|f| f.family == AttackFamily::GradientBased)
        .expect("presence checked above");
    if !gradient.is_present() {
        warnings.push(
            "gradient-based family skipped: the evaluation omits the strongest known attack \
             class and can create a false sense of security"
                .to_string(),
        );
    }

    // Sanity rule: at matched energy, unstructured noise should never beat
    // the gradient-based attack.
    if let (Some(g), Some(n)) = (
        accuracy_drops.get(AttackFamily::GradientBased.name()),
        accuracy_drops.get(AttackFamily::RandomNoise.name()),
    ) {
        if n > g {
            warnings.push(format!(
                "anomaly: random-noise accuracy drop ({n:.4}) exceeds the gradient-based drop \
                 ({g:.4}) at matched energy; check the attack implementation or budget accounting"
            ));
        }
    }

    Ok(RobustnessReport {
        schema: REPORT_SCHEMA.to_string(),
        case_study: inputs.case_study.clone(),
        threat_model: inputs.threat_model.clone(),
        seeds: inputs.seeds.clone(),
        budget_power_ratio: inputs.budget_power_ratio,
        clean_metrics: inputs.clean_metrics.clone(),
        families: inputs.families.clone(),
        accuracy_drops,
        transferability: inputs.transferability.clone(),
        ood: inputs.ood.clone(),
        strongest_attack,
        warnings,
        notes: inputs.notes.clone(),
        adaptive_evaluation: AdaptiveEvaluation {
            performed: false,
            reason: "no adaptive strategy registered; re-attack hook unused".to_string(),
        },
        config_echo: inputs.config_echo.clone(),
    })
}

/// Human-readable rendering of the report.
pub fn render_text(report: &RobustnessReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("robustness report ({})\n", report.schema));
    out.push_str(&format!("case study: {}\n", report.case_study));
    out.push_str(&format!(
        "threat model: {} / {} / goal {} / metric {}\n",
        report.threat_model.knowledge.name(),
        report.threat_model.attack_phase,
        report.threat_model.goal,
        report.threat_model.success_metric
    ));
    for a in &report.threat_model.assumptions {
        out.push_str(&format!("  assumption: {a}\n"));
    }
    out.push_str(&format!("shared perturbation budget (power ratio): {}\n", report.budget_power_ratio));
    if let Some(clean) = &report.clean_metrics {
        out.push_str(&format!(
            "clean: acc {:.4}  prec {:.4}  rec {:.4}  f1 {:.4}\n",
            clean.accuracy, clean.macro_precision, clean.macro_recall, clean.macro_f1
        ));
    }
    for f in &report.families {
        match (&f.skip_reason, f.attacked_accuracy) {
            (Some(reason), _) => {
                out.push_str(&format!("family {}: SKIPPED ({reason})\n", f.family.name()))
            }
            (None, Some(acc)) => {
                out.push_str(&format!("family {}: attacked accuracy {:.4}", f.family.name(), acc));
                if let Some(m) = &f.metrics {
                    out.push_str(&format!(
                        "  (prec {:.4} rec {:.4} f1 {:.4})",
                        m.macro_precision, m.macro_recall, m.macro_f1
                    ));
                }
                if let Some(q) = f.mean_queries {
                    out.push_str(&format!("  mean queries {q:.1}"));
                }
                out.push('\n');
                for (name, acc) in &f.attacks {
                    out.push_str(&format!("    {name}: attacked accuracy {acc:.4}\n"));
                }
            }
            (None, None) => {}
        }
    }
    if let Some(t) = &report.transferability {
        out.push_str(&format!(
            "transferability: mean self {:.4}, mean cross {:.4} over seeds {:?}\n",
            t.mean_diagonal(),
            t.mean_off_diagonal(),
            t.seeds
        ));
    }
    if let Some(ood) = &report.ood {
        for (name, set) in &ood.sets {
            out.push_str(&format!(
                "ood {name}: n={} acc {:.4} mean-max-confidence {:.4}\n",
                set.count, set.accuracy, set.mean_max_confidence
            ));
        }
    }
    out.push_str(&format!("strongest attack: {}\n", report.strongest_attack.join(", ")));
    out.push_str(&format!(
        "adaptive evaluation: {}\n",
        if report.adaptive_evaluation.performed { "performed" } else { "not performed" }
    ));
    for w in &report.warnings {
        out.push_str(&format!("WARNING: {w}\n"));
    }
    for n in &report.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

/// Read `report_inputs.json` from an artifact directory and emit
/// `report.json` and `report.txt`. Pure in the directory contents.
pub fn generate_report(artifact_dir: &Path) -> Result<RobustnessReport> {
    let inputs_path = artifact_dir.join(REPORT_INPUTS_FILE);
    let raw = std::fs::read_to_string(&inputs_path).map_err(|e| {
        Error::Config(format!(
            "missing {REPORT_INPUTS_FILE} in {}: {e}; run the attack/simulate stage first",
            artifact_dir.display()
        ))
    })?;
    let inputs: ReportInputs = serde_json::from_str(&raw)
        .map_err(|e| Error::Format(format!("malformed {REPORT_INPUTS_FILE}: {e}")))?;
    let report = build_report(&inputs)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
    std::fs::write(artifact_dir.join(REPORT_JSON_FILE), json)?;
    std::fs::write(artifact_dir.join(REPORT_TEXT_FILE), render_text(&report))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modclass::Knowledge;

    fn metric(acc: f64) -> MetricTable {
        MetricTable {
            accuracy: acc,
            macro_precision: acc,
            macro_recall: acc,
            macro_f1: acc,
            false_positives: vec![0; 8],
            false_negatives: vec![0; 8],
        }
    }

    fn present(family: AttackFamily, budget: f64, attacked: f64) -> FamilyOutcome {
        FamilyOutcome {
            family,
            budget_power_ratio: Some(budget),
            attacked_accuracy: Some(attacked),
            attacks: BTreeMap::new(),
            metrics: Some(metric(attacked)),
            mean_queries: None,
            skip_reason: None,
        }
    }

    fn base_inputs() -> ReportInputs {
        ReportInputs {
            case_study: "a".to_string(),
            threat_model: ThreatModel {
                knowledge: Knowledge::WhiteBox,
                attack_phase: "evasion".to_string(),
                goal: "integrity".to_string(),
                success_metric: "accuracy decay".to_string(),
                assumptions: vec!["full model knowledge".to_string()],
            },
            seeds: BTreeMap::from([("experiment".to_string(), 7u64)]),
            budget_power_ratio: 0.1,
            clean_metrics: Some(metric(0.9)),
            families: vec![
                present(AttackFamily::GradientBased, 0.1, 0.2),
                present(AttackFamily::GradientFree, 0.1, 0.5),
                present(AttackFamily::RandomNoise, 0.1, 0.85),
            ],
            transferability: None,
            ood: None,
            notes: Vec::new(),
            config_echo: String::new(),
        }
    }

    #[test]
    fn strongest_attack_is_lowest_accuracy() {
        let report = build_report(&base_inputs()).unwrap();
        assert_eq!(report.strongest_attack, vec!["gradient-based".to_string()]);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn ties_are_recorded_not_broken() {
        let mut inputs = base_inputs();
        inputs.families[1].attacked_accuracy = Some(0.2);
        inputs.families[1].metrics = Some(metric(0.2));
        let report = build_report(&inputs).unwrap();
        assert_eq!(report.strongest_attack.len(), 2);
        assert!(report.warnings.iter().any(|w| w.contains("tie")));
    }

    #[test]
    fn mismatched_budgets_are_refused() {
        let mut inputs = base_inputs();
        inputs.families[2].budget_power_ratio = Some(0.2);
        let err = build_report(&inputs).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("budget mismatch"));
    }

    #[test]
    fn noise_beating_gradients_raises_anomaly_flag() {
        let mut inputs = base_inputs();
        inputs.families[2].attacked_accuracy = Some(0.05);
        inputs.families[2].metrics = Some(metric(0.05));
        let report = build_report(&inputs).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("anomaly")));
    }

    #[test]
    fn skipped_family_needs_reason_and_flags_weak_evaluation() {
        let mut inputs = base_inputs();
        inputs.families[0] =
            FamilyOutcome::skipped(AttackFamily::GradientBased, "black-box setting");
        let report = build_report(&inputs).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("false sense of security")));

        // A missing family (as opposed to explicitly skipped) is refused.
        let mut missing = base_inputs();
        missing.families.remove(0);
        assert!(build_report(&missing).is_err());
    }

    #[test]
    fn adaptive_evaluation_marked_not_performed() {
        let report = build_report(&base_inputs()).unwrap();
        assert!(!report.adaptive_evaluation.performed);
    }
}
