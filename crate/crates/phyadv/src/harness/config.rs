//! Experiment configuration: one human-editable TOML file per experiment.
//!
//! Every section except `[experiment]` and `[threat_model]` has defaults;
//! the threat model is mandatory and validated before any compute runs.

use super::ood::OodConfig;
use crate::chanauto::{AutoencoderConfig, CraftConfig};
use crate::error::{Error, Result};
use crate::modclass::{Augmentation, CwAttackConfig, ThreatModel};
use crate::wireless::{DatasetConfig, ModulationScheme};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CaseStudy {
    #[serde(rename = "a")]
    ModulationClassifier,
    #[serde(rename = "b")]
    ChannelAutoencoder,
    #[serde(rename = "c")]
    DrlFeedback,
}

impl CaseStudy {
    pub fn id(self) -> &'static str {
        match self {
            CaseStudy::ModulationClassifier => "a",
            CaseStudy::ChannelAutoencoder => "b",
            CaseStudy::DrlFeedback => "c",
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ClassifierSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augment: Augmentation,
    pub exclude_scheme: Option<ModulationScheme>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch_size: 64,
            learning_rate: 1e-3,
            augment: Augmentation::None,
            exclude_scheme: None,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AttackSection {
    /// Shared perturbation energy budget (‖δ‖²/‖x‖²) for every attack family.
    pub budget_power_ratio: f64,
    pub cw_confidence: f64,
    pub cw_inner_steps: usize,
    pub cw_inner_learning_rate: f64,
    pub cw_c_min: f64,
    pub cw_c_max: f64,
    pub cw_binary_search_steps: usize,
    pub random_search_queries: usize,
    /// Frames per (scheme, SNR ≥ floor) cell attacked in the evaluation.
    pub eval_frames_per_cell: usize,
    /// Attack evaluation concentrates on cells at or above this SNR.
    pub min_eval_snr_db: i8,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            budget_power_ratio: 0.1,
            cw_confidence: 0.0,
            cw_inner_steps: 200,
            cw_inner_learning_rate: 0.01,
            cw_c_min: 1e-3,
            cw_c_max: 1e2,
            cw_binary_search_steps: 6,
            random_search_queries: 200,
            eval_frames_per_cell: 5,
            min_eval_snr_db: 10,
        }
    }
}

impl AttackSection {
    pub fn cw_config(&self, seed: u64) -> CwAttackConfig {
        CwAttackConfig {
            confidence: self.cw_confidence,
            inner_steps: self.cw_inner_steps,
            inner_learning_rate: self.cw_inner_learning_rate,
            c_range: (self.cw_c_min, self.cw_c_max),
            binary_search_steps: self.cw_binary_search_steps,
            max_power_ratio: self.budget_power_ratio,
            seed,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BlerSection {
    pub ebno_grid_db: Vec<f64>,
    pub trials: u64,
    /// Grid point used for the family metric tables.
    pub reference_ebno_db: f64,
    /// Trials for the confusion-matrix evaluation at the reference point.
    pub reference_trials: u64,
}

impl Default for BlerSection {
    fn default() -> Self {
        Self {
            ebno_grid_db: (0..=12).step_by(2).map(|v| v as f64).collect(),
            trials: 100_000,
            reference_ebno_db: 8.0,
            reference_trials: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateMode {
    /// Surrogate autoencoder trained with an independent seed (strict
    /// transferability).
    Independent,
    /// Surrogate shares the target's initialization seed.
    SameWeights,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DrlSection {
    pub total_steps: usize,
    pub window_start: usize,
    pub window_end: usize,
    pub batch_size: usize,
    pub exploration_stddev: f64,
    pub feedback_noise_stddev: f64,
    pub receiver_inner_epochs: usize,
    pub ebno_db: f64,
    /// Perturbations transferred into the pool.
    pub pool_size: usize,
    /// Candidates crafted on the surrogate before selection.
    pub pool_candidates: usize,
    pub pool_eval_trials: u64,
    pub pool_policy: crate::drl::PoolPolicy,
    pub surrogate_mode: SurrogateMode,
    /// Replicate simulations (distinct seeds) aggregated for the trace.
    pub replicates: usize,
}

impl Default for DrlSection {
    fn default() -> Self {
        Self {
            total_steps: 600,
            window_start: 200,
            window_end: 400,
            batch_size: 256,
            exploration_stddev: 0.15,
            feedback_noise_stddev: 0.1,
            receiver_inner_epochs: 1,
            ebno_db: 4.0,
            pool_size: 200,
            pool_candidates: 250,
            pool_eval_trials: 4_000,
            pool_policy: crate::drl::PoolPolicy::UniformDraw,
            surrogate_mode: SurrogateMode::Independent,
            replicates: 5,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OodSection {
    pub enabled: bool,
    pub frames_per_set: usize,
    pub heldout_scheme: Option<ModulationScheme>,
    /// Reduced-scale training for the held-out-scheme probe model.
    pub heldout_frames_per_cell: usize,
    pub heldout_epochs: usize,
}

impl Default for OodSection {
    fn default() -> Self {
        Self {
            enabled: true,
            frames_per_set: 160,
            heldout_scheme: Some(ModulationScheme::Gfsk),
            heldout_frames_per_cell: 30,
            heldout_epochs: 6,
        }
    }
}

impl OodSection {
    pub fn ood_config(&self) -> OodConfig {
        OodConfig {
            frames_per_set: self.frames_per_set,
            heldout_scheme: self.heldout_scheme,
            ..OodConfig::default()
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TransferabilitySection {
    pub enabled: bool,
    /// Training seeds of the cross-seed model grid.
    pub grid_seeds: Vec<u64>,
    pub frames_per_cell: usize,
    pub epochs: usize,
    /// Frames sampled for the cross-model success matrix.
    pub eval_frames: usize,
}

impl Default for TransferabilitySection {
    fn default() -> Self {
        Self {
            enabled: true,
            grid_seeds: vec![101, 202, 303],
            frames_per_cell: 12,
            epochs: 6,
            eval_frames: 96,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AutoencoderSection {
    pub bits_per_message: usize,
    pub channel_uses: usize,
    pub train_ebno_db: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let d = AutoencoderConfig::default();
        Self {
            bits_per_message: d.bits_per_message,
            channel_uses: d.channel_uses,
            train_ebno_db: d.train_ebno_db,
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
        }
    }
}

impl AutoencoderSection {
    pub fn autoencoder_config(&self, seed: u64) -> AutoencoderConfig {
        AutoencoderConfig {
            bits_per_message: self.bits_per_message,
            channel_uses: self.channel_uses,
            encoder_hidden: 1 << self.bits_per_message,
            decoder_hidden: 1 << self.bits_per_message,
            train_ebno_db: self.train_ebno_db,
            epochs: self.epochs,
            batches_per_epoch: self.batches_per_epoch,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CraftSection {
    pub budget_power_ratio: f64,
    pub steps: usize,
    pub step_fraction: f64,
    pub objective: crate::chanauto::ActivationObjective,
    pub restarts: usize,
}

impl Default for CraftSection {
    fn default() -> Self {
        let d = CraftConfig::default();
        Self {
            budget_power_ratio: d.budget_power_ratio,
            steps: d.steps,
            step_fraction: d.step_fraction,
            objective: d.objective,
            restarts: d.restarts,
        }
    }
}

impl CraftSection {
    pub fn craft_config(&self, seed: u64) -> CraftConfig {
        CraftConfig {
            budget_power_ratio: self.budget_power_ratio,
            steps: self.steps,
            step_fraction: self.step_fraction,
            objective: self.objective,
            restarts: self.restarts,
            seed,
        }
    }
}

/// Raw file form.
#[derive(serde::Deserialize)]
struct ConfigFile {
    experiment: ExperimentSection,
    threat_model: Option<ThreatModel>,
    #[serde(default)]
    dataset: DatasetConfig,
    #[serde(default)]
    classifier: ClassifierSection,
    #[serde(default)]
    attack: AttackSection,
    #[serde(default)]
    autoencoder: AutoencoderSection,
    #[serde(default)]
    craft: CraftSection,
    #[serde(default)]
    bler: BlerSection,
    #[serde(default)]
    drl: DrlSection,
    #[serde(default)]
    ood: OodSection,
    #[serde(default)]
    transferability: TransferabilitySection,
}

#[derive(serde::Deserialize)]
struct ExperimentSection {
    case_study: CaseStudy,
    #[serde(default)]
    seed: u64,
    output_dir: Option<PathBuf>,
}

/// Fully validated experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub case_study: CaseStudy,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub threat_model: ThreatModel,
    pub dataset: DatasetConfig,
    pub classifier: ClassifierSection,
    pub attack: AttackSection,
    pub autoencoder: AutoencoderSection,
    pub craft: CraftSection,
    pub bler: BlerSection,
    pub drl: DrlSection,
    pub ood: OodSection,
    pub transferability: TransferabilitySection,
    /// Verbatim configuration text, echoed into reports.
    pub echo: String,
}

impl ExperimentConfig {
    /// A complete default config for a case study (threat model included),
    /// used by tests and as a template.
    pub fn default_for(case_study: CaseStudy, seed: u64) -> Self {
        let threat_model = match case_study {
            CaseStudy::ModulationClassifier | CaseStudy::ChannelAutoencoder => ThreatModel {
                knowledge: crate::modclass::Knowledge::WhiteBox,
                attack_phase: "evasion".to_string(),
                goal: "integrity".to_string(),
                success_metric: match case_study {
                    CaseStudy::ModulationClassifier => {
                        "classification accuracy decay at matched perturbation energy".to_string()
                    }
                    _ => "elevated block error rate with improving Eb/N0".to_string(),
                },
                assumptions: vec![
                    "adversary has complete knowledge of the deployed model".to_string(),
                    "perturbations are additive at the receiver input".to_string(),
                ],
            },
            CaseStudy::DrlFeedback => ThreatModel {
                knowledge: crate::modclass::Knowledge::BlackBox,
                attack_phase: "evasion".to_string(),
                goal: "integrity".to_string(),
                success_metric: "receiver accuracy degradation during the attack window"
                    .to_string(),
                assumptions: vec![
                    "adversary has no knowledge of the live encoder/decoder".to_string(),
                    "adversary can only add perturbations in the broadcast channel".to_string(),
                    "perturbations are transferred from an independently trained surrogate"
                        .to_string(),
                ],
            },
        };
        Self {
            case_study,
            seed,
            output_dir: None,
            threat_model,
            dataset: DatasetConfig::default(),
            classifier: ClassifierSection::default(),
            attack: AttackSection::default(),
            autoencoder: AutoencoderSection::default(),
            craft: CraftSection::default(),
            bler: BlerSection::default(),
            drl: DrlSection::default(),
            ood: OodSection::default(),
            transferability: TransferabilitySection::default(),
            echo: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.threat_model.validate().map_err(|e| {
            Error::Config(format!(
                "threat model incomplete; declare it before any attack runs: {e}"
            ))
        })?;
        if self.attack.budget_power_ratio <= 0.0 || self.craft.budget_power_ratio < 0.0 {
            return Err(Error::Config("perturbation budgets must be positive".to_string()));
        }
        if self.drl.window_start >= self.drl.window_end
            || self.drl.window_end > self.drl.total_steps
        {
            return Err(Error::Config(format!(
                "attack window [{}, {}) must fit inside {} steps",
                self.drl.window_start, self.drl.window_end, self.drl.total_steps
            )));
        }
        if self.drl.pool_size == 0 || self.drl.pool_candidates < self.drl.pool_size {
            return Err(Error::Config(
                "pool_candidates must be at least pool_size (both positive)".to_string(),
            ));
        }
        if self.drl.replicates == 0 {
            return Err(Error::Config("drl.replicates must be positive".to_string()));
        }
        Ok(())
    }
}

/// Parse a TOML experiment config. A missing `[threat_model]` is rejected
/// with the evaluation guideline it violates.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml::from_str(text)
        .map_err(|e| Error::Config(format!("malformed experiment config: {e}")))?;
    let threat_model = file.threat_model.ok_or_else(|| {
        Error::Config(
            "experiment config has no [threat_model]; every experiment must declare one before \
             any attack runs (evaluation guideline: threat models must clearly state the \
             assumptions taken, type of the adversary, and the metrics used)"
                .to_string(),
        )
    })?;
    let config = ExperimentConfig {
        case_study: file.experiment.case_study,
        seed: file.experiment.seed,
        output_dir: file.experiment.output_dir,
        threat_model,
        dataset: file.dataset,
        classifier: file.classifier,
        attack: file.attack,
        autoencoder: file.autoencoder,
        craft: file.craft,
        bler: file.bler,
        drl: file.drl,
        ood: file.ood,
        transferability: file.transferability,
        echo: text.to_string(),
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [experiment]
        case_study = "a"
        seed = 7

        [threat_model]
        knowledge = "white-box"
        attack_phase = "evasion"
        goal = "integrity"
        success_metric = "accuracy decay"
        assumptions = ["full model knowledge"]
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.case_study, CaseStudy::ModulationClassifier);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.attack.budget_power_ratio, 0.1);
        assert_eq!(cfg.dataset.frames_per_cell, 100);
        assert_eq!(cfg.drl.total_steps, 600);
    }

    #[test]
    fn missing_threat_model_names_the_guideline() {
        let text = "[experiment]\ncase_study = \"a\"\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("threat model"), "{msg}");
        assert!(msg.contains("assumptions taken"), "{msg}");
    }

    #[test]
    fn sections_override_defaults() {
        let text = format!("{MINIMAL}\n[attack]\nbudget_power_ratio = 0.05\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.attack.budget_power_ratio, 0.05);
        assert_eq!(cfg.attack.cw_inner_steps, 200);
    }

    #[test]
    fn invalid_window_is_rejected() {
        let text = format!("{MINIMAL}\n[drl]\nwindow_start = 500\nwindow_end = 400\n");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn default_for_all_cases_validates() {
        for case in [
            CaseStudy::ModulationClassifier,
            CaseStudy::ChannelAutoencoder,
            CaseStudy::DrlFeedback,
        ] {
            ExperimentConfig::default_for(case, 1).validate().unwrap();
        }
    }
}
