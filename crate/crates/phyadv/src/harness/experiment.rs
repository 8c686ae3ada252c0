//! Experiment orchestration: stage functions behind the CLI subcommands and
//! the end-to-end `run_experiment` composition.
//!
//! Every stage is a pure function of (config, directory contents): re-running
//! a stage with the same config and seeds reproduces its artifacts byte for
//! byte, which `manifest.json` makes checkable.

use super::case_a;
use super::case_b;
use super::case_c;
use super::config::{CaseStudy, ExperimentConfig};
use super::manifest::{write_manifest, Manifest};
use super::report::generate_report;
use crate::error::{Error, Result};
use std::path::Path;

pub const CONFIG_ECHO_FILE: &str = "config.toml";

/// Seed-stream tags for the stages of an experiment.
pub mod seeds {
    pub const DATA: u64 = 0x01;
    pub const TRAIN: u64 = 0x02;
    pub const ATTACK: u64 = 0x03;
    pub const OOD: u64 = 0x04;
    pub const TRANSFER: u64 = 0x05;
    pub const CRAFT: u64 = 0x06;
    pub const POOL: u64 = 0x07;
    pub const SIM: u64 = 0x08;
    pub const TARGET: u64 = 0x09;
    pub const NOISE_POOL: u64 = 0x0a;
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Echo the configuration into the artifact directory (stages re-write the
/// same bytes, keeping the manifest stable).
pub(crate) fn write_config_echo(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let echo = if config.echo.is_empty() {
        format!(
            "# experiment configuration (constructed in code)\n# case_study = \"{}\", seed = {}\n",
            config.case_study.id(),
            config.seed
        )
    } else {
        config.echo.clone()
    };
    std::fs::write(dir.join(CONFIG_ECHO_FILE), echo)?;
    Ok(())
}

/// `generate-data`: synthesize and persist the dataset (case study A only;
/// B and C draw random messages on the fly).
pub fn stage_generate_data(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    write_config_echo(config, dir)?;
    match config.case_study {
        CaseStudy::ModulationClassifier => case_a::generate_data(config, dir),
        _ => Err(Error::Config(format!(
            "generate-data applies to case study a only; case {} synthesizes messages on the fly",
            config.case_study.id()
        ))),
    }
}

/// `train`: fit the case study's victim model(s) and persist the weights.
pub fn stage_train(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    write_config_echo(config, dir)?;
    match config.case_study {
        CaseStudy::ModulationClassifier => case_a::train(config, dir),
        CaseStudy::ChannelAutoencoder => case_b::train(config, dir),
        CaseStudy::DrlFeedback => case_c::train(config, dir),
    }
}

/// `attack`: run the attack suite (and, for case C, build the transferred
/// perturbation pool), assembling the report inputs.
pub fn stage_attack(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    write_config_echo(config, dir)?;
    match config.case_study {
        CaseStudy::ModulationClassifier => case_a::attack(config, dir),
        CaseStudy::ChannelAutoencoder => case_b::attack(config, dir),
        CaseStudy::DrlFeedback => case_c::build_pool(config, dir),
    }
}

/// `simulate`: the 600-step DRL simulation (case study C only).
pub fn stage_simulate(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    write_config_echo(config, dir)?;
    match config.case_study {
        CaseStudy::DrlFeedback => case_c::simulate(config, dir),
        _ => Err(Error::Config(format!(
            "simulate applies to case study c only, not case {}",
            config.case_study.id()
        ))),
    }
}

/// `report`: reduce the artifact directory into the robustness report.
pub fn stage_report(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    generate_report(dir)?;
    Ok(())
}

/// Run every stage of the configured case study and write the manifest.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    config.validate()?;
    ensure_dir(dir)?;
    match config.case_study {
        CaseStudy::ModulationClassifier => {
            stage_generate_data(config, dir)?;
            stage_train(config, dir)?;
            stage_attack(config, dir)?;
        }
        CaseStudy::ChannelAutoencoder => {
            stage_train(config, dir)?;
            stage_attack(config, dir)?;
        }
        CaseStudy::DrlFeedback => {
            stage_train(config, dir)?;
            stage_attack(config, dir)?;
            stage_simulate(config, dir)?;
        }
    }
    stage_report(config, dir)?;
    write_manifest(dir)
}
