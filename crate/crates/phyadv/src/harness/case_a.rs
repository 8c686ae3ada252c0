//! Case study A stages: dataset, classifier training, and the three-family
//! attack evaluation with transferability grid and OOD probes.

use super::config::ExperimentConfig;
use super::experiment::seeds;
use super::families::{
    random_search_attack, AttackFamily, CountingOracle, FamilyOutcome, MetricTable,
};
use super::ood::{build_ood_suite, ood_probe, OodReport, OutOfDistributionSuite};
use super::report::{ReportInputs, TransferabilityMatrix, REPORT_INPUTS_FILE};
use crate::error::{Error, Result};
use crate::modclass::{
    accuracy_vs_snr, evaluate_attacks, fgsm_attack, fgsm_epsilon_for_power_ratio,
    train_classifier, AttackSuiteConfig, ClassifierConfig, PredictionOracle, NUM_CLASSES,
};
use crate::nn::io::{load_weights, save_weights};
use crate::nn::ModelState;
use crate::util;
use crate::wireless::{
    load_frames, save_frames, synthesize_dataset, ConfusionMatrix, Dataset, IqFrame,
};
use crate::Real;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;

pub const TRAIN_DATA_FILE: &str = "train.phyd";
pub const TEST_DATA_FILE: &str = "test.phyd";
pub const CLASSIFIER_FILE: &str = "classifier.phyw";
pub const HISTORY_FILE: &str = "history.csv";
pub const ACCURACY_SNR_FILE: &str = "accuracy_snr.csv";
pub const ATTACK_CURVE_FILE: &str = "attack_curve.csv";
pub const ATTACK_RECORDS_FILE: &str = "attack_records.csv";

pub fn generate_data(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let dataset =
        synthesize_dataset::<Real>(&config.dataset, util::derive_seed(config.seed, &[seeds::DATA]))?;
    let train: Vec<IqFrame<Real>> = dataset.train_frames().into_iter().cloned().collect();
    let test: Vec<IqFrame<Real>> = dataset.test_frames().into_iter().cloned().collect();
    save_frames(&train, &dir.join(TRAIN_DATA_FILE))?;
    save_frames(&test, &dir.join(TEST_DATA_FILE))?;
    Ok(())
}

pub(crate) fn load_dataset(config: &ExperimentConfig, dir: &Path) -> Result<Dataset<Real>> {
    let train = load_frames::<Real>(&dir.join(TRAIN_DATA_FILE)).map_err(|e| {
        Error::Config(format!("missing training data ({e}); run generate-data first"))
    })?;
    let test = load_frames::<Real>(&dir.join(TEST_DATA_FILE)).map_err(|e| {
        Error::Config(format!("missing test data ({e}); run generate-data first"))
    })?;
    let train_count = train.len();
    let mut frames = train;
    frames.extend(test);
    Ok(Dataset {
        train_idx: (0..train_count).collect(),
        test_idx: (train_count..frames.len()).collect(),
        frames,
        seed: util::derive_seed(config.seed, &[seeds::DATA]),
    })
}

fn classifier_config(config: &ExperimentConfig, seed: u64) -> ClassifierConfig {
    ClassifierConfig {
        epochs: config.classifier.epochs,
        batch_size: config.classifier.batch_size,
        learning_rate: config.classifier.learning_rate,
        seed,
        augment: config.classifier.augment,
        exclude_scheme: config.classifier.exclude_scheme,
        ..ClassifierConfig::default()
    }
}

pub fn train(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let dataset = load_dataset(config, dir)?;
    let cfg = classifier_config(config, util::derive_seed(config.seed, &[seeds::TRAIN]));
    let (model, history) = train_classifier(&dataset, &cfg)?;
    save_weights(&model, &dir.join(CLASSIFIER_FILE))?;
    std::fs::write(dir.join(HISTORY_FILE), history.to_csv())?;
    Ok(())
}

/// The per-cell evaluation subset the attack families run on: up to
/// `eval_frames_per_cell` test frames per (scheme, SNR ≥ floor) cell.
pub(crate) fn eval_subset<'a>(
    dataset: &'a Dataset<Real>,
    min_snr_db: i8,
    per_cell: usize,
) -> Vec<&'a IqFrame<Real>> {
    let mut counts: BTreeMap<(usize, i8), usize> = BTreeMap::new();
    dataset
        .test_frames()
        .into_iter()
        .filter(|f| f.snr_db >= min_snr_db)
        .filter(|f| {
            let c = counts.entry((f.label.class_index(), f.snr_db)).or_insert(0);
            *c += 1;
            *c <= per_cell
        })
        .collect()
}

fn confusion_of<F: Fn(usize) -> usize>(
    frames: &[&IqFrame<Real>],
    pred: F,
) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(NUM_CLASSES);
    for (i, f) in frames.iter().enumerate() {
        m.record(f.label.class_index(), pred(i))?;
    }
    Ok(m)
}

pub fn attack(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    let dataset = load_dataset(config, dir)?;
    let model: ModelState<Real> = load_weights(&dir.join(CLASSIFIER_FILE))
        .map_err(|e| Error::Config(format!("missing classifier weights ({e}); run train first")))?;
    let budget = config.attack.budget_power_ratio;
    let attack_seed = util::derive_seed(config.seed, &[seeds::ATTACK]);

    // Clean accuracy-vs-SNR over the full test split.
    let test_frames = dataset.test_frames();
    let clean_curve = accuracy_vs_snr(&model, &test_frames)?;
    let mut snr_csv = String::from("snr_db,accuracy\n");
    for (snr, acc) in &clean_curve.points {
        snr_csv.push_str(&format!("{snr},{acc}\n"));
    }
    std::fs::write(dir.join(ACCURACY_SNR_FILE), snr_csv)?;

    // Attack families over the evaluation subset, all at the shared budget.
    let frames = eval_subset(&dataset, config.attack.min_eval_snr_db, config.attack.eval_frames_per_cell);
    if frames.is_empty() {
        return Err(Error::Config(
            "attack evaluation subset is empty; lower min_eval_snr_db or regenerate data"
                .to_string(),
        ));
    }
    let suite = AttackSuiteConfig {
        cw: config.attack.cw_config(attack_seed),
        fgsm_power_ratio: budget,
        seed: attack_seed,
    };
    let evaluation = evaluate_attacks(&model, &frames, &suite)?;
    std::fs::write(dir.join(ATTACK_CURVE_FILE), evaluation.curve_csv())?;
    std::fs::write(dir.join(ATTACK_RECORDS_FILE), evaluation.records_csv())?;

    // Gradient-free family: prediction-oracle random search at the same
    // budget, with query counting.
    let counting = CountingOracle::new(&model);
    let rs: Result<Vec<(usize, usize)>> = frames
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            let budget_l2 = (budget * frame.samples.energy()).sqrt();
            let record = random_search_attack(
                &counting,
                &frame.samples,
                frame.label.class_index(),
                budget_l2,
                config.attack.random_search_queries,
                util::derive_seed(attack_seed, &[0x7273, i as u64]),
            )?;
            let pred = match (&record.success, &record.delta) {
                (true, Some(delta)) => counting.predict(&frame.samples.add(delta)?)?,
                _ => counting.predict(&frame.samples)?,
            };
            Ok((pred, record.queries_used))
        })
        .collect();
    let rs = rs?;
    let mean_queries =
        rs.iter().map(|(_, q)| *q as f64).sum::<f64>() / rs.len().max(1) as f64;

    // Metric tables per condition.
    let outcomes = &evaluation.outcomes;
    let clean_m = confusion_of(&frames, |i| outcomes[i].clean_pred)?;
    let cw_m = confusion_of(&frames, |i| outcomes[i].cw_pred)?;
    let fgsm_m = confusion_of(&frames, |i| outcomes[i].fgsm_pred)?;
    let noise_m = confusion_of(&frames, |i| outcomes[i].budget_noise_pred)?;
    let rs_m = confusion_of(&frames, |i| rs[i].0)?;

    let (cw_acc, fgsm_acc) = (cw_m.accuracy(), fgsm_m.accuracy());
    let gradient_metrics = if cw_acc <= fgsm_acc { &cw_m } else { &fgsm_m };
    let families = vec![
        FamilyOutcome {
            family: AttackFamily::GradientBased,
            budget_power_ratio: Some(budget),
            attacked_accuracy: Some(cw_acc.min(fgsm_acc)),
            attacks: BTreeMap::from([
                ("cw".to_string(), cw_acc),
                ("fgsm".to_string(), fgsm_acc),
            ]),
            metrics: Some(MetricTable::from_confusion(gradient_metrics)),
            mean_queries: None,
            skip_reason: None,
        },
        FamilyOutcome {
            family: AttackFamily::GradientFree,
            budget_power_ratio: Some(budget),
            attacked_accuracy: Some(rs_m.accuracy()),
            attacks: BTreeMap::from([("random-search".to_string(), rs_m.accuracy())]),
            metrics: Some(MetricTable::from_confusion(&rs_m)),
            mean_queries: Some(mean_queries),
            skip_reason: None,
        },
        FamilyOutcome {
            family: AttackFamily::RandomNoise,
            budget_power_ratio: Some(budget),
            attacked_accuracy: Some(noise_m.accuracy()),
            attacks: BTreeMap::from([("matched-energy-noise".to_string(), noise_m.accuracy())]),
            metrics: Some(MetricTable::from_confusion(&noise_m)),
            mean_queries: None,
            skip_reason: None,
        },
    ];

    let transferability = if config.transferability.enabled {
        Some(transfer_grid(config, &frames)?)
    } else {
        None
    };
    let ood = if config.ood.enabled { Some(run_ood(config, &dataset, &model)?) } else { None };

    let seeds_map = BTreeMap::from([
        ("experiment".to_string(), config.seed),
        ("data".to_string(), util::derive_seed(config.seed, &[seeds::DATA])),
        ("train".to_string(), util::derive_seed(config.seed, &[seeds::TRAIN])),
        ("attack".to_string(), attack_seed),
    ]);
    let inputs = ReportInputs {
        case_study: "a".to_string(),
        threat_model: config.threat_model.clone(),
        seeds: seeds_map,
        budget_power_ratio: budget,
        clean_metrics: Some(MetricTable::from_confusion(&clean_m)),
        families,
        transferability,
        ood,
        notes: vec![
            "noise and jamming baselines are energy-matched to the adversarial perturbations \
             (testbed fairness choice)"
                .to_string(),
        ],
        config_echo: config.echo.clone(),
    };
    std::fs::write(
        dir.join(REPORT_INPUTS_FILE),
        serde_json::to_string_pretty(&inputs)
            .map_err(|e| Error::Format(format!("report inputs serialization: {e}")))?,
    )?;
    Ok(())
}

/// Cross-seed transferability grid: FGSM perturbations crafted on model `i`,
/// applied to model `j`; success counts frames that were correctly
/// classified by `j` and flip under the transferred δ.
fn transfer_grid(
    config: &ExperimentConfig,
    frames: &[&IqFrame<Real>],
) -> Result<TransferabilityMatrix> {
    let t = &config.transferability;
    let eval: Vec<&IqFrame<Real>> = frames.iter().copied().take(t.eval_frames).collect();
    if eval.is_empty() {
        return Err(Error::Config("transferability grid has no evaluation frames".to_string()));
    }
    let budget = config.attack.budget_power_ratio;

    let models: Result<Vec<ModelState<Real>>> = t
        .grid_seeds
        .par_iter()
        .map(|&grid_seed| {
            let ds = synthesize_dataset::<Real>(
                &crate::wireless::DatasetConfig {
                    frames_per_cell: t.frames_per_cell,
                    ..config.dataset.clone()
                },
                util::derive_seed(config.seed, &[seeds::TRANSFER, grid_seed]),
            )?;
            let cfg = ClassifierConfig {
                epochs: t.epochs,
                seed: grid_seed,
                ..classifier_config(config, grid_seed)
            };
            Ok(train_classifier(&ds, &cfg)?.0)
        })
        .collect();
    let models = models?;

    // Perturbations crafted once per source model.
    let deltas: Result<Vec<Vec<crate::tensor::Tensor<Real>>>> = models
        .par_iter()
        .map(|source| {
            eval.iter()
                .map(|f| {
                    let eps = fgsm_epsilon_for_power_ratio(&f.samples, budget);
                    fgsm_attack(source, &f.samples, f.label.class_index(), eps)
                })
                .collect()
        })
        .collect();
    let deltas = deltas?;

    let n = models.len();
    let mut success_rate = vec![vec![0.0; n]; n];
    for (i, source_deltas) in deltas.iter().enumerate() {
        for (j, target) in models.iter().enumerate() {
            let mut correct = 0usize;
            let mut flipped = 0usize;
            for (f, delta) in eval.iter().zip(source_deltas) {
                let label = f.label.class_index();
                if target.predict(&f.samples)? != label {
                    continue;
                }
                correct += 1;
                if target.predict(&f.samples.add(delta)?)? != label {
                    flipped += 1;
                }
            }
            success_rate[i][j] =
                if correct == 0 { 0.0 } else { flipped as f64 / correct as f64 };
        }
    }
    Ok(TransferabilityMatrix { seeds: t.grid_seeds.clone(), success_rate })
}

/// OOD probes: unseen-SNR and pure-noise sets against the main model; the
/// held-out-scheme set against a reduced-scale model trained without that
/// scheme. The held-out model's in-distribution accuracy is reported
/// alongside for comparison.
fn run_ood(
    config: &ExperimentConfig,
    dataset: &Dataset<Real>,
    model: &ModelState<Real>,
) -> Result<OodReport> {
    let ood_seed = util::derive_seed(config.seed, &[seeds::OOD]);
    let suite = build_ood_suite::<Real>(&config.ood.ood_config(), &config.dataset, ood_seed)?;
    let train_frames = dataset.train_frames();

    let main_suite = OutOfDistributionSuite {
        unseen_scheme: Vec::new(),
        unseen_snr: suite.unseen_snr.clone(),
        pure_noise: suite.pure_noise.clone(),
        heldout_scheme: None,
    };
    let mut report = ood_probe(model, &main_suite, &train_frames)?;

    if let Some(heldout) = config.ood.heldout_scheme {
        let ds = synthesize_dataset::<Real>(
            &crate::wireless::DatasetConfig {
                frames_per_cell: config.ood.heldout_frames_per_cell,
                ..config.dataset.clone()
            },
            util::derive_seed(ood_seed, &[1]),
        )?;
        let cfg = ClassifierConfig {
            epochs: config.ood.heldout_epochs,
            exclude_scheme: Some(heldout),
            ..classifier_config(config, util::derive_seed(ood_seed, &[2]))
        };
        let (heldout_model, _) = train_classifier(&ds, &cfg)?;

        let heldout_suite = OutOfDistributionSuite {
            unseen_scheme: suite.unseen_scheme.clone(),
            unseen_snr: Vec::new(),
            pure_noise: Vec::new(),
            heldout_scheme: Some(heldout),
        };
        let heldout_report =
            ood_probe(&heldout_model, &heldout_suite, &ds.train_frames())?;
        for (k, v) in heldout_report.sets {
            report.sets.insert(k, v);
        }
        report.heldout_scheme = Some(heldout);

        // In-distribution reference for the held-out model.
        let in_dist: Vec<&IqFrame<Real>> = ds
            .test_frames()
            .into_iter()
            .filter(|f| f.label != heldout)
            .collect();
        if !in_dist.is_empty() {
            let mut correct = 0usize;
            let mut conf = 0.0;
            for f in &in_dist {
                let scores = heldout_model.scores(&f.samples)?;
                let pred = util::argmax(&scores);
                if pred == f.label.class_index() {
                    correct += 1;
                }
                conf += scores[pred] as f64;
            }
            report.sets.insert(
                "heldout_in_distribution".to_string(),
                super::ood::OodSetReport {
                    count: in_dist.len(),
                    accuracy: correct as f64 / in_dist.len() as f64,
                    mean_max_confidence: conf / in_dist.len() as f64,
                },
            );
        }
    }
    Ok(report)
}
