//! End-to-end runs: data selection per system, training, scoring, tables.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::backend::{
    extract_embeddings, rate_sweep_report, score_trials, train_plda, EmbeddingSet, PldaConfig,
    PldaModel, RateTable, Scorer, TrialScoreSet,
};
use crate::corpus::{make_trials_with, RateLabel, RateSelector, TrialList, TrialOptions, UtteranceRecord};
use crate::error::{Error, Result};
use crate::experiment::{
    augment_train, featurize, stretch_test_set, synth_toy_corpus, Protocol, ToyCorpusConfig,
};
use crate::features::{FeatureMatrix, FrontEndConfig};
use crate::model::{ModelConfig, ModelParams};
use crate::trainer::{run_training, SystemPreset, TrainConfig, TrainOutcome, TrainingData, TrainingSet};
use crate::tsm::TsmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Plda,
    Cosine,
}

/// Everything one experiment depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub systems: Vec<SystemPreset>,
    pub backend: BackendKind,
    pub corpus: ToyCorpusConfig,
    pub tsm: TsmConfig,
    pub features: FrontEndConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub plda: PldaConfig,
}

impl Default for ExperimentConfig {
    /// Desk-scale settings: a 64-dim embedding and 10 schedule cycles.
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            protocol: Protocol::Stretched,
            systems: vec![SystemPreset::Baseline, SystemPreset::FdAl],
            backend: BackendKind::Plda,
            corpus: ToyCorpusConfig::default(),
            tsm: TsmConfig::default(),
            features: FrontEndConfig::default(),
            model: ModelConfig {
                embed_dim: 64,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                iterations: 700,
                ..TrainConfig::default()
            },
            plda: PldaConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(Error::Config("systems must name at least one preset".into()));
        }
        for s in &self.systems {
            if s.native_rates() != (self.protocol == Protocol::NativeRates) {
                return Err(Error::Config(format!(
                    "preset {s} ({}) does not belong to the {:?} protocol",
                    s.system_id(),
                    self.protocol
                )));
            }
        }
        self.corpus.validate()?;
        self.tsm.validate()?;
        self.features.mfcc.validate()?;
        self.model.validate()?;
        self.train.validate()
    }

    /// Model and training configs with a preset applied.
    pub fn for_system(&self, preset: SystemPreset) -> (ModelConfig, TrainConfig) {
        let mut m = self.model.clone();
        let mut t = self.train.clone();
        preset.apply(&mut m, &mut t);
        (m, t)
    }
}

/// One test condition: which utterances enroll and which are tested.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub enroll: RateSelector,
    pub test: RateSelector,
}

pub fn conditions(protocol: Protocol, alphas: &[f64]) -> Vec<Condition> {
    match protocol {
        Protocol::Stretched => alphas
            .iter()
            .map(|&a| Condition {
                label: format!("{a:.1}"),
                enroll: RateSelector::Alpha(1.0),
                test: RateSelector::Alpha(a),
            })
            .collect(),
        Protocol::NativeRates => RateLabel::ALL
            .iter()
            .map(|&l| Condition {
                label: l.to_string(),
                enroll: RateSelector::Label(l),
                test: RateSelector::Label(l),
            })
            .collect(),
    }
}

/// Trial list of one condition; pairs from the same recording are dropped.
pub fn condition_trials(test: &[UtteranceRecord], c: &Condition) -> Result<TrialList> {
    make_trials_with(
        test,
        c.enroll,
        c.test,
        TrialOptions {
            exclude_same_source: true,
        },
    )
}

fn is_copy(r: &UtteranceRecord) -> bool {
    r.utt_id != r.source_utt()
}

/// Training rows a system uses out of the full training manifest.
pub fn select_training(records: &[UtteranceRecord], data: TrainingData) -> Vec<UtteranceRecord> {
    records
        .iter()
        .filter(|r| match data {
            TrainingData::Original | TrainingData::NormalOnly => {
                !is_copy(r) && r.rate_label == RateLabel::Normal
            }
            TrainingData::Augmented => true,
            TrainingData::AllRates => !is_copy(r),
            TrainingData::NormalPlusTsm => r.rate_label == RateLabel::Normal || is_copy(r),
        })
        .cloned()
        .collect()
}

/// Features of every utterance of an experiment, by split.
#[derive(Debug, Clone, Default)]
pub struct PreparedData {
    pub train: Vec<UtteranceRecord>,
    pub test: Vec<UtteranceRecord>,
    pub features: HashMap<String, FeatureMatrix>,
    pub errors: Vec<(String, String)>,
}

/// Synthesizes, augments and featurizes the whole corpus in memory.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let corpus = synth_toy_corpus(&cfg.corpus, cfg.protocol, cfg.seed)?;
    let aug = augment_train(&corpus.train, cfg.protocol, &cfg.tsm, cfg.seed)?;
    let test_extra = match cfg.protocol {
        Protocol::Stretched => stretch_test_set(&corpus.test, &cfg.corpus.test_alphas, &cfg.tsm)?,
        Protocol::NativeRates => Vec::new(),
    };
    let train: Vec<_> = corpus.train.iter().chain(&aug).collect();
    let test: Vec<_> = corpus.test.iter().chain(&test_extra).collect();
    let (features, errors) = featurize(train.iter().chain(&test).copied(), &cfg.features);
    Ok(PreparedData {
        train: train.iter().map(|u| u.record.clone()).collect(),
        test: test.iter().map(|u| u.record.clone()).collect(),
        features,
        errors,
    })
}

/// Embeddings of the records that have features; short ones are skipped.
pub fn embed(
    params: &ModelParams<f32>,
    records: &[UtteranceRecord],
    features: &HashMap<String, FeatureMatrix>,
) -> Result<EmbeddingSet<f32>> {
    let items = records
        .iter()
        .filter_map(|r| features.get(&r.utt_id).map(|f| (r.utt_id.as_str(), f)));
    let rep = extract_embeddings(params, items)?;
    for (u, why) in &rep.skipped {
        log::warn!("no embedding for {u}: {why}");
    }
    Ok(rep.set)
}

fn widen(set: &EmbeddingSet<f32>) -> EmbeddingSet<f64> {
    EmbeddingSet {
        dim: set.dim,
        vectors: set
            .vectors
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|&x| x as f64).collect()))
            .collect(),
    }
}

/// PLDA trained on the embeddings of `train`, grouped by speaker.
pub fn fit_plda(
    train: &[UtteranceRecord],
    embeddings: &EmbeddingSet<f64>,
    cfg: &PldaConfig,
) -> Result<PldaModel<f64>> {
    let mut groups: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for r in train {
        if let Some(v) = embeddings.get(&r.utt_id) {
            groups.entry(&r.speaker_id).or_default().push(v.to_vec());
        }
    }
    let groups: Vec<Vec<Vec<f64>>> = groups.into_values().collect();
    train_plda(&groups, cfg)
}

/// Trial list and scores of one condition.
pub fn score_condition(
    scorer: &Scorer<'_, f64>,
    test: &[UtteranceRecord],
    embeddings: &EmbeddingSet<f64>,
    c: &Condition,
) -> Result<(TrialList, TrialScoreSet)> {
    let trials = condition_trials(test, c)?;
    let scores = score_trials(scorer, embeddings, &trials)?;
    Ok((trials, scores))
}

/// Scores every condition with a trained model. Failed cells are returned
/// as errors rather than aborting the table.
pub fn evaluate(
    params: &ModelParams<f32>,
    train: &[UtteranceRecord],
    test: &[UtteranceRecord],
    features: &HashMap<String, FeatureMatrix>,
    conds: &[Condition],
    backend: BackendKind,
    plda_cfg: &PldaConfig,
) -> Result<Vec<Result<f64>>> {
    let test_set = widen(&embed(params, test, features)?);
    let plda = match backend {
        BackendKind::Cosine => None,
        BackendKind::Plda => Some(fit_plda(train, &widen(&embed(params, train, features)?), plda_cfg)?),
    };
    let scorer = match &plda {
        Some(m) => Scorer::Plda(m),
        None => Scorer::Cosine,
    };
    Ok(conds
        .iter()
        .map(|c| score_condition(&scorer, test, &test_set, c)?.1.eer().map(|e| e.eer))
        .collect())
}

#[derive(Debug, Clone)]
pub struct SystemResult {
    pub preset: SystemPreset,
    pub outcome: TrainOutcome<f32>,
    /// EER per condition, or why the cell failed.
    pub cells: Vec<std::result::Result<f64, String>>,
}

/// Trains one preset on its share of the data and scores every condition.
pub fn run_system(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    preset: SystemPreset,
    seed: u64,
    init: Option<&ModelParams<f32>>,
) -> Result<SystemResult> {
    let (model, train_cfg) = cfg.for_system(preset);
    let records = select_training(&data.train, preset.training_data());
    let set = TrainingSet::new(&records, &data.features, model.receptive_field());
    for (u, why) in &set.skipped {
        log::warn!("not training on {u}: {why}");
    }
    let outcome = run_training::<f32>(&set, &model, &train_cfg, seed, init)?;
    let conds = conditions(cfg.protocol, &cfg.corpus.test_alphas);
    let cells = evaluate(
        &outcome.params,
        &records,
        &data.test,
        &data.features,
        &conds,
        cfg.backend,
        &cfg.plda,
    )?;
    Ok(SystemResult {
        preset,
        outcome,
        cells: cells.into_iter().map(|c| c.map_err(|e| e.to_string())).collect(),
    })
}

pub fn column_labels(cfg: &ExperimentConfig) -> Vec<String> {
    conditions(cfg.protocol, &cfg.corpus.test_alphas)
        .into_iter()
        .map(|c| c.label)
        .collect()
}

/// The table of a finished run; the native-rate protocol gets an average column.
pub fn report_table(cfg: &ExperimentConfig, results: &[SystemResult]) -> RateTable {
    rate_sweep_report(
        column_labels(cfg),
        results
            .iter()
            .map(|r| (format!("{}:{}", r.preset.system_id(), r.preset.name()), r.cells.clone()))
            .collect(),
        cfg.protocol == Protocol::NativeRates,
    )
}

/// Data preparation, every configured system, and the table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RateTable, Vec<SystemResult>)> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let mut results = Vec::new();
    for &p in &cfg.systems {
        results.push(run_system(cfg, &data, p, cfg.seed, None)?);
    }
    let table = report_table(cfg, &results);
    Ok((table, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditions_per_protocol() {
        let c = conditions(Protocol::Stretched, &crate::tsm::alpha_grid());
        assert_eq!(c.len(), 16);
        assert_eq!(c[0].label, "0.5");
        let n = conditions(Protocol::NativeRates, &[]);
        assert_eq!(n.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(), ["slow", "normal", "fast"]);
    }

    #[test]
    fn training_selection() {
        let r = |id: &str, a: f64| UtteranceRecord::new(id, "s", "x.wav", a);
        let recs = vec![
            r("u1", 1.0),
            r("u1_a0.8", 0.8),
            r("u2_slow", 0.625),
            r("u2_normal", 1.0),
            r("u2_fast", 1.5),
        ];
        let ids = |d| select_training(&recs, d).into_iter().map(|r| r.utt_id).collect::<Vec<_>>();
        assert_eq!(ids(TrainingData::Original), ["u1", "u2_normal"]);
        assert_eq!(ids(TrainingData::Augmented).len(), 5);
        assert_eq!(ids(TrainingData::AllRates), ["u1", "u2_slow", "u2_normal", "u2_fast"]);
        assert_eq!(ids(TrainingData::NormalPlusTsm), ["u1", "u1_a0.8", "u2_normal"]);
    }

    #[test]
    fn preset_protocol_mismatch_rejected() {
        let cfg = ExperimentConfig {
            systems: vec![SystemPreset::RatesFdAl],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
