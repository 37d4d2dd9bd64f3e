//! Synthetic-corpus experiments wiring every stage together.

mod pipeline;
mod toy;

pub use pipeline::{
    column_labels, condition_trials, conditions, embed, evaluate, fit_plda, prepare_data, report_table,
    run_experiment, run_system, score_condition, select_training, BackendKind, Condition, ExperimentConfig,
    PreparedData, SystemResult,
};
pub use toy::{
    augment_train, featurize, plan_normal_tsm, stretch, stretch_test_set, synth_toy_corpus,
    CorpusUtterance, Protocol, ToyCorpus, ToyCorpusConfig,
};
