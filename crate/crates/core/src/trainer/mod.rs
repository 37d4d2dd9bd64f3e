//! Multi-task training with the alternating cosine adversarial schedule.

mod objective;
mod optim;
mod presets;
mod run;
mod schedule;

pub use objective::{batch_objective, example_objective, phase_value, Example, Metrics};
pub use optim::{OptimizerConfig, OptimizerState};
pub use presets::{SystemPreset, TrainingData};
pub use run::{
    phase_groups, run_training, run_training_observed, warm_start, LogEntry, PhaseEval, StepRecord,
    TrainConfig, TrainOutcome, TrainStatus, TrainingItem, TrainingSet,
};
pub use schedule::{AdversarialSchedule, Phase};
