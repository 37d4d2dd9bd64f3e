//! Embedding extraction, PLDA and cosine scoring, EER and reports.

mod eer;
mod embeddings;
pub mod linalg;
mod plda;
mod report;
mod scoring;

pub use eer::{compute_eer, eer_from_points, roc_points, EerResult, RocPoint};
pub use embeddings::{
    cosine_score, extract_embeddings, read_embeddings, write_embeddings, EmbeddingSet,
    ExtractReport,
};
pub use plda::{train_plda, PldaConfig, PldaModel};
pub use report::{rate_sweep_report, RateTable, ReportRow};
pub use scoring::{read_scores, score_trials, write_scores, Scorer, TrialScore, TrialScoreSet};
