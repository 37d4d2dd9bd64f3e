//! Time-scale modification (duration change at constant pitch) and the
//! speaking-rate augmentation planner.

mod plan;
mod wsola;

pub use plan::{
    alpha_grid, augment_corpus, augmented_utt_id, plan_voxceleb_style, snap_alpha,
    AugmentReport, AugmentationPlan, PlanEntry,
};
pub use wsola::{
    naive_resample, time_stretch, wsola_align, TsmConfig, TsmWindow, MAX_ALPHA, MIN_ALPHA,
};
