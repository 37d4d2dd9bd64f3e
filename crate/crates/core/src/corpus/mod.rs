//! Audio ingestion, the synthetic speaker corpus, manifests and trial lists.

mod audio;
mod manifest;
mod synth;
mod trials;

pub use audio::{load_wav, save_wav, AudioClip, CANONICAL_SAMPLE_RATE};
pub use manifest::{
    build_manifest, read_manifest, write_manifest, AlphaMap, ManifestScan, RateLabel,
    UtteranceRecord, NORMAL_ALPHA_TOLERANCE,
};
pub use synth::{synth_utterance, SynthSpeakerProfile};
pub use trials::{
    make_trials, make_trials_with, read_trials, write_trials, RateSelector, Trial, TrialList,
    TrialOptions,
};
