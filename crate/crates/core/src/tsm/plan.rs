use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{load_wav, save_wav, UtteranceRecord};
use crate::error::{Error, Result};
use crate::tsm::{time_stretch, TsmConfig, MAX_ALPHA, MIN_ALPHA};

/// Snaps a scale factor to the 0.1 grid.
pub fn snap_alpha(alpha: f64) -> f64 {
    (alpha * 10.0).round() / 10.0
}

/// The 16 grid points 0.5, 0.6, ..., 2.0.
pub fn alpha_grid() -> Vec<f64> {
    (5..=20).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub alpha: f64,
    /// Fraction of the originals stretched to this scale.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    entries: Vec<PlanEntry>,
}

impl AugmentationPlan {
    pub fn new(entries: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut out: Vec<PlanEntry> = Vec::new();
        for (alpha, fraction) in entries {
            let alpha = snap_alpha(alpha);
            if !(MIN_ALPHA..=MAX_ALPHA).contains(&alpha) {
                return Err(Error::AlphaOutOfRange { alpha });
            }
            if (alpha - 1.0).abs() < 1e-9 {
                return Err(Error::Argument(
                    "alpha 1.0 cannot appear in an augmentation plan".into(),
                ));
            }
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Argument(format!(
                    "fraction {fraction} for alpha {alpha} outside (0, 1]"
                )));
            }
            if out.iter().any(|e| (e.alpha - alpha).abs() < 1e-9) {
                return Err(Error::Argument(format!("alpha {alpha} listed twice")));
            }
            out.push(PlanEntry { alpha, fraction });
        }
        Ok(AugmentationPlan { entries: out })
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    /// Number of stretched copies made at one scale from `n_originals`.
    pub fn count_for(entry: &PlanEntry, n_originals: usize) -> usize {
        (entry.fraction * n_originals as f64).round() as usize
    }

    /// Originals plus every stretched copy.
    pub fn expected_total(&self, n_originals: usize) -> usize {
        n_originals
            + self
                .entries
                .iter()
                .map(|e| Self::count_for(e, n_originals))
                .sum::<usize>()
    }

    /// Per-scale original indices, each a seeded uniform sample without
    /// replacement.
    pub fn select(&self, n_originals: usize, seed: u64) -> Vec<(f64, Vec<usize>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (0xa5a5_0000 + i as u64).rotate_left(23));
                let k = Self::count_for(e, n_originals).min(n_originals);
                let mut idx = rand::seq::index::sample(&mut rng, n_originals, k).into_vec();
                idx.sort_unstable();
                (e.alpha, idx)
            })
            .collect()
    }
}

/// A quarter of the originals at each slow scale 0.5..0.9 and an eighth at
/// each fast scale 1.1..2.0, giving about 3.5x the original data in total.
pub fn plan_voxceleb_style(n_originals: usize) -> Result<AugmentationPlan> {
    if n_originals == 0 {
        return Err(Error::Argument("need at least one original utterance".into()));
    }
    let entries = alpha_grid()
        .into_iter()
        .filter(|a| (a - 1.0).abs() > 1e-9)
        .map(|a| (a, if a < 1.0 { 0.25 } else { 0.125 }));
    AugmentationPlan::new(entries)
}

/// Derived utterance id for a stretched copy.
pub fn augmented_utt_id(utt_id: &str, alpha: f64) -> String {
    format!("{utt_id}_a{:.1}", snap_alpha(alpha))
}

#[derive(Debug, Default)]
pub struct AugmentReport {
    /// Originals followed by the new records.
    pub records: Vec<UtteranceRecord>,
    pub added: Vec<UtteranceRecord>,
    pub errors: Vec<(String, String)>,
}

/// Stretches the planned subsets of `manifest` and writes the audio beside
/// each original as `{utt}_a{alpha}.wav`.
pub fn augment_corpus(
    manifest: &[UtteranceRecord],
    plan: &AugmentationPlan,
    cfg: &TsmConfig,
    seed: u64,
) -> Result<AugmentReport> {
    if let Some(r) = manifest.iter().find(|r| (r.alpha - 1.0).abs() > 1e-9) {
        return Err(Error::Argument(format!(
            "augmentation source {} is not an original (alpha {})",
            r.utt_id, r.alpha
        )));
    }
    cfg.validate()?;
    let mut report = AugmentReport {
        records: manifest.to_vec(),
        ..Default::default()
    };
    for (alpha, indices) in plan.select(manifest.len(), seed) {
        for i in indices {
            let src = &manifest[i];
            let utt_id = augmented_utt_id(&src.utt_id, alpha);
            let path: PathBuf = src.path.with_file_name(format!("{utt_id}.wav"));
            let result = load_wav(&src.path)
                .and_then(|clip| time_stretch(&clip, alpha, cfg))
                .and_then(|out| save_wav(&path, &out));
            match result {
                Ok(()) => {
                    let rec = UtteranceRecord::new(utt_id, src.speaker_id.clone(), path, alpha);
                    report.added.push(rec.clone());
                    report.records.push(rec);
                }
                Err(e) => {
                    log::warn!("augmenting {} at {alpha}: {e}", src.utt_id);
                    report.errors.push((utt_id, e.to_string()));
                }
            }
        }
    }
    Ok(report)
}
