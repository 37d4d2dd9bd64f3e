use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadConfig {
    /// Threshold relative to the utterance's mean log energy, in nats.
    pub offset: f64,
    /// Absolute log-energy floor; frames at or below it are never kept.
    pub floor: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            offset: -1.5,
            floor: -9.0,
        }
    }
}

/// Keeps frames whose log energy exceeds both `mean + offset` and the floor.
pub fn energy_vad(log_energy: &[f32], cfg: &VadConfig) -> Result<Vec<bool>> {
    if log_energy.is_empty() {
        return Err(Error::TooShort { have: 0, need: 1 });
    }
    let mean = log_energy.iter().map(|&e| e as f64).sum::<f64>() / log_energy.len() as f64;
    let threshold = mean + cfg.offset;
    let mask: Vec<bool> = log_energy
        .iter()
        .map(|&e| (e as f64) > threshold && (e as f64) > cfg.floor)
        .collect();
    if !mask.iter().any(|&k| k) {
        return Err(Error::EmptyAfterVad);
    }
    Ok(mask)
}

/// Deletes the rows whose mask entry is false.
pub fn apply_mask(features: &FeatureMatrix, mask: &[bool]) -> Result<FeatureMatrix> {
    if mask.len() != features.rows() {
        return Err(Error::Shape(format!(
            "mask of {} entries for {} frames",
            mask.len(),
            features.rows()
        )));
    }
    let kept: Vec<f32> = mask
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .flat_map(|(t, _)| features.row(t).iter().copied())
        .collect();
    let rows = kept.len() / features.cols().max(1);
    if rows == 0 {
        return Err(Error::EmptyAfterVad);
    }
    Ok(FeatureMatrix::new(rows, features.cols(), kept)?.with_source(features.source_utt.clone()))
}

/// Subtracts from each frame the mean of a `window`-frame block centred on it.
/// Near the edges the block is shifted to stay inside the utterance, so its
/// length is `min(window, T)`; with `T <= window` this is global mean removal.
pub fn sliding_cmn(features: &FeatureMatrix, window: usize) -> FeatureMatrix {
    let (t_len, d) = (features.rows(), features.cols());
    let width = window.max(1).min(t_len);
    let mut prefix = vec![0.0f64; (t_len + 1) * d];
    for t in 0..t_len {
        for j in 0..d {
            prefix[(t + 1) * d + j] = prefix[t * d + j] + features.row(t)[j] as f64;
        }
    }
    let mut out = Vec::with_capacity(t_len * d);
    for t in 0..t_len {
        let begin = (t as isize - (window / 2) as isize).max(0) as usize;
        let begin = begin.min(t_len - width);
        let end = begin + width;
        for j in 0..d {
            let mean = (prefix[end * d + j] - prefix[begin * d + j]) / width as f64;
            out.push((features.row(t)[j] as f64 - mean) as f32);
        }
    }
    FeatureMatrix::new(t_len, d, out)
        .expect("finite input stays finite")
        .with_source(features.source_utt.clone())
}
