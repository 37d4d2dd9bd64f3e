//! Acoustic front-end: MFCC, energy VAD, sliding-window CMN, feature archives.

mod archive;
mod mfcc;
mod norm;

pub use archive::{read_archive, read_archive_index, read_matrix_at, write_archive, FEATURE_MAGIC};
pub use mfcc::{mfcc, mfcc_with_energy, MfccConfig};
pub use norm::{apply_mask, energy_vad, sliding_cmn, VadConfig};

use serde::{Deserialize, Serialize};

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

/// Frame shift of every feature matrix, in milliseconds.
pub const FRAME_SHIFT_MS: f64 = 10.0;

/// Row-major `frames x coefficients` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    pub source_utt: String,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature value".into()));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            source_utt: String::new(),
        })
    }

    pub fn with_source(mut self, utt_id: impl Into<String>) -> Self {
        self.source_utt = utt_id.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    /// Contiguous block of frames `[start, start + len)`.
    pub fn slice_rows(&self, start: usize, len: usize) -> FeatureMatrix {
        FeatureMatrix {
            rows: len,
            cols: self.cols,
            data: self.data[start * self.cols..(start + len) * self.cols].to_vec(),
            source_utt: self.source_utt.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEndConfig {
    pub mfcc: MfccConfig,
    pub vad: VadConfig,
    /// Sliding CMN window in frames.
    pub cmn_window: usize,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        FrontEndConfig {
            mfcc: MfccConfig::default(),
            vad: VadConfig::default(),
            cmn_window: 300,
        }
    }
}

/// MFCC, then VAD row deletion, then sliding CMN.
pub fn extract_features(
    clip: &AudioClip,
    cfg: &FrontEndConfig,
    utt_id: &str,
) -> Result<FeatureMatrix> {
    let (feats, energy) = mfcc_with_energy(clip, &cfg.mfcc)?;
    let mask = energy_vad(&energy, &cfg.vad)?;
    let voiced = apply_mask(&feats, &mask)?;
    Ok(sliding_cmn(&voiced, cfg.cmn_window).with_source(utt_id))
}
