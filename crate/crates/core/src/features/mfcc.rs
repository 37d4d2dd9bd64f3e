use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::{AudioClip, CANONICAL_SAMPLE_RATE};
use crate::dsp::hann_periodic;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub window_length: usize,
    pub frame_shift: usize,
    pub fft_size: usize,
    pub num_mel_bins: usize,
    pub num_ceps: usize,
    pub low_freq: f64,
    pub high_freq: f64,
    pub pre_emphasis: f64,
    /// Floor applied to mel and frame energies before taking logs.
    pub energy_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: CANONICAL_SAMPLE_RATE,
            window_length: 400,
            frame_shift: 160,
            fft_size: 512,
            num_mel_bins: 40,
            num_ceps: 40,
            low_freq: 20.0,
            high_freq: 7600.0,
            pre_emphasis: 0.97,
            energy_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn num_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.window_length {
            0
        } else {
            (n_samples - self.window_length) / self.frame_shift + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.frame_shift == 0 {
            return Err(Error::Config("features: window and shift must be positive".into()));
        }
        if self.fft_size < self.window_length {
            return Err(Error::Config("features: fft_size smaller than the window".into()));
        }
        if self.num_ceps == 0 || self.num_ceps > self.num_mel_bins {
            return Err(Error::Config("features: num_ceps must be in [1, num_mel_bins]".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0 <= self.low_freq && self.low_freq < self.high_freq && self.high_freq <= nyquist) {
            return Err(Error::Config("features: mel bank bounds invalid".into()));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the `fft_size/2 + 1` power-spectrum bins.
fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<(usize, f64)>> {
    let n_bins = cfg.fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.low_freq), hz_to_mel(cfg.high_freq));
    let step = (hi - lo) / (cfg.num_mel_bins + 1) as f64;
    let edges: Vec<f64> = (0..cfg.num_mel_bins + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    (0..cfg.num_mel_bins)
        .map(|m| {
            let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > left && f <= centre {
                        (f - left) / (centre - left)
                    } else if f > centre && f < right {
                        (right - f) / (right - centre)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `num_ceps` rows of length `num_mel_bins`.
fn dct_matrix(num_ceps: usize, num_mel: usize) -> Vec<Vec<f64>> {
    (0..num_ceps)
        .map(|i| {
            let scale = if i == 0 {
                (1.0 / num_mel as f64).sqrt()
            } else {
                (2.0 / num_mel as f64).sqrt()
            };
            (0..num_mel)
                .map(|m| scale * (PI * i as f64 * (m as f64 + 0.5) / num_mel as f64).cos())
                .collect()
        })
        .collect()
}

/// Cepstra plus the per-frame log energy (raw frame, before pre-emphasis and
/// windowing) used by the energy VAD.
pub fn mfcc_with_energy(clip: &AudioClip, cfg: &MfccConfig) -> Result<(FeatureMatrix, Vec<f32>)> {
    cfg.validate()?;
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::SampleRate {
            have: clip.sample_rate,
            expected: cfg.sample_rate,
        });
    }
    let n_frames = cfg.num_frames(clip.samples.len());
    if n_frames == 0 {
        return Err(Error::TooShort {
            have: clip.samples.len(),
            need: cfg.window_length,
        });
    }

    let x: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let window = hann_periodic(cfg.window_length);
    let bank = mel_filterbank(cfg);
    let dct = dct_matrix(cfg.num_ceps, cfg.num_mel_bins);
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);

    let mut data = Vec::with_capacity(n_frames * cfg.num_ceps);
    let mut log_energy = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut power = vec![0.0; cfg.fft_size / 2 + 1];
    let mut log_mel = vec![0.0; cfg.num_mel_bins];

    for t in 0..n_frames {
        let frame = &x[t * cfg.frame_shift..t * cfg.frame_shift + cfg.window_length];
        let energy: f64 = frame.iter().map(|v| v * v).sum();
        log_energy.push(energy.max(cfg.energy_floor).ln() as f32);

        for c in buf.iter_mut() {
            *c = Complex::new(0.0, 0.0);
        }
        for i in 0..cfg.window_length {
            let prev = if i > 0 { frame[i - 1] } else { frame[0] };
            let emph = frame[i] - cfg.pre_emphasis * prev;
            buf[i] = Complex::new(emph * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for (lm, filt) in log_mel.iter_mut().zip(&bank) {
            let e: f64 = filt.iter().map(|&(k, w)| w * power[k]).sum();
            *lm = e.max(cfg.energy_floor).ln();
        }
        for basis in &dct {
            let c: f64 = basis.iter().zip(&log_mel).map(|(b, l)| b * l).sum();
            data.push(c as f32);
        }
    }
    Ok((FeatureMatrix::new(n_frames, cfg.num_ceps, data)?, log_energy))
}

pub fn mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    mfcc_with_energy(clip, cfg).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::sine;

    #[test]
    fn one_second_gives_98_frames_of_40() {
        let clip = AudioClip::new(sine(300.0, 0.3, 16000, 16000), 16000).unwrap();
        let m = mfcc(&clip, &MfccConfig::default()).unwrap();
        assert_eq!(m.rows(), 98);
        assert_eq!(m.cols(), 40);
        assert!(m.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn frame_count_formula() {
        let cfg = MfccConfig::default();
        for n in [400usize, 401, 559, 560, 561, 12345] {
            let clip = AudioClip::new(vec![0.01; n], 16000).unwrap();
            let m = mfcc(&clip, &cfg).unwrap();
            assert_eq!(m.rows(), (n - 400) / 160 + 1, "n = {n}");
        }
    }

    #[test]
    fn silence_frames_are_identical() {
        let clip = AudioClip::new(vec![0.0; 8000], 16000).unwrap();
        let m = mfcc(&clip, &MfccConfig::default()).unwrap();
        let first = m.row(0).to_vec();
        for t in 1..m.rows() {
            assert_eq!(m.row(t), &first[..]);
        }
    }

    #[test]
    fn deterministic() {
        let clip = AudioClip::new(sine(180.0, 0.3, 9000, 16000), 16000).unwrap();
        let cfg = MfccConfig::default();
        assert_eq!(mfcc(&clip, &cfg).unwrap(), mfcc(&clip, &cfg).unwrap());
    }

    #[test]
    fn rejects_short_and_wrong_rate() {
        let cfg = MfccConfig::default();
        let short = AudioClip::new(vec![0.0; 399], 16000).unwrap();
        assert!(matches!(mfcc(&short, &cfg), Err(Error::TooShort { .. })));
        let eight_k = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
        assert!(matches!(mfcc(&eight_k, &cfg), Err(Error::SampleRate { .. })));
    }

    #[test]
    fn filters_cover_band_without_gaps() {
        let bank = mel_filterbank(&MfccConfig::default());
        assert_eq!(bank.len(), 40);
        assert!(bank.iter().all(|f| !f.is_empty()));
    }
}
