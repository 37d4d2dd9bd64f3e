use serde::{Deserialize, Serialize};

use crate::corpus::AudioClip;
use crate::dsp::{hann_periodic, hann_symmetric};
use crate::error::{Error, Result};

pub const MIN_ALPHA: f64 = 0.5;
pub const MAX_ALPHA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsmWindow {
    /// Periodic Hann; overlap-adds to a constant at hops of N/2, N/4, ...
    Hann,
    /// Symmetric Hann.
    HannSymmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsmConfig {
    pub frame_length: usize,
    pub synthesis_hop: usize,
    pub search_tolerance: usize,
    pub window: TsmWindow,
}

impl Default for TsmConfig {
    fn default() -> Self {
        TsmConfig {
            frame_length: 1024,
            synthesis_hop: 256,
            search_tolerance: 256,
            window: TsmWindow::Hann,
        }
    }
}

impl TsmConfig {
    pub fn window_coefficients(&self) -> Vec<f64> {
        match self.window {
            TsmWindow::Hann => hann_periodic(self.frame_length),
            TsmWindow::HannSymmetric => hann_symmetric(self.frame_length),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length == 0 {
            return Err(Error::Config("tsm.frame_length must be positive".into()));
        }
        if self.synthesis_hop == 0 || self.synthesis_hop > self.frame_length {
            return Err(Error::Config(format!(
                "tsm.synthesis_hop must lie in [1, frame_length={}], got {}",
                self.frame_length, self.synthesis_hop
            )));
        }
        let w = self.window_coefficients();
        let hop = self.synthesis_hop;
        let min_env = (0..hop)
            .map(|i| w.iter().skip(i).step_by(hop).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if min_env <= 1e-9 {
            return Err(Error::Config(format!(
                "window overlap-add envelope vanishes at hop {hop}"
            )));
        }
        Ok(())
    }
}

/// Offset in `[-tolerance, tolerance]` at which a frame taken from `region`
/// best matches `reference` by normalized cross-correlation. The candidate for
/// offset `d` is `region[tolerance + d .. tolerance + d + reference.len()]`.
/// Ties go to the smallest |offset| (negative before positive); degenerate
/// all-zero input yields 0.
pub fn wsola_align(reference: &[f32], region: &[f32], tolerance: usize) -> isize {
    let n = reference.len();
    // Clip the search to what the region actually holds.
    let avail = region.len().saturating_sub(n);
    let ref_energy = dot_f32(reference, reference);
    if tolerance == 0 || n == 0 || ref_energy <= 0.0 {
        return 0;
    }

    // Running candidate energies from prefix sums of squares.
    let mut prefix = Vec::with_capacity(region.len() + 1);
    prefix.push(0.0f64);
    for &s in region {
        let last = *prefix.last().unwrap();
        prefix.push(last + (s as f64) * (s as f64));
    }
    let score = |d: isize| -> f64 {
        let start = tolerance as isize + d;
        if start < 0 || start as usize > avail {
            return f64::NEG_INFINITY;
        }
        let start = start as usize;
        let energy = prefix[start + n] - prefix[start];
        if energy <= 1e-20 {
            return 0.0;
        }
        dot_f32(reference, &region[start..start + n]) / (ref_energy * energy).sqrt()
    };

    let mut best = 0isize;
    let mut best_score = score(0);
    for mag in 1..=tolerance as isize {
        for d in [-mag, mag] {
            let s = score(d);
            if s > best_score {
                best_score = s;
                best = d;
            }
        }
    }
    best
}

fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    // Eight partial sums keep the loop vectorizable.
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (ra, rb) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut total: f64 = acc.iter().map(|&v| v as f64).sum();
    for (&x, &y) in ra.iter().zip(rb) {
        total += (x * y) as f64;
    }
    total
}

/// WSOLA time-scale modification: `alpha > 1` shortens (faster speech),
/// `alpha < 1` lengthens, pitch is preserved.
pub fn time_stretch(clip: &AudioClip, alpha: f64, cfg: &TsmConfig) -> Result<AudioClip> {
    if !(MIN_ALPHA - 1e-9..=MAX_ALPHA + 1e-9).contains(&alpha) {
        return Err(Error::AlphaOutOfRange { alpha });
    }
    cfg.validate()?;
    let n = cfg.frame_length;
    if clip.samples.len() < n {
        return Err(Error::TooShort {
            have: clip.samples.len(),
            need: n,
        });
    }
    if (alpha - 1.0).abs() <= 1e-9 {
        return Ok(clip.clone());
    }

    let hs = cfg.synthesis_hop;
    let tol = cfg.search_tolerance;
    let ha = hs as f64 * alpha;
    let in_len = clip.samples.len();
    let out_len = (in_len as f64 / alpha).round() as usize;
    let n_frames = out_len.div_ceil(hs) + 2;

    // Zero padding so every analysis frame and search region stays in bounds;
    // frame k is centred on input sample round(k * ha).
    let lead = n / 2 + tol;
    let last_nominal = ((n_frames + 1) as f64 * ha).round() as usize;
    let total = lead + last_nominal.max(in_len) + n + 2 * tol + hs + 1;
    let mut padded = vec![0.0f32; total];
    padded[lead..lead + in_len].copy_from_slice(&clip.samples);

    let window = cfg.window_coefficients();
    let mut acc = vec![0.0f64; n_frames * hs + n];
    let mut env = vec![0.0f64; n_frames * hs + n];
    let mut delta = 0isize;

    for k in 0..n_frames {
        let nominal = (k as f64 * ha).round() as usize;
        // Frame start in padded coordinates: centre at `nominal`, shifted by delta.
        let start = (nominal + tol) as isize + delta;
        let start = start.max(0) as usize;
        let frame = &padded[start..start + n];
        let out_pos = k * hs;
        for i in 0..n {
            acc[out_pos + i] += window[i] * frame[i] as f64;
            env[out_pos + i] += window[i];
        }

        // Natural continuation of the frame just placed.
        let natural = &padded[start + hs..start + hs + n];
        let next_nominal = ((k + 1) as f64 * ha).round() as usize;
        let region = &padded[next_nominal..next_nominal + n + 2 * tol];
        delta = wsola_align(natural, region, tol);
    }

    let offset = n / 2;
    let samples = (0..out_len)
        .map(|i| {
            let e = env[offset + i];
            if e > 1e-9 {
                (acc[offset + i] / e) as f32
            } else {
                0.0
            }
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_alpha: clip.source_alpha * alpha,
    })
}

/// Plain resampling to `len / alpha` samples by linear interpolation: the
/// tape-speed change that shifts pitch along with duration. Kept as the
/// contrast case for [`time_stretch`].
pub fn naive_resample(clip: &AudioClip, alpha: f64) -> Result<AudioClip> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Argument(format!("alpha must be positive, got {alpha}")));
    }
    let x = &clip.samples;
    let out_len = ((x.len() as f64 / alpha).round() as usize).max(1);
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * alpha;
            let j = pos.floor() as usize;
            if j + 1 >= x.len() {
                *x.last().unwrap()
            } else {
                let frac = (pos - j as f64) as f32;
                x[j] * (1.0 - frac) + x[j + 1] * frac
            }
        })
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_alpha: clip.source_alpha * alpha,
    })
}
