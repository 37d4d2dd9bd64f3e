//! Parametric voiced-speech generator standing in for a recorded corpus.
//!
//! Each speaker is a glottal-like harmonic source at a characteristic pitch,
//! shaped by three formant resonances. Utterances are sequences of syllables:
//! raised-cosine energy bursts at a chosen syllable rate with slightly varying
//! vowel colour, separated by near-silent gaps, plus a low noise floor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{AudioClip, CANONICAL_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpeakerProfile {
    pub f0: f64,
    pub formant_centers: [f64; 3],
    pub formant_bandwidths: [f64; 3],
    pub seed: u64,
}

impl SynthSpeakerProfile {
    /// Draws a speaker with pitch in [100, 300] Hz and formants in typical
    /// adult vowel ranges.
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_0000_0001);
        SynthSpeakerProfile {
            f0: rng.gen_range(100.0..300.0),
            formant_centers: [
                rng.gen_range(350.0..900.0),
                rng.gen_range(1000.0..2300.0),
                rng.gen_range(2400.0..3400.0),
            ],
            formant_bandwidths: [
                rng.gen_range(60.0..140.0),
                rng.gen_range(80.0..180.0),
                rng.gen_range(120.0..250.0),
            ],
            seed,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(100.0..=300.0).contains(&self.f0) {
            return Err(Error::Argument(format!("f0 {} Hz outside [100, 300]", self.f0)));
        }
        for (&c, &b) in self.formant_centers.iter().zip(&self.formant_bandwidths) {
            if !(c > 0.0 && c < nyquist && b > 0.0) {
                return Err(Error::Argument(format!(
                    "formant {c} Hz / bandwidth {b} Hz invalid below Nyquist {nyquist} Hz"
                )));
            }
        }
        Ok(())
    }
}

/// Relative resonance gain at `freq`, in [0, 3].
fn formant_gain(freq: f64, centers: &[f64; 3], bandwidths: &[f64; 3]) -> f64 {
    centers
        .iter()
        .zip(bandwidths)
        .map(|(&c, &b)| {
            let x = (freq - c) / (0.5 * b);
            1.0 / (1.0 + x * x)
        })
        .sum()
}

struct Syllable {
    start: usize,
    len: usize,
    gain: f64,
    /// Per-harmonic amplitudes for this syllable's vowel colour.
    harmonics: Vec<f64>,
}

/// Generates one utterance at 16 kHz.
pub fn synth_utterance(
    profile: &SynthSpeakerProfile,
    duration: f64,
    syllable_rate: f64,
    seed: u64,
) -> Result<AudioClip> {
    if !(0.5..=10.0).contains(&duration) {
        return Err(Error::Argument(format!("duration {duration} s outside [0.5, 10]")));
    }
    if !(1.0..=10.0).contains(&syllable_rate) {
        return Err(Error::Argument(format!(
            "syllable rate {syllable_rate} Hz outside [1, 10]"
        )));
    }
    let sr = CANONICAL_SAMPLE_RATE;
    profile.validate(sr)?;
    let n = (duration * sr as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ profile.seed.rotate_left(17),
    );

    let f0 = profile.f0 * (1.0 + rng.gen_range(-0.01..0.01));
    let max_freq = 0.45 * sr as f64;
    let n_harm = ((max_freq / f0).floor() as usize).max(1);
    let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

    let period = sr as f64 / syllable_rate;
    let mut syllables = Vec::new();
    let mut t = rng.gen_range(0.0..0.25) * period;
    while (t as usize) < n {
        let len = (period * rng.gen_range(0.5..0.75)) as usize;
        let shift = 1.0 + rng.gen_range(-0.08..0.08);
        let centers = profile.formant_centers.map(|c| c * shift);
        let mut harmonics: Vec<f64> = (1..=n_harm)
            .map(|k| {
                let f = k as f64 * f0;
                (0.15 + formant_gain(f, &centers, &profile.formant_bandwidths)) / k as f64
            })
            .collect();
        // Keep the fundamental the strongest component.
        let rest = harmonics.iter().skip(1).copied().fold(0.0, f64::max);
        harmonics[0] = harmonics[0].max(1.2 * rest);
        syllables.push(Syllable {
            start: t as usize,
            len: len.max(2),
            gain: rng.gen_range(0.5..1.0),
            harmonics,
        });
        t += period * (1.0 + rng.gen_range(-0.1..0.1));
    }

    let mut out = vec![0.0f64; n];
    let w0 = 2.0 * PI * f0 / sr as f64;
    for syl in &syllables {
        let end = (syl.start + syl.len).min(n);
        for (i, o) in out.iter_mut().enumerate().take(end).skip(syl.start) {
            let pos = (i - syl.start) as f64 / (syl.len - 1) as f64;
            let env = syl.gain * (0.5 - 0.5 * (2.0 * PI * pos).cos());
            let base = w0 * i as f64;
            let mut acc = 0.0;
            for (k, (&a, &ph)) in syl.harmonics.iter().zip(&phases).enumerate() {
                acc += a * (base * (k + 1) as f64 + ph).sin();
            }
            *o = env * acc;
        }
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.5 / peak } else { 1.0 };
    let noise = Normal::new(0.0, 0.002).expect("valid noise sigma");
    let samples = out
        .into_iter()
        .map(|v| (v * scale + noise.sample(&mut rng)).clamp(-1.0, 1.0) as f32)
        .collect();
    AudioClip::new(samples, sr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::dominant_frequency;

    #[test]
    fn duration_is_exact() {
        let p = SynthSpeakerProfile::sample(3);
        let clip = synth_utterance(&p, 2.0, 4.0, 11).unwrap();
        assert_eq!(clip.samples.len(), 32000);
        assert_eq!(clip.sample_rate, 16000);
        assert!(clip.samples.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn dominant_peak_is_the_pitch() {
        let mut p = SynthSpeakerProfile::sample(5);
        p.f0 = 200.0;
        let clip = synth_utterance(&p, 2.0, 4.0, 1).unwrap();
        let f = dominant_frequency(&clip.samples, 16000, 1 << 16);
        assert!((f - 200.0).abs() / 200.0 < 0.02, "peak {f}");
    }

    #[test]
    fn deterministic_given_seeds() {
        let p = SynthSpeakerProfile::sample(9);
        let a = synth_utterance(&p, 1.0, 5.0, 42).unwrap();
        let b = synth_utterance(&p, 1.0, 5.0, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = synth_utterance(&p, 1.0, 5.0, 43).unwrap();
        assert_ne!(a.samples, c.samples);
        assert_eq!(SynthSpeakerProfile::sample(9), p);
    }

    #[test]
    fn distinct_pitches_give_distinct_peaks() {
        let mut a = SynthSpeakerProfile::sample(1);
        let mut b = SynthSpeakerProfile::sample(2);
        a.f0 = 120.0;
        b.f0 = 240.0;
        let fa = dominant_frequency(&synth_utterance(&a, 1.5, 4.0, 0).unwrap().samples, 16000, 1 << 16);
        let fb = dominant_frequency(&synth_utterance(&b, 1.5, 4.0, 0).unwrap().samples, 16000, 1 << 16);
        assert!((fa - fb).abs() > 50.0);
    }

    #[test]
    fn rejects_out_of_range_arguments() {
        let p = SynthSpeakerProfile::sample(1);
        assert!(synth_utterance(&p, 0.2, 4.0, 0).is_err());
        assert!(synth_utterance(&p, 2.0, 12.0, 0).is_err());
        let mut bad = p.clone();
        bad.f0 = 50.0;
        assert!(synth_utterance(&bad, 2.0, 4.0, 0).is_err());
    }

    #[test]
    fn sampled_profiles_are_valid() {
        for s in 0..200 {
            SynthSpeakerProfile::sample(s).validate(16000).unwrap();
        }
    }
}
