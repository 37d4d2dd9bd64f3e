//! Synthetic speaker corpora and their rate variants.

use std::collections::HashMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{synth_utterance, AudioClip, RateLabel, SynthSpeakerProfile, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureMatrix, FrontEndConfig};
use crate::tsm::{alpha_grid, augmented_utt_id, plan_voxceleb_style, time_stretch, AugmentationPlan, TsmConfig};

/// How rate variation enters the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Normal-rate recordings; other rates are time-stretched copies.
    Stretched,
    /// Each sentence recorded natively at slow, normal and fast syllable rates.
    NativeRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyCorpusConfig {
    pub train_speakers: usize,
    pub test_speakers: usize,
    pub train_utts_per_speaker: usize,
    pub test_utts_per_speaker: usize,
    /// Seconds, at the normal rate.
    pub duration: f64,
    pub syllable_rate: f64,
    /// Syllable rates of the native slow and fast recordings.
    pub slow_syllable_rate: f64,
    pub fast_syllable_rate: f64,
    /// Per-utterance relative spread of pitch and formants around the
    /// speaker's profile.
    pub session_f0_jitter: f64,
    pub session_formant_jitter: f64,
    /// Scales of the stretched test conditions.
    pub test_alphas: Vec<f64>,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        ToyCorpusConfig {
            train_speakers: 20,
            test_speakers: 30,
            train_utts_per_speaker: 12,
            test_utts_per_speaker: 5,
            duration: 2.0,
            syllable_rate: 4.0,
            slow_syllable_rate: 2.5,
            fast_syllable_rate: 6.0,
            session_f0_jitter: 0.04,
            session_formant_jitter: 0.06,
            test_alphas: alpha_grid(),
        }
    }
}

impl ToyCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_speakers < 2 || self.test_speakers < 2 {
            return Err(Error::Config("corpus needs at least 2 train and 2 test speakers".into()));
        }
        if self.train_utts_per_speaker == 0 || self.test_utts_per_speaker < 2 {
            return Err(Error::Config(
                "corpus needs >= 1 train and >= 2 test utterances per speaker".into(),
            ));
        }
        if !(self.slow_syllable_rate < self.syllable_rate && self.syllable_rate < self.fast_syllable_rate) {
            return Err(Error::Config("syllable rates must satisfy slow < normal < fast".into()));
        }
        if !(0.0..0.2).contains(&self.session_f0_jitter) || !(0.0..0.2).contains(&self.session_formant_jitter) {
            return Err(Error::Config("session jitters must lie in [0, 0.2)".into()));
        }
        if self.test_alphas.iter().any(|a| !(0.5..=2.0).contains(a)) {
            return Err(Error::Config("test_alphas must lie in [0.5, 2]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CorpusUtterance {
    pub record: UtteranceRecord,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, Default)]
pub struct ToyCorpus {
    pub train: Vec<CorpusUtterance>,
    pub test: Vec<CorpusUtterance>,
}

fn session_profile(base: &SynthSpeakerProfile, cfg: &ToyCorpusConfig, rng: &mut ChaCha8Rng) -> SynthSpeakerProfile {
    let mut p = base.clone();
    if cfg.session_f0_jitter > 0.0 {
        p.f0 = (p.f0 * (1.0 + rng.gen_range(-cfg.session_f0_jitter..cfg.session_f0_jitter))).clamp(100.0, 300.0);
    }
    if cfg.session_formant_jitter > 0.0 {
        for c in p.formant_centers.iter_mut() {
            *c *= 1.0 + rng.gen_range(-cfg.session_formant_jitter..cfg.session_formant_jitter);
        }
    }
    p
}

fn rate_variants(cfg: &ToyCorpusConfig, protocol: Protocol) -> Vec<(Option<RateLabel>, f64, f64)> {
    match protocol {
        Protocol::Stretched => vec![(None, cfg.syllable_rate, 1.0)],
        Protocol::NativeRates => [
            (RateLabel::Slow, cfg.slow_syllable_rate),
            (RateLabel::Normal, cfg.syllable_rate),
            (RateLabel::Fast, cfg.fast_syllable_rate),
        ]
        .into_iter()
        .map(|(l, r)| (Some(l), r, r / cfg.syllable_rate))
        .collect(),
    }
}

fn synth_group(
    prefix: &str,
    n_speakers: usize,
    n_utts: usize,
    cfg: &ToyCorpusConfig,
    protocol: Protocol,
    seed: u64,
) -> Result<Vec<CorpusUtterance>> {
    let mut out = Vec::new();
    for s in 0..n_speakers {
        let speaker = format!("{prefix}{s:03}");
        let spk_seed = seed.wrapping_mul(1_000_003).wrapping_add(s as u64) ^ prefix.len() as u64 * 0x9e37;
        let base = SynthSpeakerProfile::sample(spk_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(spk_seed ^ 0xabcd);
        for u in 0..n_utts {
            let session = session_profile(&base, cfg, &mut rng);
            let utt_seed: u64 = rng.gen();
            for (label, rate, alpha) in rate_variants(cfg, protocol) {
                let utt_id = match label {
                    None => format!("{speaker}_u{u:02}"),
                    Some(l) => format!("{speaker}_u{u:02}_{l}"),
                };
                let duration = (cfg.duration / alpha).clamp(0.5, 10.0);
                let clip = synth_utterance(&session, duration, rate, utt_seed)?;
                let path = PathBuf::from(&speaker).join(format!("{utt_id}.wav"));
                out.push(CorpusUtterance {
                    record: UtteranceRecord::new(utt_id, speaker.clone(), path, alpha),
                    clip,
                });
            }
        }
    }
    Ok(out)
}

/// Disjoint train and test speakers; natively recorded rates carry a nominal
/// scale equal to their syllable rate over the normal one.
pub fn synth_toy_corpus(cfg: &ToyCorpusConfig, protocol: Protocol, seed: u64) -> Result<ToyCorpus> {
    cfg.validate()?;
    Ok(ToyCorpus {
        train: synth_group("spk", cfg.train_speakers, cfg.train_utts_per_speaker, cfg, protocol, seed)?,
        test: synth_group("tst", cfg.test_speakers, cfg.test_utts_per_speaker, cfg, protocol, seed ^ 0x7e57)?,
    })
}

/// Normal recordings plus two extra copies on average, spread over 0.8, 0.9,
/// 1.1 and 1.2.
pub fn plan_normal_tsm() -> Result<AugmentationPlan> {
    AugmentationPlan::new([(0.8, 0.5), (0.9, 0.5), (1.1, 0.5), (1.2, 0.5)])
}

pub fn stretch(src: &CorpusUtterance, alpha: f64, tsm: &TsmConfig) -> Result<CorpusUtterance> {
    let utt_id = augmented_utt_id(&src.record.utt_id, alpha);
    let clip = time_stretch(&src.clip, alpha, tsm)?;
    let path = src.record.path.with_file_name(format!("{utt_id}.wav"));
    Ok(CorpusUtterance {
        record: UtteranceRecord::new(utt_id, src.record.speaker_id.clone(), path, alpha),
        clip,
    })
}

/// Stretched training copies chosen by `plan` among the normal-rate originals.
pub fn augment_train(
    train: &[CorpusUtterance],
    protocol: Protocol,
    tsm: &TsmConfig,
    seed: u64,
) -> Result<Vec<CorpusUtterance>> {
    let originals: Vec<&CorpusUtterance> = train
        .iter()
        .filter(|u| u.record.rate_label == RateLabel::Normal && u.record.utt_id == u.record.source_utt())
        .collect();
    let plan = match protocol {
        Protocol::Stretched => plan_voxceleb_style(originals.len())?,
        Protocol::NativeRates => plan_normal_tsm()?,
    };
    let mut out = Vec::new();
    for (alpha, idx) in plan.select(originals.len(), seed) {
        for i in idx {
            out.push(stretch(originals[i], alpha, tsm)?);
        }
    }
    Ok(out)
}

/// Time-stretched copies of every normal test utterance at each scale.
pub fn stretch_test_set(test: &[CorpusUtterance], alphas: &[f64], tsm: &TsmConfig) -> Result<Vec<CorpusUtterance>> {
    let mut out = Vec::new();
    for &a in alphas {
        if (a - 1.0).abs() < 1e-9 {
            continue;
        }
        for u in test.iter().filter(|u| u.record.rate_label == RateLabel::Normal) {
            out.push(stretch(u, a, tsm)?);
        }
    }
    Ok(out)
}

/// Features for every utterance; failures are reported per utterance.
pub fn featurize<'a>(
    utts: impl IntoIterator<Item = &'a CorpusUtterance>,
    cfg: &FrontEndConfig,
) -> (HashMap<String, FeatureMatrix>, Vec<(String, String)>) {
    let mut feats = HashMap::new();
    let mut errors = Vec::new();
    for u in utts {
        match extract_features(&u.clip, cfg, &u.record.utt_id) {
            Ok(f) => {
                feats.insert(u.record.utt_id.clone(), f);
            }
            Err(e) => errors.push((u.record.utt_id.clone(), e.to_string())),
        }
    }
    (feats, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyCorpusConfig {
        ToyCorpusConfig {
            train_speakers: 3,
            test_speakers: 2,
            train_utts_per_speaker: 4,
            test_utts_per_speaker: 2,
            duration: 1.0,
            test_alphas: vec![0.5, 1.0, 2.0],
            ..Default::default()
        }
    }

    #[test]
    fn corpus_counts_and_labels() {
        let c = synth_toy_corpus(&small(), Protocol::Stretched, 1).unwrap();
        assert_eq!(c.train.len(), 12);
        assert_eq!(c.test.len(), 4);
        assert!(c.train.iter().all(|u| u.record.rate_label == RateLabel::Normal));
        let n = synth_toy_corpus(&small(), Protocol::NativeRates, 1).unwrap();
        assert_eq!(n.train.len(), 36);
        let slow = n.train.iter().find(|u| u.record.rate_label == RateLabel::Slow).unwrap();
        let normal = n.train.iter().find(|u| u.record.rate_label == RateLabel::Normal).unwrap();
        assert!(slow.clip.len() > normal.clip.len());
        let train_spk: std::collections::BTreeSet<_> = c.train.iter().map(|u| &u.record.speaker_id).collect();
        assert!(c.test.iter().all(|u| !train_spk.contains(&u.record.speaker_id)));
    }

    #[test]
    fn augmentation_and_test_stretching() {
        let cfg = small();
        let tsm = TsmConfig::default();
        let c = synth_toy_corpus(&cfg, Protocol::Stretched, 2).unwrap();
        let aug = augment_train(&c.train, Protocol::Stretched, &tsm, 3).unwrap();
        // 12 originals: round(3) at five slow scales, round(1.5) = 2 at ten fast ones.
        assert_eq!(aug.len(), 5 * 3 + 10 * 2);
        let st = stretch_test_set(&c.test, &cfg.test_alphas, &tsm).unwrap();
        assert_eq!(st.len(), 2 * c.test.len());
        assert!(st.iter().all(|u| u.record.utt_id.contains("_a")));
        let (f, errs) = featurize(c.test.iter().chain(&st), &FrontEndConfig::default());
        assert!(errs.is_empty());
        assert_eq!(f.len(), c.test.len() + st.len());
    }
}
