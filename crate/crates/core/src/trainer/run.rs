use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{RateLabel, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::losses::LossConfig;
use crate::model::{GroupFlags, ModelConfig, ModelParams, ParamGroup};
use crate::scalar::Scalar;
use crate::trainer::{
    batch_objective, AdversarialSchedule, Example, Metrics, OptimizerConfig, OptimizerState, Phase,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub chunk_frames: usize,
    /// Size of the fixed batch evaluated at phase boundaries.
    pub eval_batch_size: usize,
    pub schedule: AdversarialSchedule,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 140,
            batch_size: 16,
            chunk_frames: 200,
            eval_batch_size: 32,
            schedule: AdversarialSchedule::default(),
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.chunk_frames == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config(
                "train.batch_size, chunk_frames and eval_batch_size must be > 0".into(),
            ));
        }
        self.schedule.validate()?;
        self.optimizer.validate()?;
        self.loss.validate()
    }

    /// Whether the rate head or the cosine term take part in the objective.
    pub fn uses_rate_branch(&self) -> bool {
        self.loss.lambda1 > 0.0 || self.loss.lambda2 > 0.0
    }
}

#[derive(Debug, Clone)]
pub struct TrainingItem {
    pub utt_id: String,
    pub features: FeatureMatrix,
    pub speaker: usize,
    pub rate: RateLabel,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    /// Speaker ids in class-index order.
    pub speakers: Vec<String>,
    pub items: Vec<TrainingItem>,
    /// Records left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl TrainingSet {
    /// Joins manifest rows with their features. Rows without features or
    /// shorter than `min_frames` are skipped and reported.
    pub fn new(
        records: &[UtteranceRecord],
        features: &HashMap<String, FeatureMatrix>,
        min_frames: usize,
    ) -> Self {
        let speakers: Vec<String> = records
            .iter()
            .map(|r| r.speaker_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, usize> = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut set = TrainingSet {
            speakers: speakers.clone(),
            ..Default::default()
        };
        for r in records {
            match features.get(&r.utt_id) {
                None => set.skipped.push((r.utt_id.clone(), "no features".into())),
                Some(f) if f.rows() < min_frames => set.skipped.push((
                    r.utt_id.clone(),
                    format!("{} frames, need {min_frames}", f.rows()),
                )),
                Some(f) => set.items.push(TrainingItem {
                    utt_id: r.utt_id.clone(),
                    features: f.clone(),
                    speaker: index[r.speaker_id.as_str()],
                    rate: r.rate_label,
                }),
            }
        }
        set
    }

    pub fn rate_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for it in &self.items {
            c[it.rate.index()] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub phase: Phase,
    pub metrics: Metrics,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        write!(
            f,
            "{} {} {:.6} {:.6} {:.6} {:.6}",
            self.step, self.phase, m.l_id, m.l_rate, m.l_cos, m.total
        )
    }
}

/// Fixed-batch metrics before the first and after the last step of a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEval {
    pub phase: Phase,
    pub first_step: usize,
    pub last_step: usize,
    pub start: Metrics,
    pub end: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainStatus {
    Completed,
    /// Non-finite loss or parameters; the outcome holds the last good parameters.
    Diverged { step: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub log: Vec<LogEntry>,
    pub phase_evals: Vec<PhaseEval>,
    pub status: TrainStatus,
}

/// What an observer sees after each applied update.
pub struct StepRecord<'a, T> {
    pub step: usize,
    pub phase: Phase,
    pub before: &'a ModelParams<T>,
    pub after: &'a ModelParams<T>,
}

/// Groups that learn in a phase.
pub fn phase_groups(phase: Phase) -> GroupFlags {
    match phase {
        Phase::Maximize => GroupFlags::only(&[ParamGroup::CosineMap]),
        Phase::Minimize => GroupFlags::all_except(&[ParamGroup::CosineMap]),
    }
}

/// Copies every tensor of `src` whose name and shape match into `dst`.
/// Returns the names copied.
pub fn warm_start<T: Scalar>(dst: &mut ModelParams<T>, src: &ModelParams<T>) -> Vec<String> {
    let src_t = src.tensors();
    let mut copied = Vec::new();
    for t in dst.tensors_mut() {
        if let Some(s) = src_t.iter().find(|s| s.name == t.name && s.shape == t.shape) {
            t.data.copy_from_slice(s.data);
            copied.push(t.name);
        }
    }
    copied
}

fn chunk(f: &FeatureMatrix, len: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    if f.rows() <= len {
        return f.clone();
    }
    let start = rng.gen_range(0..=f.rows() - len);
    f.slice_rows(start, len)
}

fn examples<'a>(set: &TrainingSet, picks: &'a [(usize, FeatureMatrix)]) -> Vec<Example<'a>> {
    picks
        .iter()
        .map(|(i, f)| Example {
            features: f,
            speaker: set.items[*i].speaker,
            rate: set.items[*i].rate.index(),
        })
        .collect()
}

pub fn run_training<T: Scalar>(
    set: &TrainingSet,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    init: Option<&ModelParams<T>>,
) -> Result<TrainOutcome<T>> {
    run_training_observed(set, model, cfg, seed, init, |_| {})
}

/// Training loop; `observe` is called after every applied update.
pub fn run_training_observed<T: Scalar>(
    set: &TrainingSet,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    init: Option<&ModelParams<T>>,
    mut observe: impl FnMut(&StepRecord<'_, T>),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model.validate()?;
    if set.speakers.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 speakers, found {}",
            set.speakers.len()
        )));
    }
    if set.items.is_empty() {
        return Err(Error::Config("no usable training utterances".into()));
    }
    if cfg.uses_rate_branch() {
        let counts = set.rate_counts();
        let missing: Vec<&str> = RateLabel::ALL
            .iter()
            .filter(|l| counts[l.index()] == 0)
            .map(|l| l.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "the rate head needs slow, normal and fast training data; missing: {}",
                missing.join(", ")
            )));
        }
    }
    let min_frames = model.receptive_field();
    if let Some(it) = set.items.iter().find(|it| it.features.rows() < min_frames) {
        return Err(Error::TooShort {
            have: it.features.rows(),
            need: min_frames,
        });
    }

    let mut params = ModelParams::<T>::new(model.clone(), set.speakers.len(), seed)?;
    if let Some(src) = init {
        let copied = warm_start(&mut params, src);
        log::info!("warm start copied {} tensors", copied.len());
    }
    let mut opt = OptimizerState::new(&params, &cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
    let n_eval = cfg.eval_batch_size.min(set.items.len());
    let eval_picks: Vec<(usize, FeatureMatrix)> = sample(&mut eval_rng, set.items.len(), n_eval)
        .into_iter()
        .map(|i| (i, chunk(&set.items[i].features, cfg.chunk_frames, &mut eval_rng)))
        .collect();
    let eval = |p: &ModelParams<T>| -> Result<Metrics> {
        let ex = examples(set, &eval_picks);
        Ok(batch_objective(p, &ex, &cfg.loss, Phase::Minimize, false)?.0)
    };

    let mut log = Vec::with_capacity(cfg.iterations);
    let mut phase_evals = Vec::new();
    let mut open: Option<(Phase, usize, Metrics)> = None;
    let mut status = TrainStatus::Completed;

    for step in 0..cfg.iterations {
        let (phase, pos) = cfg.schedule.position(step);
        if pos == 0 || open.is_none() {
            let start = eval(&params)?;
            open = Some((phase, step, start));
        }
        let picks: Vec<(usize, FeatureMatrix)> = (0..cfg.batch_size)
            .map(|_| {
                let i = rng.gen_range(0..set.items.len());
                (i, chunk(&set.items[i].features, cfg.chunk_frames, &mut rng))
            })
            .collect();
        let batch = examples(set, &picks);
        let (metrics, grads) = batch_objective(&params, &batch, &cfg.loss, phase, true)?;
        let grads = grads.expect("gradients requested");
        if !metrics.is_finite() || !grads.is_finite() {
            status = TrainStatus::Diverged {
                step,
                reason: format!("non-finite loss or gradient ({metrics:?})"),
            };
            break;
        }
        let before = params.clone();
        opt.apply(&mut params, &grads, phase_groups(phase));
        if !params.is_finite() {
            params = before;
            status = TrainStatus::Diverged {
                step,
                reason: "non-finite parameters after update".into(),
            };
            break;
        }
        observe(&StepRecord {
            step,
            phase,
            before: &before,
            after: &params,
        });
        let entry = LogEntry {
            step,
            phase,
            metrics,
        };
        log::debug!("{entry}");
        log.push(entry);

        let phase_len = match phase {
            Phase::Maximize => cfg.schedule.max_phase_iters,
            Phase::Minimize => cfg.schedule.min_phase_iters,
        };
        if pos + 1 == phase_len || step + 1 == cfg.iterations {
            let (p, first_step, start) = open.take().expect("phase opened");
            let end = eval(&params)?;
            log::info!(
                "{p} phase {first_step}..={step}: L_cos {:.4} -> {:.4}, total {:.4} -> {:.4}",
                start.l_cos,
                end.l_cos,
                start.total,
                end.total
            );
            phase_evals.push(PhaseEval {
                phase: p,
                first_step,
                last_step: step,
                start,
                end,
            });
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        phase_evals,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DecompositionKind;

    fn tiny_set(rates: &[RateLabel]) -> TrainingSet {
        let mut items = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..3 {
            for (k, &r) in rates.iter().enumerate() {
                let data = (0..30 * 4)
                    .map(|i| ((i as f32) * 0.1 + s as f32).sin() + rng.gen_range(-0.1f32..0.1))
                    .collect();
                items.push(TrainingItem {
                    utt_id: format!("s{s}_{k}"),
                    features: FeatureMatrix::new(30, 4, data).unwrap(),
                    speaker: s,
                    rate: r,
                });
            }
        }
        TrainingSet {
            speakers: vec!["a".into(), "b".into(), "c".into()],
            items,
            skipped: vec![],
        }
    }

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            feat_dim: 4,
            channels: 6,
            kernels: vec![3, 2],
            dilations: vec![1, 2],
            embed_dim: 8,
            cos_dim: 4,
            decomposition: DecompositionKind::Attention,
            ..ModelConfig::default()
        }
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            iterations: 14,
            batch_size: 3,
            chunk_frames: 20,
            eval_batch_size: 4,
            schedule: AdversarialSchedule {
                max_phase_iters: 2,
                min_phase_iters: 5,
                adversarial: true,
            },
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_logs() {
        let set = tiny_set(&RateLabel::ALL);
        let a = run_training::<f32>(&set, &tiny_model(), &tiny_cfg(), 7, None).unwrap();
        let b = run_training::<f32>(&set, &tiny_model(), &tiny_cfg(), 7, None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        assert_eq!(a.log.len(), 14);
        assert_eq!(a.phase_evals.len(), 4);
        assert_eq!(a.status, TrainStatus::Completed);
    }

    #[test]
    fn missing_rate_class_is_a_config_error() {
        let set = tiny_set(&[RateLabel::Normal, RateLabel::Fast]);
        let err = run_training::<f32>(&set, &tiny_model(), &tiny_cfg(), 7, None).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("slow")), "{err}");
        // Without the rate branch the same data is fine.
        let mut cfg = tiny_cfg();
        cfg.loss.lambda1 = 0.0;
        cfg.loss.lambda2 = 0.0;
        cfg.schedule.adversarial = false;
        assert!(run_training::<f32>(&set, &tiny_model(), &cfg, 7, None).is_ok());
    }

    #[test]
    fn freezing_holds_every_step() {
        let set = tiny_set(&RateLabel::ALL);
        let mut checked = 0;
        run_training_observed::<f64>(&set, &tiny_model(), &tiny_cfg(), 3, None, |r| {
            for g in ParamGroup::ALL {
                if !phase_groups(r.phase).is_trainable(g) {
                    assert_eq!(r.before.group_snapshot(g), r.after.group_snapshot(g));
                }
            }
            checked += 1;
        })
        .unwrap();
        assert_eq!(checked, 14);
    }

    #[test]
    fn divergence_returns_last_good_params() {
        let set = tiny_set(&RateLabel::ALL);
        let mut cfg = tiny_cfg();
        cfg.optimizer.learning_rate = 1e30;
        cfg.optimizer.grad_clip = 0.0;
        cfg.schedule.adversarial = false;
        let out = run_training::<f32>(&set, &tiny_model(), &cfg, 3, None).unwrap();
        assert!(matches!(out.status, TrainStatus::Diverged { .. }));
        assert!(out.params.is_finite());
    }

    #[test]
    fn warm_start_copies_matching_tensors() {
        let a = ModelParams::<f32>::new(tiny_model(), 3, 1).unwrap();
        let mut b = ModelParams::<f32>::new(tiny_model(), 5, 2).unwrap();
        let copied = warm_start(&mut b, &a);
        assert!(!copied.contains(&"id_head.weight".to_string()));
        assert_eq!(a.tdnn, b.tdnn);
        assert_ne!(a.id_head.len(), b.id_head.len());
    }
}
