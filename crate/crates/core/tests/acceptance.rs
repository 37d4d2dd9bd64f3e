//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; the process exits non-zero if any fail.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ratesv::backend::linalg::{Cholesky, Mat};
use ratesv::backend::{compute_eer, train_plda, PldaConfig, PldaModel};
use ratesv::corpus::{save_wav, AudioClip, RateLabel, UtteranceRecord, CANONICAL_SAMPLE_RATE};
use ratesv::dsp::{dominant_frequency, sine};
use ratesv::experiment::{prepare_data, run_experiment, run_system, ExperimentConfig, SystemResult};
use ratesv::features::FeatureMatrix;
use ratesv::losses::{am_softmax_loss, cosine_adversarial_loss, rate_ce_loss, LossConfig};
use ratesv::model::{
    attention_decompose, cosine_map, cosine_map_backward, decompose_backward, decompose_traced,
    stats_pool, stats_pool_backward, DecompositionKind, Embedding, ModelConfig, ModelParams,
    ParamGroup,
};
use ratesv::trainer::{
    batch_objective, phase_value, run_training_observed, AdversarialSchedule, Example, Phase,
    SystemPreset, TrainConfig, TrainingItem, TrainingSet,
};
use ratesv::tsm::{augment_corpus, naive_resample, plan_voxceleb_style, time_stretch, TsmConfig};

const IDENTITY_TOL: f64 = 1e-6;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_INSTANCES: usize = 50;
const COS_CASE_TOL: f64 = 1e-12;
const DURATION_TOL: f64 = 0.02;
const PITCH_TOL: f64 = 0.01;
const PHASE_FRACTION: f64 = 0.8;
const EER_TOL: f64 = 1e-9;
const PLDA_REL_TOL: f64 = 0.15;
const LLR_TOL: f64 = 1e-8;
const SEEDS: [u64; 3] = [1, 2, 3];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - n| / max(|a|, |n|)`, or zero when both vanish.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-10 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + GRAD_STEP;
            let up = f(&x);
            x[i] = orig - GRAD_STEP;
            let dn = f(&x);
            x[i] = orig;
            (up - dn) / (2.0 * GRAD_STEP)
        })
        .collect()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn small_model(kind: DecompositionKind, embed_dim: usize) -> ModelConfig {
    ModelConfig {
        feat_dim: 3,
        channels: 4,
        kernels: vec![2, 2],
        dilations: vec![1, 2],
        embed_dim,
        bottleneck_ratio: 2,
        cos_dim: 5,
        decomposition: kind,
        ..ModelConfig::default()
    }
}

fn decomposition_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for i in 0..10_000u64 {
        let d = rng.gen_range(2..=32usize);
        let params =
            ModelParams::<f64>::new(small_model(DecompositionKind::Attention, d), 2, i).unwrap();
        let phi = Embedding {
            phi: rand_vec(&mut rng, d, 10.0),
        };
        let dec = attention_decompose(&phi, &params);
        for k in 0..d {
            worst = worst.max((dec.x_id[k] + dec.x_rate[k] - phi.phi[k]).abs());
        }
    }
    check(worst < IDENTITY_TOL, format!("10000 instances, max deviation {worst:.2e}"))
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|w| w.0 == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };

    for inst in 0..GRAD_INSTANCES as u64 {
        // Attention decomposition: inputs and gate parameters.
        let d = rng.gen_range(3..=10usize);
        let params =
            ModelParams::<f64>::new(small_model(DecompositionKind::Attention, d), 2, inst).unwrap();
        let phi = rand_vec(&mut rng, d, 2.0);
        let (u, v) = (rand_vec(&mut rng, d, 1.0), rand_vec(&mut rng, d, 1.0));
        let probe = |p: &ModelParams<f64>, phi: &[f64]| {
            let (dec, _) = decompose_traced(phi, p);
            dec.x_id.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
                + dec.x_rate.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
        };
        let (dec, trace) = decompose_traced(&phi, &params);
        let mut grads = params.zeros_like();
        let d_phi = decompose_backward(&params, &phi, &dec, &trace, &u, &v, &mut grads);
        let mut analytic = d_phi;
        let mut numeric = central_diff(|x| probe(&params, x), &phi);
        let attention_tensors: Vec<usize> = params
            .tensors()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.group == ParamGroup::Attention)
            .map(|(i, _)| i)
            .collect();
        for &ti in &attention_tensors {
            let base = params.tensors()[ti].data.to_vec();
            numeric.extend(central_diff(
                |x| {
                    let mut p = params.clone();
                    p.tensors_mut()[ti].data.copy_from_slice(x);
                    probe(&p, &phi)
                },
                &base,
            ));
            analytic.extend_from_slice(grads.tensors()[ti].data);
        }
        record("attention_decompose", rel_err(&analytic, &numeric));

        // Cosine mapping block: both inputs and both affine maps.
        let x_id = rand_vec(&mut rng, d, 2.0);
        let x_rate = rand_vec(&mut rng, d, 2.0);
        let (u, v) = (rand_vec(&mut rng, 5, 1.0), rand_vec(&mut rng, 5, 1.0));
        let probe = |p: &ModelParams<f64>, a: &[f64], b: &[f64]| {
            let (mi, mr) = cosine_map(a, b, p);
            mi.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>()
                + mr.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>()
        };
        let mut grads = params.zeros_like();
        let (da, db) = cosine_map_backward(&params, &x_id, &x_rate, &u, &v, &mut grads);
        let mut analytic = [da, db].concat();
        let mut numeric = central_diff(|x| probe(&params, x, &x_rate), &x_id);
        numeric.extend(central_diff(|x| probe(&params, &x_id, x), &x_rate));
        for (ti, t) in params.tensors().iter().enumerate() {
            if t.group != ParamGroup::CosineMap {
                continue;
            }
            numeric.extend(central_diff(
                |x| {
                    let mut p = params.clone();
                    p.tensors_mut()[ti].data.copy_from_slice(x);
                    probe(&p, &x_id, &x_rate)
                },
                t.data,
            ));
            analytic.extend_from_slice(grads.tensors()[ti].data);
        }
        record("cosine_map", rel_err(&analytic, &numeric));

        // The three losses.
        let a = rand_vec(&mut rng, d, 2.0);
        let b = rand_vec(&mut rng, d, 2.0);
        let l = cosine_adversarial_loss(&a, &b, 1e-8).unwrap();
        let mut numeric = central_diff(|x| cosine_adversarial_loss(x, &b, 1e-8).unwrap().value, &a);
        numeric.extend(central_diff(|x| cosine_adversarial_loss(&a, x, 1e-8).unwrap().value, &b));
        record("cosine loss", rel_err(&[l.grad_a, l.grad_b].concat(), &numeric));

        let classes = rng.gen_range(2..=8usize);
        let label = rng.gen_range(0..classes);
        let cosines = rand_vec(&mut rng, classes, 1.0);
        let l = am_softmax_loss(&cosines, label, 30.0, 0.2).unwrap();
        let numeric = central_diff(|x| am_softmax_loss(x, label, 30.0, 0.2).unwrap().value, &cosines);
        record("am-softmax", rel_err(&l.grad, &numeric));

        let logits = rand_vec(&mut rng, 3, 3.0);
        let label = rng.gen_range(0..3);
        let l = rate_ce_loss(&logits, label).unwrap();
        let numeric = central_diff(|x| rate_ce_loss(x, label).unwrap().value, &logits);
        record("rate cross-entropy", rel_err(&l.grad, &numeric));

        // Statistics pooling.
        let frames = rng.gen_range(2..=12usize);
        let ch = rng.gen_range(1..=6usize);
        let h = rand_vec(&mut rng, frames * ch, 2.0);
        let w = rand_vec(&mut rng, 2 * ch, 1.0);
        let floor = 1e-6;
        let pooled = stats_pool(&h, frames, ch, floor);
        let analytic = stats_pool_backward(&h, frames, ch, &pooled, &w);
        let numeric = central_diff(
            |x| {
                let p = stats_pool(x, frames, ch, floor);
                p.output.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            },
            &h,
        );
        record("stats pooling", rel_err(&analytic, &numeric));
    }

    // Full training objective for every decomposer, both phases.
    let loss = LossConfig {
        am_scale: 5.0,
        ..LossConfig::default()
    };
    for inst in 0..GRAD_INSTANCES as u64 {
        for kind in [
            DecompositionKind::Attention,
            DecompositionKind::Parallel,
            DecompositionKind::Identity,
        ] {
            let mut params = ModelParams::<f64>::new(small_model(kind, 6), 3, 100 + inst).unwrap();
            // Zero biases put dead frames exactly on the ReLU kink; move off it.
            for t in params.tensors_mut() {
                t.data.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
            }
            let feats: Vec<FeatureMatrix> = (0..2)
                .map(|_| {
                    let data = (0..9 * 3).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                    FeatureMatrix::new(9, 3, data).unwrap()
                })
                .collect();
            let batch: Vec<Example> = feats
                .iter()
                .enumerate()
                .map(|(i, f)| Example {
                    features: f,
                    speaker: (i + inst as usize) % 3,
                    rate: (i + 1 + inst as usize) % 3,
                })
                .collect();
            for phase in [Phase::Minimize, Phase::Maximize] {
                let (_, g) = batch_objective(&params, &batch, &loss, phase, true).unwrap();
                let g = g.unwrap();
                let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
                for (ti, t) in params.tensors().iter().enumerate() {
                    let active = (t.group == ParamGroup::CosineMap) == (phase == Phase::Maximize);
                    if !active {
                        continue;
                    }
                    numeric.extend(central_diff(
                        |x| {
                            let mut p = params.clone();
                            p.tensors_mut()[ti].data.copy_from_slice(x);
                            let m = batch_objective(&p, &batch, &loss, phase, false).unwrap().0;
                            phase_value(&m, phase)
                        },
                        t.data,
                    ));
                    analytic.extend_from_slice(g.tensors()[ti].data);
                }
                record("training objective", rel_err(&analytic, &numeric));
            }
        }
    }

    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(max < GRAD_TOL, format!("{GRAD_INSTANCES} instances each; max rel err: {detail}"))
}

fn cosine_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut in_range = true;
    for _ in 0..10_000 {
        let d = rng.gen_range(1..=16usize);
        let scale = 10f64.powi(rng.gen_range(-6..6));
        let a = rand_vec(&mut rng, d, scale);
        let b = if rng.gen_bool(0.1) {
            a.iter().map(|x| -3.0 * x).collect()
        } else {
            rand_vec(&mut rng, d, 1.0)
        };
        let v = cosine_adversarial_loss(&a, &b, 1e-8).unwrap().value;
        in_range &= (0.0..=1.0).contains(&v);
    }
    let value = |a: &[f64], b: &[f64]| cosine_adversarial_loss(a, b, 1e-8).unwrap().value;
    let parallel = value(&[1.0, 2.0, -3.0], &[2.0, 4.0, -6.0]);
    let orthogonal = value(&[1.0, 0.0, 0.0], &[0.0, 5.0, 0.0]);
    let diag = value(&[1.0, 0.0], &[1.0, 1.0]);
    let ok = in_range
        && (parallel - 1.0).abs() <= COS_CASE_TOL
        && orthogonal.abs() <= COS_CASE_TOL
        && (diag - 0.5).abs() <= COS_CASE_TOL;
    check(
        ok,
        format!("fuzz in [0,1]: {in_range}; parallel {parallel}, orthogonal {orthogonal}, 45deg {diag}"),
    )
}

fn tsm_properties() -> Outcome {
    let sr = CANONICAL_SAMPLE_RATE;
    let n = 2 * sr as usize;
    let cfg = TsmConfig::default();
    let (mut worst_dur, mut worst_pitch) = (0.0f64, 0.0f64);
    let mut naive_failed = true;
    let mut naive_worst_factor = 0.0f64;
    for f in [110.0, 220.0, 330.0] {
        let clip = AudioClip::new(sine(f, 0.5, n, sr), sr).unwrap();
        for alpha in [0.5, 0.8, 1.2, 2.0] {
            let out = time_stretch(&clip, alpha, &cfg).unwrap();
            let want = n as f64 / alpha;
            worst_dur = worst_dur.max((out.len() as f64 - want).abs() / want);
            let peak = dominant_frequency(&out.samples, sr, 1 << 16);
            worst_pitch = worst_pitch.max((peak - f).abs() / f);

            let naive = naive_resample(&clip, alpha).unwrap();
            let peak = dominant_frequency(&naive.samples, sr, 1 << 16);
            naive_failed &= (peak - f).abs() / f > PITCH_TOL;
            naive_worst_factor = naive_worst_factor.max((peak / f / alpha - 1.0).abs());
        }
    }
    let ok = worst_dur <= DURATION_TOL && worst_pitch <= PITCH_TOL && naive_failed;
    check(
        ok,
        format!(
            "duration err {:.3}%, pitch err {:.3}%, resample control fails pitch: {naive_failed} \
             (peak/f within {:.2}% of alpha)",
            100.0 * worst_dur,
            100.0 * worst_pitch,
            100.0 * naive_worst_factor
        ),
    )
}

fn augmentation_arithmetic() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sr = CANONICAL_SAMPLE_RATE;
    let clip = AudioClip::new(sine(200.0, 0.3, 2400, sr), sr).unwrap();
    let originals: Vec<UtteranceRecord> = (0..1000)
        .map(|i| {
            let path = dir.path().join(format!("u{i:04}.wav"));
            save_wav(&path, &clip).unwrap();
            UtteranceRecord::new(format!("u{i:04}"), format!("s{:02}", i % 50), path, 1.0)
        })
        .collect();
    let plan = plan_voxceleb_style(1000).unwrap();
    let report = augment_corpus(&originals, &plan, &TsmConfig::default(), 5).unwrap();
    let total = report.records.len();
    check(
        plan.expected_total(1000) == 3500 && total == 3500 && report.errors.is_empty(),
        format!("planned {}, written {total}, errors {}", plan.expected_total(1000), report.errors.len()),
    )
}

fn freezing_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut items = Vec::new();
    for s in 0..4 {
        for (k, &r) in RateLabel::ALL.iter().enumerate() {
            let data = (0..40 * 4)
                .map(|i| ((i as f32) * 0.1 + s as f32).sin() + rng.gen_range(-0.2f32..0.2))
                .collect();
            items.push(TrainingItem {
                utt_id: format!("s{s}_{k}"),
                features: FeatureMatrix::new(40, 4, data).unwrap(),
                speaker: s,
                rate: r,
            });
        }
    }
    let set = TrainingSet {
        speakers: (0..4).map(|s| format!("s{s}")).collect(),
        items,
        skipped: vec![],
    };
    let model = ModelConfig {
        feat_dim: 4,
        channels: 6,
        kernels: vec![3, 2],
        dilations: vec![1, 2],
        embed_dim: 8,
        cos_dim: 4,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        iterations: 140,
        batch_size: 4,
        chunk_frames: 20,
        eval_batch_size: 4,
        schedule: AdversarialSchedule::default(),
        ..TrainConfig::default()
    };
    let (mut steps, mut violations, mut moved_max, mut moved_min) = (0, 0, 0, 0);
    run_training_observed::<f32>(&set, &model, &cfg, 3, None, |rec| {
        steps += 1;
        let mut moved_active = false;
        for (a, b) in rec.before.tensors().iter().zip(rec.after.tensors().iter()) {
            let same = a.data.iter().zip(b.data).all(|(x, y)| x.to_bits() == y.to_bits());
            let active = (a.group == ParamGroup::CosineMap) == (rec.phase == Phase::Maximize);
            if !active && !same {
                violations += 1;
            }
            moved_active |= active && !same;
        }
        if moved_active {
            match rec.phase {
                Phase::Maximize => moved_max += 1,
                Phase::Minimize => moved_min += 1,
            }
        }
    })
    .unwrap();
    check(
        steps == 140 && violations == 0 && moved_max > 0 && moved_min > 0,
        format!(
            "{steps} steps, {violations} frozen tensors changed; active groups moved in \
             {moved_max} max and {moved_min} min steps"
        ),
    )
}

fn toy_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed,
        systems: vec![SystemPreset::Baseline, SystemPreset::FdAl],
        ..ExperimentConfig::default()
    };
    cfg.corpus.test_alphas = vec![0.5, 1.0, 2.0];
    cfg
}

fn phase_dynamics(fd_al: &SystemResult) -> Outcome {
    let evals = &fd_al.outcome.phase_evals;
    let after_first_cycle = evals.iter().skip(2);
    let (mut max_up, mut max_n, mut min_down, mut min_n) = (0, 0, 0, 0);
    for e in after_first_cycle {
        match e.phase {
            Phase::Maximize => {
                max_n += 1;
                max_up += (e.end.l_cos > e.start.l_cos) as usize;
            }
            Phase::Minimize => {
                min_n += 1;
                min_down += (e.end.l_cos < e.start.l_cos) as usize;
            }
        }
    }
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    check(
        frac(max_up, max_n) >= PHASE_FRACTION && frac(min_down, min_n) >= PHASE_FRACTION,
        format!("L_cos rose in {max_up}/{max_n} max phases, fell in {min_down}/{min_n} min phases"),
    )
}

fn cells(r: &SystemResult) -> Result<[f64; 3], String> {
    let v: Result<Vec<f64>, String> = r.cells.iter().cloned().collect();
    let v = v?;
    Ok([v[0], v[1], v[2]])
}

fn rate_pattern(runs: &[(u64, Vec<SystemResult>)]) -> Outcome {
    let mut lines = Vec::new();
    let (mut a_ok, mut b_ok) = (0, 0);
    for (seed, results) in runs {
        let (b, f) = match (cells(&results[0]), cells(&results[1])) {
            (Ok(b), Ok(f)) => (b, f),
            (Err(e), _) | (_, Err(e)) => {
                lines.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let a = b[0] > b[1] && b[2] > b[1];
        let m = f[0] <= b[0] && f[2] <= b[2];
        a_ok += a as usize;
        b_ok += m as usize;
        lines.push(format!(
            "seed {seed} baseline {:.1}/{:.1}/{:.1} fd-al {:.1}/{:.1}/{:.1}",
            100.0 * b[0],
            100.0 * b[1],
            100.0 * b[2],
            100.0 * f[0],
            100.0 * f[1],
            100.0 * f[2]
        ));
    }
    check(
        a_ok == SEEDS.len() && b_ok == SEEDS.len(),
        format!("(a) {a_ok}/3 (b) {b_ok}/3 [EER % at 0.5/1.0/2.0: {}]", lines.join("; ")),
    )
}

/// EER by sweeping every threshold and interpolating the FAR/FRR crossing,
/// counting acceptances from scratch at each threshold.
fn brute_force_eer(targets: &[f64], impostors: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = targets.iter().chain(impostors).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let rates = |t: f64| {
        let far = impostors.iter().filter(|&&s| s >= t).count() as f64 / impostors.len() as f64;
        let frr = targets.iter().filter(|&&s| s < t).count() as f64 / targets.len() as f64;
        (far, frr)
    };
    let mut pts = vec![(0.0, 1.0)];
    pts.extend(thresholds.iter().map(|&t| rates(t)));
    for w in pts.windows(2) {
        let ((f0, r0), (f1, r1)) = (w[0], w[1]);
        let (g0, g1) = (r0 - f0, r1 - f1);
        if g0 >= 0.0 && g1 <= 0.0 {
            let t = if g0 == g1 { 0.0 } else { g0 / (g0 - g1) };
            return f0 + t * (f1 - f0);
        }
    }
    unreachable!()
}

fn eer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let nt = rng.gen_range(1..=100usize);
        let ni = rng.gen_range(1..=(200 - nt));
        let shift = rng.gen_range(0.0..3.0);
        // Coarse rounding produces ties in some sets.
        let quant = if rng.gen_bool(0.3) { 4.0 } else { 1e9 };
        let mut draw = |mean: f64| {
            let v: f64 = StandardNormal.sample(&mut rng);
            ((v + mean) * quant).round() / quant
        };
        let targets: Vec<f64> = (0..nt).map(|_| draw(shift)).collect();
        let impostors: Vec<f64> = (0..ni).map(|_| draw(0.0)).collect();
        let got = compute_eer(&targets, &impostors).unwrap().eer;
        worst = worst.max((got - brute_force_eer(&targets, &impostors)).abs());
    }
    check(worst <= EER_TOL, format!("1000 score sets, max |diff| {worst:.2e}"))
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Mat<f64> {
    let a = Mat::from_rows(
        &(0..d)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect())
            .collect::<Vec<Vec<f64>>>(),
    )
    .unwrap();
    let mut m = a.matmul(&a.transpose()).scale(scale / d as f64);
    m.add_diagonal(0.2 * scale);
    m
}

fn gauss(chol: &Cholesky<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z: Vec<f64> = (0..chol.lower.n).map(|_| StandardNormal.sample(&mut *rng)).collect();
    chol.lower.matvec(&z)
}

/// Log density of a zero-mean Gaussian with a dense covariance, by explicit
/// Gauss-Jordan inversion.
fn log_normal(x: &[f64], cov: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let mut a: Vec<Vec<f64>> = cov
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        let piv = a[c][c];
        det *= piv;
        for v in a[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let k = a[r][c];
                let src = a[c].clone();
                for (v, s) in a[r].iter_mut().zip(src) {
                    *v -= k * s;
                }
            }
        }
    }
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += x[i] * a[i][n + j] * x[j];
        }
    }
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
}

fn plda_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let d = 8;
    let b = random_spd(&mut rng, d, 2.0);
    let w = random_spd(&mut rng, d, 0.5);
    let (bc, wc) = (Cholesky::new(&b).unwrap(), Cholesky::new(&w).unwrap());
    let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let groups: Vec<Vec<Vec<f64>>> = (0..500)
        .map(|_| {
            let y: Vec<f64> = gauss(&bc, &mut rng).iter().zip(&mu).map(|(a, m)| a + m).collect();
            (0..10)
                .map(|_| gauss(&wc, &mut rng).iter().zip(&y).map(|(e, c)| e + c).collect())
                .collect()
        })
        .collect();
    let cfg = PldaConfig {
        iterations: 50,
        length_norm: false,
        ..PldaConfig::default()
    };
    let model = train_plda(&groups, &cfg).unwrap();
    let rel = |est: &Mat<f64>, truth: &Mat<f64>| est.sub(truth).frobenius() / truth.frobenius();
    let (eb, ew) = (rel(&model.between, &b), rel(&model.within, &w));
    let monotone = model.log_likelihood.windows(2).all(|p| p[1] >= p[0] - 1e-9 * p[0].abs());

    // Two-dimensional model: closed form against the joint Gaussian of the pair.
    let b2 = Mat::from_rows(&[vec![1.5, 0.4], vec![0.4, 0.8]]).unwrap();
    let w2 = Mat::from_rows(&[vec![0.6, -0.1], vec![-0.1, 0.3]]).unwrap();
    let mu2 = vec![0.3, -0.2];
    let m2 = PldaModel::<f64>::from_parts(mu2.clone(), b2.clone(), w2.clone()).unwrap();
    let t = |i: usize, j: usize| b2.at(i, j) + w2.at(i, j);
    let total: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| t(i, j)).collect()).collect();
    let joint: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            (0..4)
                .map(|j| if i / 2 == j / 2 { t(i % 2, j % 2) } else { b2.at(i % 2, j % 2) })
                .collect()
        })
        .collect();
    let mut llr_err = 0.0f64;
    for _ in 0..200 {
        let x1: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x2: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c1: Vec<f64> = x1.iter().zip(&mu2).map(|(a, m)| a - m).collect();
        let c2: Vec<f64> = x2.iter().zip(&mu2).map(|(a, m)| a - m).collect();
        let direct = log_normal(&[c1.clone(), c2.clone()].concat(), &joint)
            - log_normal(&c1, &total)
            - log_normal(&c2, &total);
        llr_err = llr_err.max((m2.score(&x1, &x2).unwrap() - direct).abs());
    }
    check(
        eb <= PLDA_REL_TOL && ew <= PLDA_REL_TOL && monotone && llr_err <= LLR_TOL,
        format!(
            "B rel err {:.1}%, W rel err {:.1}%, EM monotone: {monotone}, D=2 LLR max |diff| {llr_err:.1e}",
            100.0 * eb,
            100.0 * ew
        ),
    )
}

fn determinism() -> Outcome {
    let mut cfg = toy_config(7);
    cfg.corpus.train_speakers = 8;
    cfg.corpus.train_utts_per_speaker = 4;
    cfg.corpus.test_speakers = 6;
    cfg.corpus.test_utts_per_speaker = 3;
    cfg.train.iterations = 70;
    cfg.model.embed_dim = 16;
    let (a, ra) = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let (b, rb) = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let same_params = ra.iter().zip(&rb).all(|(x, y)| x.outcome.params == y.outcome.params);
    check(
        a.to_text() == b.to_text() && same_params,
        format!("tables identical: {}, parameters identical: {same_params}", a.to_text() == b.to_text()),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failures += r.is_err() as usize;
        println!("criterion {n:2} {tag} {name}: {detail} ({secs:.1} s)");
    };

    report(1, "decomposition identity", &mut decomposition_identity);
    report(2, "gradient suite", &mut gradient_suite);
    report(3, "cosine loss bounds", &mut cosine_bounds);
    report(4, "time-scale modification", &mut tsm_properties);
    report(5, "augmentation arithmetic", &mut augmentation_arithmetic);
    report(6, "freezing contract", &mut freezing_contract);

    let mut runs: Vec<(u64, Vec<SystemResult>)> = Vec::new();
    let mut toy_error = None;
    for seed in SEEDS {
        let cfg = toy_config(seed);
        let out = prepare_data(&cfg).and_then(|data| {
            cfg.systems
                .iter()
                .map(|&p| run_system(&cfg, &data, p, seed, None))
                .collect::<ratesv::Result<Vec<_>>>()
        });
        match out {
            Ok(r) => runs.push((seed, r)),
            Err(e) => toy_error = Some(format!("seed {seed}: {e}")),
        }
    }
    report(7, "adversarial dynamics", &mut || match runs.first() {
        Some((_, r)) => phase_dynamics(&r[1]),
        None => Err(toy_error.clone().unwrap_or_default()),
    });
    report(8, "rate pattern", &mut || match &toy_error {
        Some(e) => Err(e.clone()),
        None => rate_pattern(&runs),
    });
    report(9, "EER oracle", &mut eer_oracle);
    report(10, "PLDA recovery", &mut plda_recovery);
    report(11, "determinism", &mut determinism);

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
