//! Forward computations and their hand-derived backward passes.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::losses::{normalize, Normalized};
use crate::model::{stats_pool, stats_pool_backward, Decomposer, ModelParams, PooledStats};
use crate::scalar::{axpy, dot, logistic, Scalar};

/// Norm floor for the identity head's cosine scoring.
pub const HEAD_NORM_FLOOR: f64 = 1e-8;

/// Utterance-level embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub phi: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    /// Channel gate in (0, 1); all zeros when no attention block is used.
    pub sigma: Vec<T>,
    pub x_id: Vec<T>,
    pub x_rate: Vec<T>,
}

/// Intermediate values of the encoder needed by its backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    /// Input of each conv layer followed by the last layer's output.
    pub activations: Vec<Vec<T>>,
    pub frames: Vec<usize>,
    pub pooled: PooledStats<T>,
}

pub fn features_to<T: Scalar>(features: &FeatureMatrix) -> Vec<T> {
    features.data().iter().map(|&v| T::of_f32(v)).collect()
}

fn check_input<T: Scalar>(params: &ModelParams<T>, frames: usize, cols: usize) -> Result<()> {
    if cols != params.config.feat_dim {
        return Err(Error::Shape(format!(
            "features have {cols} coefficients, model expects {}",
            params.config.feat_dim
        )));
    }
    let need = params.config.receptive_field();
    if frames < need {
        return Err(Error::TooShort { have: frames, need });
    }
    Ok(())
}

/// Frame-level convolutions, statistics pooling and projection to the
/// embedding, keeping what the backward pass needs.
pub fn encode_traced<T: Scalar>(
    input: Vec<T>,
    frames: usize,
    params: &ModelParams<T>,
) -> Result<(Vec<T>, EncoderTrace<T>)> {
    check_input(params, frames, input.len() / frames.max(1))?;
    let mut activations = vec![input];
    let mut frame_counts = vec![frames];
    for layer in &params.tdnn {
        let t_in = *frame_counts.last().unwrap();
        let out = layer.forward(activations.last().unwrap(), t_in);
        frame_counts.push(layer.out_frames(t_in).unwrap());
        activations.push(out);
    }
    let pooled = stats_pool(
        activations.last().unwrap(),
        *frame_counts.last().unwrap(),
        params.config.channels,
        T::of(params.config.pool_var_floor),
    );
    let phi = params.projection.forward(&pooled.output);
    Ok((
        phi,
        EncoderTrace {
            activations,
            frames: frame_counts,
            pooled,
        },
    ))
}

pub fn encode<T: Scalar>(features: &FeatureMatrix, params: &ModelParams<T>) -> Result<Embedding<T>> {
    check_input(params, features.rows(), features.cols())?;
    let (phi, _) = encode_traced(features_to(features), features.rows(), params)?;
    Ok(Embedding { phi })
}

/// Accumulates encoder gradients for an upstream `dL/dphi`.
pub fn encoder_backward<T: Scalar>(
    params: &ModelParams<T>,
    trace: &EncoderTrace<T>,
    d_phi: &[T],
    grads: &mut ModelParams<T>,
) {
    let d_pooled = params
        .projection
        .backward(&trace.pooled.output, d_phi, &mut grads.projection);
    let n_layers = params.tdnn.len();
    let mut d_act = stats_pool_backward(
        &trace.activations[n_layers],
        trace.frames[n_layers],
        params.config.channels,
        &trace.pooled,
        &d_pooled,
    );
    for l in (0..n_layers).rev() {
        let dx = params.tdnn[l].backward(
            &trace.activations[l],
            trace.frames[l],
            &trace.activations[l + 1],
            &d_act,
            &mut grads.tdnn[l],
            l > 0,
        );
        if let Some(dx) = dx {
            d_act = dx;
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecomposeTrace<T> {
    /// Bottleneck activations after ReLU (attention block only).
    pub hidden: Vec<T>,
}

pub fn decompose_traced<T: Scalar>(
    phi: &[T],
    params: &ModelParams<T>,
) -> (Decomposition<T>, DecomposeTrace<T>) {
    match &params.decomposer {
        Decomposer::Attention { squeeze, excite } => {
            let hidden: Vec<T> = squeeze
                .forward(phi)
                .into_iter()
                .map(|v| v.max(T::zero()))
                .collect();
            let sigma: Vec<T> = excite.forward(&hidden).into_iter().map(logistic).collect();
            let x_rate = sigma.iter().zip(phi).map(|(&s, &p)| s * p).collect();
            let x_id = sigma
                .iter()
                .zip(phi)
                .map(|(&s, &p)| (T::one() - s) * p)
                .collect();
            (Decomposition { sigma, x_id, x_rate }, DecomposeTrace { hidden })
        }
        Decomposer::Parallel { id, rate } => (
            Decomposition {
                sigma: vec![T::zero(); phi.len()],
                x_id: id.forward(phi),
                x_rate: rate.forward(phi),
            },
            DecomposeTrace::default(),
        ),
        Decomposer::Identity => (
            Decomposition {
                sigma: vec![T::zero(); phi.len()],
                x_id: phi.to_vec(),
                x_rate: vec![T::zero(); phi.len()],
            },
            DecomposeTrace::default(),
        ),
    }
}

/// Splits the embedding into identity and rate components.
pub fn attention_decompose<T: Scalar>(phi: &Embedding<T>, params: &ModelParams<T>) -> Decomposition<T> {
    decompose_traced(&phi.phi, params).0
}

/// Returns `dL/dphi` and accumulates decomposer gradients.
pub fn decompose_backward<T: Scalar>(
    params: &ModelParams<T>,
    phi: &[T],
    dec: &Decomposition<T>,
    trace: &DecomposeTrace<T>,
    d_id: &[T],
    d_rate: &[T],
    grads: &mut ModelParams<T>,
) -> Vec<T> {
    match (&params.decomposer, &mut grads.decomposer) {
        (
            Decomposer::Attention { squeeze, excite },
            Decomposer::Attention {
                squeeze: g_squeeze,
                excite: g_excite,
            },
        ) => {
            let mut d_phi: Vec<T> = (0..phi.len())
                .map(|k| (T::one() - dec.sigma[k]) * d_id[k] + dec.sigma[k] * d_rate[k])
                .collect();
            // Through the gate: d sigma = phi * (d_rate - d_id), then the logistic.
            let d_z: Vec<T> = (0..phi.len())
                .map(|k| {
                    let s = dec.sigma[k];
                    phi[k] * (d_rate[k] - d_id[k]) * s * (T::one() - s)
                })
                .collect();
            let mut d_hidden = excite.backward(&trace.hidden, &d_z, g_excite);
            for (g, &h) in d_hidden.iter_mut().zip(&trace.hidden) {
                if h <= T::zero() {
                    *g = T::zero();
                }
            }
            let d_phi_gate = squeeze.backward(phi, &d_hidden, g_squeeze);
            axpy(T::one(), &d_phi_gate, &mut d_phi);
            d_phi
        }
        (Decomposer::Parallel { id, rate }, Decomposer::Parallel { id: g_id, rate: g_rate }) => {
            let mut d_phi = id.backward(phi, d_id, g_id);
            let d2 = rate.backward(phi, d_rate, g_rate);
            axpy(T::one(), &d2, &mut d_phi);
            d_phi
        }
        (Decomposer::Identity, Decomposer::Identity) => d_id.to_vec(),
        _ => unreachable!("gradient container mirrors the parameters"),
    }
}

/// Per-branch affine maps feeding the cosine adversarial loss.
pub fn cosine_map<T: Scalar>(x_id: &[T], x_rate: &[T], params: &ModelParams<T>) -> (Vec<T>, Vec<T>) {
    (params.cos_id.forward(x_id), params.cos_rate.forward(x_rate))
}

pub fn cosine_map_backward<T: Scalar>(
    params: &ModelParams<T>,
    x_id: &[T],
    x_rate: &[T],
    d_mapped_id: &[T],
    d_mapped_rate: &[T],
    grads: &mut ModelParams<T>,
) -> (Vec<T>, Vec<T>) {
    (
        params.cos_id.backward(x_id, d_mapped_id, &mut grads.cos_id),
        params.cos_rate.backward(x_rate, d_mapped_rate, &mut grads.cos_rate),
    )
}

/// Traced identity-head scoring: cosines plus the normalized operands.
pub struct IdHeadTrace<T> {
    pub cosines: Vec<T>,
    pub input: Normalized<T>,
    pub rows: Vec<Normalized<T>>,
}

pub fn id_head_traced<T: Scalar>(x_id: &[T], params: &ModelParams<T>) -> Result<IdHeadTrace<T>> {
    let d = params.config.embed_dim;
    if x_id.len() != d || params.id_head.len() != params.num_speakers * d {
        return Err(Error::Shape(format!(
            "identity head expects {d}-dim input and {} classes",
            params.num_speakers
        )));
    }
    let eps = T::of(HEAD_NORM_FLOOR);
    let input = normalize(x_id, eps);
    let rows: Vec<Normalized<T>> = params.id_head.chunks(d).map(|w| normalize(w, eps)).collect();
    let cosines = rows.iter().map(|w| dot(&input.unit, &w.unit)).collect();
    Ok(IdHeadTrace {
        cosines,
        input,
        rows,
    })
}

/// Cosine between the normalized identity component and each class direction.
pub fn id_logits<T: Scalar>(x_id: &[T], params: &ModelParams<T>) -> Result<Vec<T>> {
    id_head_traced(x_id, params).map(|t| t.cosines)
}

pub fn id_head_backward<T: Scalar>(
    trace: &IdHeadTrace<T>,
    d_cos: &[T],
    grads: &mut ModelParams<T>,
) -> Vec<T> {
    let d = trace.input.unit.len();
    let mut d_unit = vec![T::zero(); d];
    for (j, (row, &g)) in trace.rows.iter().zip(d_cos).enumerate() {
        if g == T::zero() {
            continue;
        }
        axpy(g, &row.unit, &mut d_unit);
        let d_row_unit: Vec<T> = trace.input.unit.iter().map(|&v| g * v).collect();
        let d_row = row.backward(&d_row_unit);
        axpy(T::one(), &d_row, &mut grads.id_head[j * d..(j + 1) * d]);
    }
    trace.input.backward(&d_unit)
}

pub fn rate_logits<T: Scalar>(x_rate: &[T], params: &ModelParams<T>) -> Result<Vec<T>> {
    if x_rate.len() != params.rate_head.in_dim {
        return Err(Error::Shape(format!(
            "rate head expects {}-dim input, got {}",
            params.rate_head.in_dim,
            x_rate.len()
        )));
    }
    Ok(params.rate_head.forward(x_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DecompositionKind, Linear, ModelConfig};

    fn small(kind: DecompositionKind) -> ModelParams<f64> {
        let cfg = ModelConfig {
            feat_dim: 4,
            channels: 3,
            kernels: vec![3, 2],
            dilations: vec![1, 2],
            embed_dim: 6,
            bottleneck_ratio: 2,
            cos_dim: 6,
            decomposition: kind,
            ..ModelConfig::default()
        };
        ModelParams::new(cfg, 3, 5).unwrap()
    }

    fn feats(rows: usize, cols: usize, seed: f32) -> FeatureMatrix {
        let data = (0..rows * cols)
            .map(|i| ((i as f32 + seed) * 0.731).sin())
            .collect();
        FeatureMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn encode_is_deterministic_and_checks_length() {
        let p = small(DecompositionKind::Attention);
        let f = feats(12, 4, 0.0);
        assert_eq!(encode(&f, &p).unwrap(), encode(&f, &p).unwrap());
        let rf = p.config.receptive_field();
        assert!(matches!(encode(&feats(rf - 1, 4, 0.0), &p), Err(Error::TooShort { .. })));
        assert!(encode(&feats(rf, 4, 0.0), &p).is_ok());
        assert!(matches!(encode(&feats(12, 5, 0.0), &p), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_attention_weights_split_in_half() {
        let mut p = small(DecompositionKind::Attention);
        if let Decomposer::Attention { squeeze, excite } = &mut p.decomposer {
            *squeeze = Linear::zeros(squeeze.in_dim, squeeze.out_dim);
            *excite = Linear::zeros(excite.in_dim, excite.out_dim);
        }
        let phi = Embedding {
            phi: vec![1.0, -2.0, 0.5, 3.0, 0.0, 7.0],
        };
        let dec = attention_decompose(&phi, &p);
        assert!(dec.sigma.iter().all(|&s| s == 0.5));
        for k in 0..6 {
            assert_eq!(dec.x_id[k], phi.phi[k] / 2.0);
            assert_eq!(dec.x_rate[k], phi.phi[k] / 2.0);
        }
    }

    #[test]
    fn identity_decomposer_passes_phi() {
        let p = small(DecompositionKind::Identity);
        let phi = Embedding {
            phi: vec![0.3; 6],
        };
        let dec = attention_decompose(&phi, &p);
        assert_eq!(dec.x_id, phi.phi);
        assert!(dec.x_rate.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cosine_map_identity_and_zero() {
        let mut p = small(DecompositionKind::Attention);
        p.cos_id = Linear::identity(6);
        p.cos_rate = Linear::identity(6);
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = vec![-1.0, 0.0, 1.0, 0.5, 0.25, 2.0];
        let (u, v) = cosine_map(&a, &b, &p);
        assert_eq!((u, v), (a.clone(), b.clone()));
        p.cos_id = Linear::zeros(6, 6);
        p.cos_rate = Linear::zeros(6, 6);
        let (u, v) = cosine_map(&a, &b, &p);
        assert!(u.iter().chain(&v).all(|&x| x == 0.0));
    }

    #[test]
    fn id_head_cosines() {
        let mut p = small(DecompositionKind::Attention);
        p.id_head = vec![0.0; 18];
        p.id_head[0] = 1.0; // class 0 along e0
        p.id_head[6 + 1] = 1.0; // class 1 along e1
        p.id_head[12 + 2] = 1.0; // class 2 along e2
        let c = id_logits(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0], &p).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && c[1] == 0.0 && c[2] == 0.0);
        let c = id_logits(&[0.0, 0.0, 0.0, 1.0, -2.0, 0.0], &p).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
        let c = id_logits(&[0.4, -1.0, 2.0, 0.1, 0.0, 9.0], &p).unwrap();
        assert!(c.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(id_logits(&[1.0, 2.0], &p).is_err());
        assert!(rate_logits(&[1.0, 2.0], &p).is_err());
    }
}
