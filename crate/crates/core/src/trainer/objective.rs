//! Per-example forward/backward through the whole network, and batch means.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::losses::{am_softmax_loss, cosine_adversarial_loss, rate_ce_loss, total_loss, LossConfig};
use crate::model::{
    cosine_map, cosine_map_backward, decompose_backward, decompose_traced, encode_traced,
    encoder_backward, features_to, id_head_backward, id_head_traced, ModelParams,
};
use crate::scalar::{axpy, Scalar};
use crate::trainer::Phase;

/// One labeled training chunk.
#[derive(Debug, Clone)]
pub struct Example<'a> {
    pub features: &'a FeatureMatrix,
    pub speaker: usize,
    pub rate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub l_id: f64,
    pub l_rate: f64,
    pub l_cos: f64,
    pub total: f64,
}

impl Metrics {
    fn add(&mut self, o: &Metrics) {
        self.l_id += o.l_id;
        self.l_rate += o.l_rate;
        self.l_cos += o.l_cos;
        self.total += o.total;
    }

    fn scale(&mut self, k: f64) {
        self.l_id *= k;
        self.l_rate *= k;
        self.l_cos *= k;
        self.total *= k;
    }

    pub fn is_finite(&self) -> bool {
        [self.l_id, self.l_rate, self.l_cos, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Losses of one example and, unless `grads` is `None`, the gradient of the
/// phase objective accumulated into `grads`.
///
/// Minimize: `L_id + lambda1 L_rate + lambda2 L_cos`, gradient reaching every
/// group (the cosine map's entries are computed but the optimizer skips them).
/// Maximize: `-L_cos`, gradient only for the cosine map.
pub fn example_objective<T: Scalar>(
    params: &ModelParams<T>,
    ex: &Example<'_>,
    loss: &LossConfig,
    phase: Phase,
    grads: Option<&mut ModelParams<T>>,
) -> Result<Metrics> {
    let frames = ex.features.rows();
    let (phi, enc_trace) = encode_traced(features_to::<T>(ex.features), frames, params)?;
    let (dec, dec_trace) = decompose_traced(&phi, params);
    let head = id_head_traced(&dec.x_id, params)?;
    let id = am_softmax_loss(&head.cosines, ex.speaker, T::of(loss.am_scale), T::of(loss.am_margin))?;
    let rate_logits = params.rate_head.forward(&dec.x_rate);
    let rate = rate_ce_loss(&rate_logits, ex.rate)?;
    let (u, v) = cosine_map(&dec.x_id, &dec.x_rate, params);
    let cos = cosine_adversarial_loss(&u, &v, T::of(loss.epsilon))?;

    let l_id = id.value.as_f64();
    let l_rate = rate.value.as_f64();
    let l_cos = cos.value.as_f64();
    let metrics = Metrics {
        l_id,
        l_rate,
        l_cos,
        total: total_loss(l_id, l_rate, l_cos, loss),
    };
    let Some(grads) = grads else {
        return Ok(metrics);
    };

    match phase {
        Phase::Maximize => {
            let ga: Vec<T> = cos.grad_a.iter().map(|&g| -g).collect();
            let gb: Vec<T> = cos.grad_b.iter().map(|&g| -g).collect();
            cosine_map_backward(params, &dec.x_id, &dec.x_rate, &ga, &gb, grads);
        }
        Phase::Minimize => {
            let mut d_id = id_head_backward(&head, &id.grad, grads);
            let lambda1 = T::of(loss.lambda1);
            let d_logits: Vec<T> = rate.grad.iter().map(|&g| lambda1 * g).collect();
            let mut d_rate = params
                .rate_head
                .backward(&dec.x_rate, &d_logits, &mut grads.rate_head);
            if loss.lambda2 != 0.0 {
                let lambda2 = T::of(loss.lambda2);
                let ga: Vec<T> = cos.grad_a.iter().map(|&g| lambda2 * g).collect();
                let gb: Vec<T> = cos.grad_b.iter().map(|&g| lambda2 * g).collect();
                let (dx_id, dx_rate) =
                    cosine_map_backward(params, &dec.x_id, &dec.x_rate, &ga, &gb, grads);
                axpy(T::one(), &dx_id, &mut d_id);
                axpy(T::one(), &dx_rate, &mut d_rate);
            }
            let d_phi = decompose_backward(params, &phi, &dec, &dec_trace, &d_id, &d_rate, grads);
            encoder_backward(params, &enc_trace, &d_phi, grads);
        }
    }
    Ok(metrics)
}

/// Mean metrics over a batch and the mean gradient (in a fresh container).
/// Examples are reduced in order, so the result does not depend on scheduling.
pub fn batch_objective<T: Scalar>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
    loss: &LossConfig,
    phase: Phase,
    want_grads: bool,
) -> Result<(Metrics, Option<ModelParams<T>>)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut grads = want_grads.then(|| params.zeros_like());
    let mut sum = Metrics::default();
    for ex in batch {
        let m = example_objective(params, ex, loss, phase, grads.as_mut())?;
        sum.add(&m);
    }
    let k = 1.0 / batch.len() as f64;
    sum.scale(k);
    if let Some(g) = grads.as_mut() {
        let kt = T::of(k);
        for t in g.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= kt);
        }
    }
    Ok((sum, grads))
}

/// The scalar each phase descends: `total` or `-L_cos`.
pub fn phase_value(m: &Metrics, phase: Phase) -> f64 {
    match phase {
        Phase::Minimize => m.total,
        Phase::Maximize => -m.l_cos,
    }
}
