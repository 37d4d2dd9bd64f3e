//! Identity, rate and cosine-adversarial losses with their gradients.
//!
//! Every loss returns its value together with the gradient with respect to
//! its inputs so the trainer can chain them into the model's backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, log_sum_exp, norm, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the rate cross-entropy.
    pub lambda1: f64,
    /// Weight of the cosine adversarial loss.
    pub lambda2: f64,
    pub am_scale: f64,
    pub am_margin: f64,
    /// Norm floor used when normalizing vectors.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 0.1,
            lambda2: 0.1,
            am_scale: 30.0,
            am_margin: 0.2,
            epsilon: 1e-8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Config("loss.lambda1 and loss.lambda2 must be >= 0".into()));
        }
        if !(self.am_scale > 0.0) {
            return Err(Error::Config("loss.am_scale must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.am_margin) {
            return Err(Error::Config("loss.am_margin must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("loss.epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Unit vector `x / max(|x|, eps)` with what its backward pass needs.
#[derive(Debug, Clone)]
pub struct Normalized<T> {
    pub unit: Vec<T>,
    /// The divisor, `max(|x|, eps)`.
    pub scale: T,
    /// True when the floor replaced the norm.
    pub floored: bool,
}

pub fn normalize<T: Scalar>(x: &[T], eps: T) -> Normalized<T> {
    let n = norm(x);
    let floored = n < eps;
    let scale = if floored { eps } else { n };
    Normalized {
        unit: x.iter().map(|&v| v / scale).collect(),
        scale,
        floored,
    }
}

impl<T: Scalar> Normalized<T> {
    /// Maps a gradient w.r.t. the unit vector back to the raw input.
    pub fn backward(&self, dy: &[T]) -> Vec<T> {
        if self.floored {
            return dy.iter().map(|&g| g / self.scale).collect();
        }
        let proj = dot(&self.unit, dy);
        self.unit
            .iter()
            .zip(dy)
            .map(|(&yi, &gi)| (gi - yi * proj) / self.scale)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CosineLoss<T> {
    pub value: T,
    pub grad_a: Vec<T>,
    pub grad_b: Vec<T>,
}

/// Squared cosine similarity of the two inputs, in [0, 1].
pub fn cosine_adversarial_loss<T: Scalar>(a: &[T], b: &[T], eps: T) -> Result<CosineLoss<T>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine loss on vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = normalize(a, eps);
    let nb = normalize(b, eps);
    let c = dot(&na.unit, &nb.unit);
    // Rounding can push |c| a hair above one.
    let value = (c * c).min(T::one());
    let two_c = c + c;
    let dua: Vec<T> = nb.unit.iter().map(|&v| two_c * v).collect();
    let dub: Vec<T> = na.unit.iter().map(|&v| two_c * v).collect();
    Ok(CosineLoss {
        value,
        grad_a: na.backward(&dua),
        grad_b: nb.backward(&dub),
    })
}

#[derive(Debug, Clone)]
pub struct ClassLoss<T> {
    pub value: T,
    /// Gradient w.r.t. the cosines (AM-Softmax) or logits (cross-entropy).
    pub grad: Vec<T>,
}

fn softmax_ce<T: Scalar>(logits: &[T], label: usize) -> ClassLoss<T> {
    let lse = log_sum_exp(logits);
    let grad = logits
        .iter()
        .enumerate()
        .map(|(j, &z)| (z - lse).exp() - if j == label { T::one() } else { T::zero() })
        .collect();
    let zy = logits[label];
    let others = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &z)| z - zy);
    // A confident correct class makes `lse - zy` cancel; ln_1p keeps the digits.
    let value = if others.clone().all(|d| d < T::zero()) {
        others.map(|d| d.exp()).sum::<T>().ln_1p()
    } else {
        lse - zy
    };
    ClassLoss { value, grad }
}

/// Additive-margin softmax over per-class cosines.
pub fn am_softmax_loss<T: Scalar>(
    cosines: &[T],
    label: usize,
    scale: T,
    margin: T,
) -> Result<ClassLoss<T>> {
    if label >= cosines.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            cosines.len()
        )));
    }
    let logits: Vec<T> = cosines
        .iter()
        .enumerate()
        .map(|(j, &c)| scale * if j == label { c - margin } else { c })
        .collect();
    let mut out = softmax_ce(&logits, label);
    for g in out.grad.iter_mut() {
        *g *= scale;
    }
    Ok(out)
}

/// Softmax cross-entropy over the rate logits.
pub fn rate_ce_loss<T: Scalar>(logits: &[T], label: usize) -> Result<ClassLoss<T>> {
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(softmax_ce(logits, label))
}

/// `l_id + lambda1 * l_rate + lambda2 * l_cos`
pub fn total_loss<T: Scalar>(l_id: T, l_rate: T, l_cos: T, cfg: &LossConfig) -> T {
    l_id + T::of(cfg.lambda1) * l_rate + T::of(cfg.lambda2) * l_cos
}
