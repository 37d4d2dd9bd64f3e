use rand::Rng;

use crate::scalar::{axpy, dot, Scalar};

/// Affine map `y = W x + b` with `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut l = Self::zeros(dim, dim);
        for i in 0..dim {
            l.weight[i * dim + i] = T::one();
        }
        l
    }

    /// Weights uniform in `[-bound, bound]`, zero bias.
    pub fn uniform<R: Rng>(in_dim: usize, out_dim: usize, bound: f64, rng: &mut R) -> Self {
        let mut l = Self::zeros(in_dim, out_dim);
        for w in l.weight.iter_mut() {
            *w = T::of(rng.gen_range(-bound..=bound));
        }
        l
    }

    fn row(&self, o: usize) -> &[T] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|o| self.bias[o] + dot(self.row(o), x))
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Linear<T>) -> Vec<T> {
        let mut dx = vec![T::zero(); self.in_dim];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            if g == T::zero() {
                continue;
            }
            axpy(g, x, &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim]);
            axpy(g, self.row(o), &mut dx);
        }
        dx
    }
}

/// Dilated temporal convolution over frames followed by ReLU ("valid"
/// padding: the output has `T - (kernel - 1) * dilation` frames).
#[derive(Debug, Clone, PartialEq)]
pub struct TdnnLayer<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    /// `out_ch x (kernel * in_ch)`; tap `k` of output `o` is
    /// `weight[o][k * in_ch .. (k + 1) * in_ch]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> TdnnLayer<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Self {
        TdnnLayer {
            in_ch,
            out_ch,
            kernel,
            dilation,
            weight: vec![T::zero(); out_ch * kernel * in_ch],
            bias: vec![T::zero(); out_ch],
        }
    }

    pub fn uniform<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Self {
        let mut l = Self::zeros(in_ch, out_ch, kernel, dilation);
        let bound = (6.0 / (kernel * in_ch) as f64).sqrt();
        for w in l.weight.iter_mut() {
            *w = T::of(rng.gen_range(-bound..=bound));
        }
        l
    }

    pub fn context(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }

    pub fn out_frames(&self, t_in: usize) -> Option<usize> {
        t_in.checked_sub(self.context()).filter(|&t| t > 0)
    }

    fn tap(&self, o: usize, k: usize) -> &[T] {
        let start = (o * self.kernel + k) * self.in_ch;
        &self.weight[start..start + self.in_ch]
    }

    /// `x` is `t_in x in_ch` row-major; returns the post-ReLU output.
    pub fn forward(&self, x: &[T], t_in: usize) -> Vec<T> {
        let t_out = self.out_frames(t_in).expect("caller checked frame count");
        let mut y = Vec::with_capacity(t_out * self.out_ch);
        for t in 0..t_out {
            for o in 0..self.out_ch {
                let mut acc = self.bias[o];
                for k in 0..self.kernel {
                    let src = (t + k * self.dilation) * self.in_ch;
                    acc += dot(self.tap(o, k), &x[src..src + self.in_ch]);
                }
                y.push(acc.max(T::zero()));
            }
        }
        y
    }

    /// Backward through ReLU and the convolution. `y` is the forward output.
    /// Returns `dL/dx` when `want_dx` is set.
    pub fn backward(
        &self,
        x: &[T],
        t_in: usize,
        y: &[T],
        dy: &[T],
        grad: &mut TdnnLayer<T>,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let t_out = self.out_frames(t_in).expect("caller checked frame count");
        let mut dx = if want_dx {
            vec![T::zero(); t_in * self.in_ch]
        } else {
            Vec::new()
        };
        for t in 0..t_out {
            for o in 0..self.out_ch {
                let idx = t * self.out_ch + o;
                if y[idx] <= T::zero() {
                    continue;
                }
                let g = dy[idx];
                if g == T::zero() {
                    continue;
                }
                grad.bias[o] += g;
                for k in 0..self.kernel {
                    let src = (t + k * self.dilation) * self.in_ch;
                    let wstart = (o * self.kernel + k) * self.in_ch;
                    axpy(
                        g,
                        &x[src..src + self.in_ch],
                        &mut grad.weight[wstart..wstart + self.in_ch],
                    );
                    if want_dx {
                        axpy(g, self.tap(o, k), &mut dx[src..src + self.in_ch]);
                    }
                }
            }
        }
        want_dx.then_some(dx)
    }
}

/// Mean and standard deviation over frames, concatenated as `[mean; std]`.
#[derive(Debug, Clone)]
pub struct PooledStats<T> {
    pub output: Vec<T>,
    /// Channels whose variance fell below the floor (std pinned to sqrt(floor)).
    pub floored: Vec<bool>,
}

pub fn stats_pool<T: Scalar>(h: &[T], frames: usize, channels: usize, var_floor: T) -> PooledStats<T> {
    let n = T::of_usize(frames);
    let mut mean = vec![T::zero(); channels];
    for t in 0..frames {
        axpy(T::one(), &h[t * channels..(t + 1) * channels], &mut mean);
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![T::zero(); channels];
    for t in 0..frames {
        for c in 0..channels {
            let d = h[t * channels + c] - mean[c];
            var[c] += d * d;
        }
    }
    let mut floored = vec![false; channels];
    let mut output = mean;
    for (c, v) in var.into_iter().enumerate() {
        let v = v / n;
        floored[c] = v < var_floor;
        output.push(v.max(var_floor).sqrt());
    }
    PooledStats { output, floored }
}

/// Gradient of the pooled statistics w.r.t. the frame-level input.
pub fn stats_pool_backward<T: Scalar>(
    h: &[T],
    frames: usize,
    channels: usize,
    pooled: &PooledStats<T>,
    d_out: &[T],
) -> Vec<T> {
    let n = T::of_usize(frames);
    let (mean, std) = pooled.output.split_at(channels);
    let (d_mean, d_std) = d_out.split_at(channels);
    let mut dh = vec![T::zero(); frames * channels];
    for t in 0..frames {
        for c in 0..channels {
            let mut g = d_mean[c] / n;
            if !pooled.floored[c] {
                g += d_std[c] * (h[t * channels + c] - mean[c]) / (n * std[c]);
            }
            dh[t * channels + c] = g;
        }
    }
    dh
}
