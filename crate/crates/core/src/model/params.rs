use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Linear, TdnnLayer};
use crate::scalar::{norm, Scalar};

pub const NUM_RATE_CLASSES: usize = 3;

/// How the embedding is split into identity and rate branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionKind {
    /// Channel gate: `x_rate = sigma * phi`, `x_id = (1 - sigma) * phi`.
    Attention,
    /// Two independent affine projections of the embedding.
    Parallel,
    /// No split: `x_id = phi`, `x_rate = 0`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub channels: usize,
    pub kernels: Vec<usize>,
    pub dilations: Vec<usize>,
    pub embed_dim: usize,
    pub bottleneck_ratio: usize,
    pub cos_dim: usize,
    pub decomposition: DecompositionKind,
    /// Variance floor inside statistics pooling.
    pub pool_var_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feat_dim: 40,
            channels: 64,
            kernels: vec![5, 3, 3],
            dilations: vec![1, 2, 3],
            embed_dim: 128,
            bottleneck_ratio: 4,
            cos_dim: 64,
            decomposition: DecompositionKind::Attention,
            pool_var_floor: 1e-8,
        }
    }
}

impl ModelConfig {
    /// Frames consumed by the convolution stack for one output frame.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .kernels
            .iter()
            .zip(&self.dilations)
            .map(|(k, d)| (k - 1) * d)
            .sum::<usize>()
    }

    pub fn bottleneck_dim(&self) -> usize {
        (self.embed_dim / self.bottleneck_ratio).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("model: {m}")));
        if self.feat_dim == 0 || self.channels == 0 || self.embed_dim == 0 || self.cos_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.kernels.is_empty() || self.kernels.len() != self.dilations.len() {
            return bad("kernels and dilations must be non-empty and equally long");
        }
        if self.kernels.iter().chain(&self.dilations).any(|&v| v == 0) {
            return bad("kernel sizes and dilations must be positive");
        }
        if self.bottleneck_ratio == 0 {
            return bad("bottleneck_ratio must be positive");
        }
        if !(self.pool_var_floor > 0.0) {
            return bad("pool_var_floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Attention,
    IdHead,
    RateHead,
    CosineMap,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::Encoder,
        ParamGroup::Attention,
        ParamGroup::IdHead,
        ParamGroup::RateHead,
        ParamGroup::CosineMap,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Attention => "attention",
            ParamGroup::IdHead => "id_head",
            ParamGroup::RateHead => "rate_head",
            ParamGroup::CosineMap => "cosine_map",
        };
        f.write_str(s)
    }
}

/// Which groups an optimizer step may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupFlags([bool; 5]);

impl GroupFlags {
    pub fn all() -> Self {
        GroupFlags([true; 5])
    }

    pub fn only(groups: &[ParamGroup]) -> Self {
        let mut f = [false; 5];
        for g in groups {
            f[g.index()] = true;
        }
        GroupFlags(f)
    }

    pub fn all_except(groups: &[ParamGroup]) -> Self {
        let mut f = [true; 5];
        for g in groups {
            f[g.index()] = false;
        }
        GroupFlags(f)
    }

    pub fn is_trainable(&self, g: ParamGroup) -> bool {
        self.0[g.index()]
    }
}

impl Default for GroupFlags {
    fn default() -> Self {
        Self::all()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decomposer<T> {
    Attention { squeeze: Linear<T>, excite: Linear<T> },
    Parallel { id: Linear<T>, rate: Linear<T> },
    Identity,
}

/// All trainable arrays of the network, also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub num_speakers: usize,
    pub tdnn: Vec<TdnnLayer<T>>,
    /// Statistics (2 x channels) to embedding.
    pub projection: Linear<T>,
    pub decomposer: Decomposer<T>,
    /// `num_speakers x embed_dim`, each row a unit-norm class direction.
    pub id_head: Vec<T>,
    pub rate_head: Linear<T>,
    pub cos_id: Linear<T>,
    pub cos_rate: Linear<T>,
    pub trainable: GroupFlags,
}

pub struct TensorRef<'a, T> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a mut Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Random initialization: zero-mean uniform weights scaled by fan-in,
    /// zero biases, unit-norm identity-head rows.
    pub fn new(config: ModelConfig, num_speakers: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_speakers < 2 {
            return Err(Error::Config("need at least two speaker classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tdnn = Vec::new();
        let mut in_ch = config.feat_dim;
        for (&k, &d) in config.kernels.iter().zip(&config.dilations) {
            tdnn.push(TdnnLayer::uniform(in_ch, config.channels, k, d, &mut rng));
            in_ch = config.channels;
        }
        let d = config.embed_dim;
        let linear = |i: usize, o: usize, rng: &mut ChaCha8Rng| {
            Linear::uniform(i, o, (3.0 / i as f64).sqrt(), rng)
        };
        let projection = linear(2 * config.channels, d, &mut rng);
        let decomposer = match config.decomposition {
            DecompositionKind::Attention => {
                let b = config.bottleneck_dim();
                Decomposer::Attention {
                    squeeze: Linear::uniform(d, b, (6.0 / d as f64).sqrt(), &mut rng),
                    excite: linear(b, d, &mut rng),
                }
            }
            DecompositionKind::Parallel => Decomposer::Parallel {
                id: linear(d, d, &mut rng),
                rate: linear(d, d, &mut rng),
            },
            DecompositionKind::Identity => Decomposer::Identity,
        };
        let id_head = (0..num_speakers * d)
            .map(|_| T::of(StandardNormal.sample(&mut rng)))
            .collect();
        let rate_head = linear(d, NUM_RATE_CLASSES, &mut rng);
        let cos_id = linear(d, config.cos_dim, &mut rng);
        let cos_rate = linear(d, config.cos_dim, &mut rng);
        let mut params = ModelParams {
            config,
            num_speakers,
            tdnn,
            projection,
            decomposer,
            id_head,
            rate_head,
            cos_id,
            cos_rate,
            trainable: GroupFlags::all(),
        };
        params.renormalize_id_head();
        Ok(params)
    }

    /// Same shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    /// Every array with its name, group and shape, in a fixed order.
    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        fn t<'a, T>(name: String, group: ParamGroup, shape: Vec<usize>, data: &'a [T]) -> TensorRef<'a, T> {
            TensorRef { name, group, shape, data }
        }
        fn lin<'a, T>(out: &mut Vec<TensorRef<'a, T>>, name: &str, group: ParamGroup, l: &'a Linear<T>) {
            out.push(t(format!("{name}.weight"), group, vec![l.out_dim, l.in_dim], &l.weight));
            out.push(t(format!("{name}.bias"), group, vec![l.out_dim], &l.bias));
        }
        let mut out = Vec::new();
        for (i, l) in self.tdnn.iter().enumerate() {
            let shape = vec![l.out_ch, l.kernel * l.in_ch];
            out.push(t(format!("encoder.tdnn{i}.weight"), ParamGroup::Encoder, shape, &l.weight));
            out.push(t(format!("encoder.tdnn{i}.bias"), ParamGroup::Encoder, vec![l.out_ch], &l.bias));
        }
        lin(&mut out, "encoder.projection", ParamGroup::Encoder, &self.projection);
        match &self.decomposer {
            Decomposer::Attention { squeeze, excite } => {
                lin(&mut out, "attention.squeeze", ParamGroup::Attention, squeeze);
                lin(&mut out, "attention.excite", ParamGroup::Attention, excite);
            }
            Decomposer::Parallel { id, rate } => {
                lin(&mut out, "attention.id_proj", ParamGroup::Attention, id);
                lin(&mut out, "attention.rate_proj", ParamGroup::Attention, rate);
            }
            Decomposer::Identity => {}
        }
        let shape = vec![self.num_speakers, self.config.embed_dim];
        out.push(t("id_head.weight".into(), ParamGroup::IdHead, shape, &self.id_head));
        lin(&mut out, "rate_head", ParamGroup::RateHead, &self.rate_head);
        lin(&mut out, "cosine_map.id", ParamGroup::CosineMap, &self.cos_id);
        lin(&mut out, "cosine_map.rate", ParamGroup::CosineMap, &self.cos_rate);
        out
    }

    /// Mutable counterpart of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        fn t<'a, T>(name: String, group: ParamGroup, shape: Vec<usize>, data: &'a mut Vec<T>) -> TensorMut<'a, T> {
            TensorMut { name, group, shape, data }
        }
        fn lin<'a, T>(out: &mut Vec<TensorMut<'a, T>>, name: &str, group: ParamGroup, l: &'a mut Linear<T>) {
            let (o, i) = (l.out_dim, l.in_dim);
            out.push(t(format!("{name}.weight"), group, vec![o, i], &mut l.weight));
            out.push(t(format!("{name}.bias"), group, vec![o], &mut l.bias));
        }
        let mut out = Vec::new();
        for (i, l) in self.tdnn.iter_mut().enumerate() {
            let (o, w) = (l.out_ch, l.kernel * l.in_ch);
            out.push(t(format!("encoder.tdnn{i}.weight"), ParamGroup::Encoder, vec![o, w], &mut l.weight));
            out.push(t(format!("encoder.tdnn{i}.bias"), ParamGroup::Encoder, vec![o], &mut l.bias));
        }
        lin(&mut out, "encoder.projection", ParamGroup::Encoder, &mut self.projection);
        match &mut self.decomposer {
            Decomposer::Attention { squeeze, excite } => {
                lin(&mut out, "attention.squeeze", ParamGroup::Attention, squeeze);
                lin(&mut out, "attention.excite", ParamGroup::Attention, excite);
            }
            Decomposer::Parallel { id, rate } => {
                lin(&mut out, "attention.id_proj", ParamGroup::Attention, id);
                lin(&mut out, "attention.rate_proj", ParamGroup::Attention, rate);
            }
            Decomposer::Identity => {}
        }
        let shape = vec![self.num_speakers, self.config.embed_dim];
        out.push(t("id_head.weight".into(), ParamGroup::IdHead, shape, &mut self.id_head));
        lin(&mut out, "rate_head", ParamGroup::RateHead, &mut self.rate_head);
        lin(&mut out, "cosine_map.id", ParamGroup::CosineMap, &mut self.cos_id);
        lin(&mut out, "cosine_map.rate", ParamGroup::CosineMap, &mut self.cos_rate);
        out
    }

    /// Snapshot of one group's arrays, for bitwise comparisons.
    pub fn group_snapshot(&self, group: ParamGroup) -> Vec<(String, Vec<T>)> {
        self.tensors()
            .into_iter()
            .filter(|t| t.group == group)
            .map(|t| (t.name, t.data.to_vec()))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn renormalize_id_head(&mut self) {
        let d = self.config.embed_dim;
        for row in self.id_head.chunks_mut(d) {
            let n = norm(row);
            if n > T::zero() {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Converts every array to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |v: &Vec<T>| v.iter().map(|&x| U::of(x.as_f64())).collect::<Vec<U>>();
        let lin = |l: &Linear<T>| Linear {
            in_dim: l.in_dim,
            out_dim: l.out_dim,
            weight: conv(&l.weight),
            bias: conv(&l.bias),
        };
        ModelParams {
            config: self.config.clone(),
            num_speakers: self.num_speakers,
            tdnn: self
                .tdnn
                .iter()
                .map(|l| TdnnLayer {
                    in_ch: l.in_ch,
                    out_ch: l.out_ch,
                    kernel: l.kernel,
                    dilation: l.dilation,
                    weight: conv(&l.weight),
                    bias: conv(&l.bias),
                })
                .collect(),
            projection: lin(&self.projection),
            decomposer: match &self.decomposer {
                Decomposer::Attention { squeeze, excite } => Decomposer::Attention {
                    squeeze: lin(squeeze),
                    excite: lin(excite),
                },
                Decomposer::Parallel { id, rate } => Decomposer::Parallel {
                    id: lin(id),
                    rate: lin(rate),
                },
                Decomposer::Identity => Decomposer::Identity,
            },
            id_head: conv(&self.id_head),
            rate_head: lin(&self.rate_head),
            cos_id: lin(&self.cos_id),
            cos_rate: lin(&self.cos_rate),
            trainable: self.trainable,
        }
    }
}
