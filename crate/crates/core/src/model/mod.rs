//! Speaker encoder, attention decomposition, classification heads and the
//! cosine mapping block.

mod checkpoint;
mod layers;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use layers::{stats_pool, stats_pool_backward, Linear, PooledStats, TdnnLayer};
pub use network::{
    attention_decompose, cosine_map, cosine_map_backward, decompose_backward, decompose_traced,
    encode, encode_traced, encoder_backward, features_to, id_head_backward, id_head_traced,
    id_logits, rate_logits, DecomposeTrace, Decomposition, Embedding, EncoderTrace, IdHeadTrace,
    HEAD_NORM_FLOOR,
};
pub use params::{
    Decomposer, DecompositionKind, GroupFlags, ModelConfig, ModelParams, ParamGroup, TensorMut,
    TensorRef, NUM_RATE_CLASSES,
};
