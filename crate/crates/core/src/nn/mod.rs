//! Transformer building blocks: projections, attention, masks, positional
//! vectors, and symbol banks.

pub mod attention;
pub mod dense;
pub mod symbols;

pub use attention::{
    causal_mask, multi_head_attention, no_diagonal_mask, scaled_dot_attention, score_weights,
    AttentionParams, BoolMat, ScoreActivation,
};
pub use dense::{DenseP, FeedForwardParams, LayerNormParams};
pub use symbols::{sinusoidal_bank, EmbeddingP, SymbolBank, SymbolMode};
