//! Minimal layer library on top of candle tensors.

mod layers;
pub mod ops;
mod optim;
mod params;

pub use layers::{Conv2d, ConvBlock, LayerNorm, Linear, MultiHeadAttention, TransformerBlock, TransformerLayer};
pub use optim::{clip_grad_norm, Adam};
pub use params::{Init, ParamStore, Scope};
