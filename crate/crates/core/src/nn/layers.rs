use candle_core::{Tensor, D};

use super::ops;
use super::params::{Init, Scope};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        s: &mut Scope,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let weight = s.param(
            "weight",
            &[out_channels, in_channels, kernel, kernel],
            Init::He(in_channels * kernel * kernel),
        )?;
        let bias = s.param("bias", &[out_channels], Init::Zeros)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// `kernel x kernel` conv that keeps spatial size (odd kernels, stride 1).
    pub fn same(s: &mut Scope, in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        Self::new(s, in_channels, out_channels, kernel, 1, kernel / 2)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let c = self.out_channels();
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(s: &mut Scope, in_features: usize, out_features: usize) -> Result<Self> {
        let weight = s.param(
            "weight",
            &[out_features, in_features],
            Init::Normal((1.0 / in_features as f64).sqrt()),
        )?;
        let bias = s.param("bias", &[out_features], Init::Zeros)?;
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(s: &mut Scope, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: s.param("gamma", &[dim], Init::Ones)?,
            beta: s.param("beta", &[dim], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(s: &mut Scope, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(
                "model.transformer_heads",
                format!("model dim {dim} is not divisible by {heads} heads"),
            ));
        }
        Ok(Self {
            qkv: Linear::new(&mut s.pp("qkv"), dim, 3 * dim)?,
            proj: Linear::new(&mut s.pp("proj"), dim, dim)?,
            heads,
        })
    }

    /// Self-attention over `[B, N, D]` tokens; also returns the `[B, heads, N, N]` weights.
    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, n, d) = x.dims3()?;
        let dh = d / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((b, n, 3, self.heads, dh))?
            .permute((2, 0, 3, 1, 4))?;
        let q = qkv.get(0)?.contiguous()?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (dh as f64).sqrt()))?;
        let attn = ops::softmax(&scores, 3)?;
        let out = attn
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, n, d))?;
        Ok((self.proj.forward(&out)?, attn))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_weights(x)?.0)
    }
}

/// Pre-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

impl TransformerLayer {
    pub fn new(s: &mut Scope, dim: usize, heads: usize, mlp_ratio: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(&mut s.pp("norm1"), dim)?,
            attn: MultiHeadAttention::new(&mut s.pp("attn"), dim, heads)?,
            norm2: LayerNorm::new(&mut s.pp("norm2"), dim)?,
            fc1: Linear::new(&mut s.pp("fc1"), dim, dim * mlp_ratio)?,
            fc2: Linear::new(&mut s.pp("fc2"), dim * mlp_ratio, dim)?,
        })
    }

    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (a, w) = self.attn.forward_with_weights(&self.norm1.forward(x)?)?;
        let x = (x + a)?;
        let h = self.fc1.forward(&self.norm2.forward(&x)?)?.gelu()?;
        Ok(((x + self.fc2.forward(&h)?)?, w))
    }
}

/// Stack of transformer layers over `[B, N, D]` tokens.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    layers: Vec<TransformerLayer>,
}

impl TransformerBlock {
    pub fn new(s: &mut Scope, dim: usize, depth: usize, heads: usize, mlp_ratio: usize) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| TransformerLayer::new(&mut s.pp(&format!("layer{i}")), dim, heads, mlp_ratio))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_weights(x)?.0)
    }

    /// Output tokens plus the attention weights of every layer.
    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut x = x.clone();
        let mut weights = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, w) = layer.forward_with_weights(&x)?;
            x = y;
            weights.push(w);
        }
        Ok((x, weights))
    }
}

/// Two 3x3 convs with SiLU; the first may downsample by `stride`.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ConvBlock {
    pub fn new(s: &mut Scope, in_channels: usize, out_channels: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::new(&mut s.pp("conv1"), in_channels, out_channels, 3, stride, 1)?,
            conv2: Conv2d::same(&mut s.pp("conv2"), out_channels, out_channels, 3)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(x)?.silu()?;
        Ok(self.conv2.forward(&h)?.silu()?)
    }
}
