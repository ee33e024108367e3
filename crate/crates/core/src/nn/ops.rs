//! Differentiable tensor helpers built from primitive candle ops.

use candle_core::{DType, Device, Tensor, D};

use crate::error::Result;

/// Numerically stable softmax along `dim`.
pub fn softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    let max = x.max_keepdim(dim)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(dim)?)?)
}

pub fn log_softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    let max = x.max_keepdim(dim)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(dim)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Logistic function written through `tanh`, which stays finite for any input.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? * 0.5)? + 0.5)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok((x.relu()? - (x.neg()?.relu()? * slope)?)?)
}

/// Elementwise binary cross entropy against a constant target, from logits.
pub fn bce_with_logits(logits: &Tensor, target: f64) -> Result<Tensor> {
    // max(x, 0) - x*z + log(1 + exp(-|x|))
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok(((logits.relu()? - (logits * target)?)? + softplus)?)
}

/// Nearest-neighbour 2x upsampling of `[B, C, H, W]`.
pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    Ok(x.reshape((b, c, h, 1, w, 1))?
        .broadcast_as((b, c, h, 2, w, 2))?
        .reshape((b, c, 2 * h, 2 * w))?)
}

/// Row-stochastic `[output, input]` matrix of 1-D linear interpolation with
/// half-pixel centres (the `align_corners = false` convention).
pub fn bilinear_matrix(input: usize, output: usize) -> Vec<f64> {
    let mut m = vec![0.0; output * input];
    let scale = input as f64 / output as f64;
    for o in 0..output {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(input - 1);
        let i1 = (i0 + 1).min(input - 1);
        let frac = src - i0 as f64;
        m[o * input + i0] += 1.0 - frac;
        m[o * input + i1] += frac;
    }
    m
}

/// Bilinear resize of `[B, C, h, w]` to `[B, C, height, width]` as two matrix products.
pub fn upsample_bilinear(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (height, width) {
        return Ok(x.clone());
    }
    let dev = x.device();
    let rows = Tensor::from_vec(bilinear_matrix(h, height), (height, h), dev)?.to_dtype(x.dtype())?;
    let cols = Tensor::from_vec(bilinear_matrix(w, width), (width, w), dev)?
        .to_dtype(x.dtype())?
        .t()?
        .contiguous()?;
    Ok(rows.broadcast_matmul(&x.contiguous()?)?.broadcast_matmul(&cols)?)
}

/// Fixed sinusoidal position table `[n, dim]`.
pub fn sinusoidal_positions(n: usize, dim: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut data = vec![0.0f64; n * dim];
    for pos in 0..n {
        for i in 0..dim {
            let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 * rate;
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Ok(Tensor::from_vec(data, (n, dim), device)?.to_dtype(dtype)?)
}

/// `[B, C, H, W]` feature map to `[B, H*W, C]` tokens.
pub fn to_tokens(x: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    Ok(x.reshape((b, c, h * w))?.transpose(1, 2)?.contiguous()?)
}

/// `[B, H*W, C]` tokens back to `[B, C, H, W]`.
pub fn from_tokens(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (b, n, c) = x.dims3()?;
    debug_assert_eq!(n, h * w);
    Ok(x.transpose(1, 2)?.contiguous()?.reshape((b, c, h, w))?)
}

/// Argmax over the class axis of `[B, C, H, W]` logits.
pub fn argmax_classes(logits: &Tensor) -> Result<Tensor> {
    Ok(logits.argmax(1)?)
}

pub fn mean_all_f64(x: &Tensor) -> Result<f64> {
    Ok(x.to_dtype(DType::F64)?.mean_all()?.to_scalar::<f64>()?)
}

pub fn scalar_f64(x: &Tensor) -> Result<f64> {
    Ok(x.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Sums the last dimension keeping rank.
pub fn sum_last(x: &Tensor) -> Result<Tensor> {
    Ok(x.sum_keepdim(D::Minus1)?)
}
