//! Multiscale fusion of the two modality pyramids and decoding to class logits.
//!
//! Levels 1-4 are fused by convolution over the channel-concatenated pair.
//! Level 5 is fused by attention: both modalities' tokens are concatenated
//! along the token axis (with a learned modality embedding), attended jointly,
//! and the two streams are averaged position-wise back into one map.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::hyfex::{PyramidFeatures, TransformerSpec, LEVELS};
use crate::nn::{ops, Conv2d, ConvBlock, Init, Scope, TransformerBlock};

/// Unified multiscale representation `u_1..u_5`, same shapes as the per-modality levels.
#[derive(Debug, Clone)]
pub struct FusedPyramid {
    pub levels: Vec<Tensor>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "{what}: feature shapes differ ({:?} vs {:?})",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Channel concatenation followed by `depth` 3x3 conv + SiLU layers, `2C -> C`.
#[derive(Debug, Clone)]
pub struct FusionConv {
    layers: Vec<Conv2d>,
}

impl FusionConv {
    pub fn new(s: &mut Scope, channels: usize, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::config("model.fusion_depth", "must be >= 1"));
        }
        let layers = (0..depth)
            .map(|i| {
                let cin = if i == 0 { 2 * channels } else { channels };
                Conv2d::same(&mut s.pp(&format!("conv{i}")), cin, channels, 3)
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// Order matters: `x_a` occupies the first `C` input channels.
    pub fn forward(&self, x_a: &Tensor, x_b: &Tensor) -> Result<Tensor> {
        same_shape(x_a, x_b, "conv fusion")?;
        let mut x = Tensor::cat(&[x_a, x_b], 1)?;
        for layer in &self.layers {
            x = layer.forward(&x)?.silu()?;
        }
        Ok(x)
    }
}

/// Joint attention over both modalities' bottleneck tokens.
#[derive(Debug, Clone)]
pub struct AttentionFusion {
    modality_embedding: Tensor,
    transformer: TransformerBlock,
}

impl AttentionFusion {
    pub fn new(s: &mut Scope, channels: usize, spec: &TransformerSpec) -> Result<Self> {
        Ok(Self {
            modality_embedding: s.param("modality_embedding", &[2, channels], Init::Normal(0.02))?,
            transformer: TransformerBlock::new(
                &mut s.pp("transformer"),
                channels,
                spec.depth,
                spec.heads,
                spec.mlp_ratio,
            )?,
        })
    }

    pub fn forward(&self, x_a: &Tensor, x_b: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_weights(x_a, x_b)?.0)
    }

    /// Fused map plus per-layer attention weights `[B, heads, 2N, 2N]`.
    pub fn forward_with_weights(&self, x_a: &Tensor, x_b: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        same_shape(x_a, x_b, "attention fusion")?;
        let (_, c, h, w) = x_a.dims4()?;
        let n = h * w;
        let pos = ops::sinusoidal_positions(n, c, x_a.dtype(), x_a.device())?;
        let embed = |x: &Tensor, m: usize| -> Result<Tensor> {
            let e = self.modality_embedding.get(m)?;
            Ok(ops::to_tokens(x)?.broadcast_add(&pos)?.broadcast_add(&e)?)
        };
        let tokens = Tensor::cat(&[embed(x_a, 0)?, embed(x_b, 1)?], 1)?;
        let (out, weights) = self.transformer.forward_with_weights(&tokens)?;
        let a = out.narrow(1, 0, n)?;
        let b = out.narrow(1, n, n)?;
        let merged = ((a + b)? * 0.5)?;
        Ok((ops::from_tokens(&merged, h, w)?, weights))
    }
}

#[derive(Debug, Clone)]
pub enum BottleneckFusion {
    Attention(AttentionFusion),
    Conv(FusionConv),
}

/// Fusion across all five levels.
#[derive(Debug, Clone)]
pub struct Hyfma {
    conv: Vec<FusionConv>,
    bottleneck: BottleneckFusion,
}

impl Hyfma {
    /// `attention = None` replaces the level-5 attention fusion by conv fusion.
    pub fn new(
        s: &mut Scope,
        widths: &[usize; LEVELS],
        fusion_depth: usize,
        attention: Option<&TransformerSpec>,
    ) -> Result<Self> {
        let conv = (0..4)
            .map(|i| FusionConv::new(&mut s.pp(&format!("level{}", i + 1)), widths[i], fusion_depth))
            .collect::<Result<_>>()?;
        let mut s5 = s.pp("level5");
        let bottleneck = match attention {
            Some(spec) => BottleneckFusion::Attention(AttentionFusion::new(&mut s5, widths[4], spec)?),
            None => BottleneckFusion::Conv(FusionConv::new(&mut s5, widths[4], fusion_depth)?),
        };
        Ok(Self { conv, bottleneck })
    }

    pub fn fuse_scale_conv(&self, level: usize, x_a: &Tensor, x_b: &Tensor) -> Result<Tensor> {
        if !(1..=4).contains(&level) {
            return Err(Error::Shape(format!("conv fusion level must be 1..=4, got {level}")));
        }
        self.conv[level - 1].forward(x_a, x_b)
    }

    pub fn fuse_bottleneck(&self, x_a: &Tensor, x_b: &Tensor) -> Result<Tensor> {
        match &self.bottleneck {
            BottleneckFusion::Attention(a) => a.forward(x_a, x_b),
            BottleneckFusion::Conv(c) => c.forward(x_a, x_b),
        }
    }

    pub fn bottleneck(&self) -> &BottleneckFusion {
        &self.bottleneck
    }

    pub fn fuse(&self, a: &PyramidFeatures, b: &PyramidFeatures) -> Result<FusedPyramid> {
        let mut levels = Vec::with_capacity(LEVELS);
        for level in 1..=4 {
            levels.push(self.fuse_scale_conv(level, &a.levels[level - 1], &b.levels[level - 1])?);
        }
        levels.push(self.fuse_bottleneck(&a.levels[4], &b.levels[4])?);
        Ok(FusedPyramid { levels })
    }
}

/// UNet-style decoder from a 5-level pyramid to a full-resolution map.
///
/// Used as the segmentation decoder, as the unimodal heads and as the
/// generator's upsampling path (with the generator input as an extra
/// full-resolution skip).
#[derive(Debug, Clone)]
pub struct UnetDecoder {
    stages: Vec<ConvBlock>,
    full_res: ConvBlock,
    head: Conv2d,
}

impl UnetDecoder {
    pub fn new(s: &mut Scope, widths: &[usize; LEVELS], out_channels: usize, full_res_skip: usize) -> Result<Self> {
        // stages[i] merges level i+2 (upsampled) with level i+1
        let stages = (0..4)
            .map(|i| ConvBlock::new(&mut s.pp(&format!("up{}", i + 1)), widths[i + 1] + widths[i], widths[i], 1))
            .collect::<Result<_>>()?;
        Ok(Self {
            stages,
            full_res: ConvBlock::new(&mut s.pp("full_res"), widths[0] + full_res_skip, widths[0], 1)?,
            head: Conv2d::new(&mut s.pp("head"), widths[0], out_channels, 1, 1, 0)?,
        })
    }

    pub fn forward(&self, levels: &[Tensor], skip: Option<&Tensor>) -> Result<Tensor> {
        if levels.len() != LEVELS {
            return Err(Error::Shape(format!("decoder expects {LEVELS} levels, got {}", levels.len())));
        }
        let mut x = levels[4].clone();
        for i in (0..4).rev() {
            let up = ops::upsample2x(&x)?;
            x = self.stages[i].forward(&Tensor::cat(&[&up, &levels[i]], 1)?)?;
        }
        let mut x = ops::upsample2x(&x)?;
        if let Some(skip) = skip {
            x = Tensor::cat(&[&x, skip], 1)?;
        }
        self.head.forward(&self.full_res.forward(&x)?)
    }
}

/// Segmentation decoder producing raw logits `[B, C, H, W]`.
#[derive(Debug, Clone)]
pub struct SegDecoder(UnetDecoder);

impl SegDecoder {
    pub fn new(s: &mut Scope, widths: &[usize; LEVELS], num_classes: usize) -> Result<Self> {
        Ok(Self(UnetDecoder::new(s, widths, num_classes, 0)?))
    }

    pub fn decode(&self, fused: &FusedPyramid) -> Result<Tensor> {
        self.0.forward(&fused.levels, None)
    }
}

/// Unimodal segmentation head over one modality's pyramid (training-time supervision).
#[derive(Debug, Clone)]
pub struct UnimodalHead(UnetDecoder);

impl UnimodalHead {
    pub fn new(s: &mut Scope, widths: &[usize; LEVELS], num_classes: usize) -> Result<Self> {
        Ok(Self(UnetDecoder::new(s, widths, num_classes, 0)?))
    }

    pub fn forward(&self, pyramid: &PyramidFeatures) -> Result<Tensor> {
        self.0.forward(&pyramid.levels, None)
    }
}

/// 1x1 projection of a fused level to class logits, bilinearly upsampled to full resolution.
#[derive(Debug, Clone)]
pub struct AuxHead {
    proj: Conv2d,
}

impl AuxHead {
    pub fn new(s: &mut Scope, channels: usize, num_classes: usize) -> Result<Self> {
        Ok(Self {
            proj: Conv2d::new(&mut s.pp("proj"), channels, num_classes, 1, 1, 0)?,
        })
    }

    pub fn forward(&self, u: &Tensor, height: usize, width: usize) -> Result<Tensor> {
        ops::upsample_bilinear(&self.proj.forward(u)?, height, width)
    }
}
