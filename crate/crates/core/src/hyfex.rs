//! Hybrid conv + transformer feature extraction.
//!
//! The same template serves two roles: a per-modality encoder producing a
//! five-level pyramid, and (with a UNet decoder on top) the generator that
//! synthesizes one modality from the other.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::Modality;
use crate::error::{Error, Result};
use crate::hyfma::UnetDecoder;
use crate::nn::{ops, ConvBlock, Scope, TransformerBlock};

/// Number of pyramid levels.
pub const LEVELS: usize = 5;
/// Total downsampling factor at the bottleneck.
pub const BOTTLENECK_STRIDE: usize = 1 << LEVELS;

/// Transformer hyper-parameters shared by the encoder bottleneck and attention fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub base_widths: [usize; LEVELS],
    pub width_multiplier: f64,
    pub transformer_depth: usize,
    pub transformer_heads: usize,
    pub mlp_ratio: usize,
    /// Conv layers per fusion block at levels 1-4.
    pub fusion_depth: usize,
    /// Channels of the first discriminator layer (cGAN mode).
    pub discriminator_width: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            base_widths: [32, 64, 128, 256, 512],
            width_multiplier: 1.0,
            transformer_depth: 2,
            transformer_heads: 4,
            mlp_ratio: 2,
            fusion_depth: 2,
            discriminator_width: 64,
        }
    }
}

impl ArchConfig {
    /// Smallest configuration used in tests: widths {4, 8, 16, 32, 64}.
    pub fn tiny() -> Self {
        Self {
            width_multiplier: 0.125,
            discriminator_width: 8,
            ..Self::default()
        }
    }

    /// Scaled channel schedule `C_1..C_5`. `C_5` is rounded up to a multiple
    /// of the head count so attention can split it.
    pub fn widths(&self) -> [usize; LEVELS] {
        let mut w = self
            .base_widths
            .map(|c| ((c as f64 * self.width_multiplier).round() as usize).max(1));
        let h = self.transformer_heads.max(1);
        w[LEVELS - 1] = w[LEVELS - 1].div_ceil(h) * h;
        w
    }

    pub fn transformer(&self) -> TransformerSpec {
        TransformerSpec {
            depth: self.transformer_depth,
            heads: self.transformer_heads,
            mlp_ratio: self.mlp_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_multiplier.is_finite() && self.width_multiplier > 0.0) {
            return Err(Error::config("model.arch.width_multiplier", "must be positive"));
        }
        if self.base_widths.contains(&0) {
            return Err(Error::config("model.arch.base_widths", "widths must be positive"));
        }
        if self.transformer_depth == 0 || self.transformer_heads == 0 || self.mlp_ratio == 0 {
            return Err(Error::config(
                "model.arch.transformer_depth",
                "transformer depth, heads and mlp_ratio must be >= 1",
            ));
        }
        if self.fusion_depth == 0 {
            return Err(Error::config("model.arch.fusion_depth", "must be >= 1"));
        }
        if self.discriminator_width == 0 {
            return Err(Error::config("model.arch.discriminator_width", "must be >= 1"));
        }
        Ok(())
    }
}

/// Five feature maps, level `i` shaped `[B, C_i, H / 2^i, W / 2^i]`.
#[derive(Debug, Clone)]
pub struct PyramidFeatures {
    pub levels: Vec<Tensor>,
    pub modality: Modality,
}

/// Rejects spatial sizes the pyramid cannot halve five times.
pub fn check_divisible(x: &Tensor, channels: usize) -> Result<(usize, usize)> {
    let (_, c, h, w) = x
        .dims4()
        .map_err(|_| Error::Shape(format!("expected a [B, C, H, W] image, got {:?}", x.dims())))?;
    if c != channels {
        return Err(Error::Shape(format!("expected {channels} channels, got {c}")));
    }
    if h == 0 || w == 0 || h % BOTTLENECK_STRIDE != 0 || w % BOTTLENECK_STRIDE != 0 {
        return Err(Error::Shape(format!(
            "spatial size {h}x{w} is not divisible by {BOTTLENECK_STRIDE}"
        )));
    }
    Ok((h, w))
}

/// Strided conv stages for levels 1-5 and a transformer over level-5 tokens.
#[derive(Debug, Clone)]
pub struct HyfexEncoder {
    in_channels: usize,
    stages: Vec<ConvBlock>,
    transformer: Option<TransformerBlock>,
}

impl HyfexEncoder {
    /// `transformer = None` keeps the bottleneck purely convolutional.
    pub fn new(
        s: &mut Scope,
        in_channels: usize,
        widths: &[usize; LEVELS],
        transformer: Option<&TransformerSpec>,
    ) -> Result<Self> {
        let mut stages = Vec::with_capacity(LEVELS);
        let mut cin = in_channels;
        for (i, &c) in widths.iter().enumerate() {
            stages.push(ConvBlock::new(&mut s.pp(&format!("stage{}", i + 1)), cin, c, 2)?);
            cin = c;
        }
        let transformer = transformer
            .map(|t| {
                TransformerBlock::new(&mut s.pp("bottleneck"), widths[LEVELS - 1], t.depth, t.heads, t.mlp_ratio)
            })
            .transpose()?;
        Ok(Self {
            in_channels,
            stages,
            transformer,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        check_divisible(x, self.in_channels)?;
        let mut levels = Vec::with_capacity(LEVELS);
        let mut h = x.clone();
        for stage in &self.stages {
            h = stage.forward(&h)?;
            levels.push(h.clone());
        }
        if let Some(t) = &self.transformer {
            let (_, c, hh, ww) = h.dims4()?;
            let pos = ops::sinusoidal_positions(hh * ww, c, h.dtype(), h.device())?;
            let tokens = ops::to_tokens(&h)?.broadcast_add(&pos)?;
            levels[LEVELS - 1] = ops::from_tokens(&t.forward(&tokens)?, hh, ww)?;
        }
        Ok(levels)
    }

    pub fn encode(&self, image: &Tensor, modality: Modality) -> Result<PyramidFeatures> {
        if modality.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "encoder expects {} channels but {} has {}",
                self.in_channels,
                modality.name(),
                modality.channels()
            )));
        }
        Ok(PyramidFeatures {
            levels: self.forward(image)?,
            modality,
        })
    }
}

/// Translation direction of a generator, named by its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction {
    pub source: Modality,
    pub target: Modality,
}

impl Direction {
    /// The generator that produces `target` from the other modality.
    pub fn producing(target: Modality) -> Self {
        Self {
            source: target.other(),
            target,
        }
    }

    pub fn name(&self) -> String {
        format!("{}_to_{}", self.source.name(), self.target.name())
    }
}

/// Encoder-bottleneck-decoder generator with mirrored skips and a sigmoid output.
#[derive(Debug, Clone)]
pub struct Generator {
    direction: Direction,
    encoder: HyfexEncoder,
    decoder: UnetDecoder,
}

impl Generator {
    pub fn new(
        s: &mut Scope,
        direction: Direction,
        widths: &[usize; LEVELS],
        transformer: Option<&TransformerSpec>,
    ) -> Result<Self> {
        let cin = direction.source.channels();
        Ok(Self {
            direction,
            encoder: HyfexEncoder::new(&mut s.pp("encoder"), cin, widths, transformer)?,
            decoder: UnetDecoder::new(&mut s.pp("decoder"), widths, direction.target.channels(), cin)?,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Synthesizes the target modality, values in `[0, 1]`.
    pub fn generate(&self, available: &Tensor) -> Result<Tensor> {
        let levels = self.encoder.forward(available)?;
        ops::sigmoid(&self.decoder.forward(&levels, Some(available))?)
    }
}
