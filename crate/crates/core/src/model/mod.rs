//! End-to-end network: synthesize what is missing, encode both streams,
//! fuse, decode.

mod checkpoint;
mod train;

use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::coloss::{Discriminators, ReconMode};
use crate::data::{Modality, ModalityBundle, ModalityMask, Scenario};
use crate::error::{Error, Result};
use crate::hyfex::{ArchConfig, Direction, Generator, HyfexEncoder, PyramidFeatures};
use crate::hyfma::{AuxHead, FusedPyramid, Hyfma, SegDecoder, UnimodalHead};
use crate::nn::{ops, ParamStore};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
pub use train::{OptimConfig, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: ReconMode,
    /// Plain-conv ablation: no transformer bottleneck, conv fusion at level 5,
    /// no auxiliary scale or unimodal heads.
    pub baseline: bool,
    pub num_classes: usize,
    pub arch: ArchConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: ReconMode::Ae,
            baseline: false,
            num_classes: 6,
            arch: ArchConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("model.num_classes", "need at least 2 classes"));
        }
        self.arch.validate()
    }
}

/// A batch of co-registered samples with one availability mask per sample.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, 3, H, W]`
    pub rgir: Tensor,
    /// `[B, 1, H, W]`
    pub ndsm: Tensor,
    pub labels: Array3<u32>,
    pub masks: Vec<ModalityMask>,
}

impl Batch {
    pub fn from_bundles(bundles: &[ModalityBundle], masks: &[ModalityMask], dtype: DType, device: &Device) -> Result<Self> {
        if bundles.is_empty() || bundles.len() != masks.len() {
            return Err(Error::Validation(format!(
                "batch needs one mask per bundle ({} bundles, {} masks)",
                bundles.len(),
                masks.len()
            )));
        }
        let (h, w) = (bundles[0].height(), bundles[0].width());
        if bundles.iter().any(|b| (b.height(), b.width()) != (h, w)) {
            return Err(Error::Shape("all bundles in a batch must share one size".into()));
        }
        let stack = |m: Modality| -> Result<Tensor> {
            let mut data = Vec::with_capacity(bundles.len() * m.channels() * h * w);
            for b in bundles {
                data.extend(b.image(m).iter().copied());
            }
            Ok(Tensor::from_vec(data, (bundles.len(), m.channels(), h, w), device)?.to_dtype(dtype)?)
        };
        let views: Vec<_> = bundles.iter().map(|b| b.label.view()).collect();
        Ok(Self {
            rgir: stack(Modality::Rgir)?,
            ndsm: stack(Modality::Ndsm)?,
            labels: ndarray::stack(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?,
            masks: masks.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn image(&self, m: Modality) -> &Tensor {
        match m {
            Modality::Rgir => &self.rgir,
            Modality::Ndsm => &self.ndsm,
        }
    }
}

/// A synthesized modality for the listed batch samples, in that order.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub modality: Modality,
    pub samples: Vec<usize>,
    pub image: Tensor,
}

/// Unimodal logits for the samples where the modality was really present.
#[derive(Debug, Clone)]
pub struct UnimodalLogits {
    pub modality: Modality,
    pub samples: Vec<usize>,
    pub logits: Tensor,
}

#[derive(Debug, Clone)]
pub struct ModelOutputs {
    /// `[B, C, H, W]` raw logits.
    pub fused_logits: Tensor,
    /// Upsampled auxiliary logits from fused levels 1-4 (training only, empty in baseline).
    pub scale_logits: Vec<Tensor>,
    /// Training only, empty in baseline.
    pub unimodal_logits: Vec<UnimodalLogits>,
    pub synthesized: Vec<Synthesized>,
    pub masks: Vec<ModalityMask>,
}

fn index_tensor(samples: &[usize], device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        samples.iter().map(|&s| s as u32).collect::<Vec<_>>(),
        samples.len(),
        device,
    )?)
}

pub struct Gemmnet {
    config: ModelConfig,
    store: ParamStore,
    /// Indexed by target modality.
    generators: [Generator; 2],
    /// Indexed by modality.
    encoders: [HyfexEncoder; 2],
    fusion: Hyfma,
    decoder: SegDecoder,
    aux: Vec<AuxHead>,
    unimodal: Vec<UnimodalHead>,
    discriminators: Option<Discriminators>,
}

impl Gemmnet {
    pub fn new(config: ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(seed, dtype, device);
        let widths = config.arch.widths();
        let spec = config.arch.transformer();
        let transformer = (!config.baseline).then_some(&spec);
        let c = config.num_classes;
        let mut root = store.root();
        let make_gen = |root: &mut crate::nn::Scope, m: Modality| {
            Generator::new(
                &mut root.pp(&format!("generator.{}", m.name())),
                Direction::producing(m),
                &widths,
                transformer,
            )
        };
        let generators = [make_gen(&mut root, Modality::Rgir)?, make_gen(&mut root, Modality::Ndsm)?];
        let make_enc = |root: &mut crate::nn::Scope, m: Modality| {
            HyfexEncoder::new(&mut root.pp(&format!("encoder.{}", m.name())), m.channels(), &widths, transformer)
        };
        let encoders = [make_enc(&mut root, Modality::Rgir)?, make_enc(&mut root, Modality::Ndsm)?];
        let fusion = Hyfma::new(&mut root.pp("fusion"), &widths, config.arch.fusion_depth, transformer)?;
        let decoder = SegDecoder::new(&mut root.pp("decoder"), &widths, c)?;
        let (aux, unimodal) = if config.baseline {
            (Vec::new(), Vec::new())
        } else {
            let aux = (0..4)
                .map(|i| AuxHead::new(&mut root.pp(&format!("aux.level{}", i + 1)), widths[i], c))
                .collect::<Result<_>>()?;
            let unimodal = Modality::ALL
                .iter()
                .map(|m| UnimodalHead::new(&mut root.pp(&format!("unimodal.{}", m.name())), &widths, c))
                .collect::<Result<_>>()?;
            (aux, unimodal)
        };
        let discriminators = match config.mode {
            ReconMode::Cgan => Some(Discriminators::new(
                &mut root.pp("discriminator"),
                config.arch.discriminator_width,
            )?),
            ReconMode::Ae => None,
        };
        Ok(Self {
            config,
            store,
            generators,
            encoders,
            fusion,
            decoder,
            aux,
            unimodal,
            discriminators,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    pub fn discriminators(&self) -> Option<&Discriminators> {
        self.discriminators.as_ref()
    }

    pub fn generator(&self, target: Modality) -> &Generator {
        &self.generators[target.index()]
    }

    pub fn encoder(&self, m: Modality) -> &HyfexEncoder {
        &self.encoders[m.index()]
    }

    pub fn fusion(&self) -> &Hyfma {
        &self.fusion
    }

    /// Builds each modality's encoder input, substituting synthesized images
    /// for the samples that lack it. The real absent image is never read.
    fn assemble_inputs(&self, batch: &Batch) -> Result<([Tensor; 2], Vec<Synthesized>)> {
        let device = batch.rgir.device();
        let b = batch.len();
        let mut synthesized = Vec::new();
        let mut inputs = Vec::with_capacity(2);
        for m in Modality::ALL {
            let missing: Vec<usize> = (0..b).filter(|&i| !batch.masks[i].is_available(m)).collect();
            let real = batch.image(m);
            if missing.is_empty() {
                inputs.push(real.clone());
                continue;
            }
            let source = batch.image(m.other()).index_select(&index_tensor(&missing, device)?, 0)?;
            let image = self.generators[m.index()].generate(&source)?;
            let input = if missing.len() == b {
                image.clone()
            } else {
                let mut parts = Vec::with_capacity(b);
                let mut k = 0;
                for i in 0..b {
                    if missing.get(k) == Some(&i) {
                        parts.push(image.narrow(0, k, 1)?);
                        k += 1;
                    } else {
                        parts.push(real.narrow(0, i, 1)?);
                    }
                }
                Tensor::cat(&parts, 0)?
            };
            inputs.push(input);
            synthesized.push(Synthesized {
                modality: m,
                samples: missing,
                image,
            });
        }
        let ndsm = inputs.pop().expect("two inputs");
        let rgir = inputs.pop().expect("two inputs");
        Ok(([rgir, ndsm], synthesized))
    }

    /// Full forward pass. With `train`, also computes the auxiliary scale and
    /// unimodal logits (unless in baseline mode).
    pub fn forward(&self, batch: &Batch, train: bool) -> Result<ModelOutputs> {
        let (_, _, h, w) = batch.rgir.dims4()?;
        let ([rgir, ndsm], synthesized) = self.assemble_inputs(batch)?;
        let pa = self.encoders[0].encode(&rgir, Modality::Rgir)?;
        let pb = self.encoders[1].encode(&ndsm, Modality::Ndsm)?;
        let fused = self.fusion.fuse(&pa, &pb)?;
        let fused_logits = self.decoder.decode(&fused)?;
        let (scale_logits, unimodal_logits) = if train && !self.config.baseline {
            (self.scale_logits(&fused, h, w)?, self.unimodal_logits(batch, [&pa, &pb])?)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(ModelOutputs {
            fused_logits,
            scale_logits,
            unimodal_logits,
            synthesized,
            masks: batch.masks.clone(),
        })
    }

    fn scale_logits(&self, fused: &FusedPyramid, h: usize, w: usize) -> Result<Vec<Tensor>> {
        self.aux
            .iter()
            .zip(&fused.levels)
            .map(|(head, u)| head.forward(u, h, w))
            .collect()
    }

    fn unimodal_logits(&self, batch: &Batch, pyramids: [&PyramidFeatures; 2]) -> Result<Vec<UnimodalLogits>> {
        let mut out = Vec::new();
        for (m, pyramid) in Modality::ALL.into_iter().zip(pyramids) {
            let present: Vec<usize> = (0..batch.len()).filter(|&i| batch.masks[i].is_available(m)).collect();
            if present.is_empty() {
                continue;
            }
            let logits = if present.len() == batch.len() {
                self.unimodal[m.index()].forward(pyramid)?
            } else {
                let idx = index_tensor(&present, batch.rgir.device())?;
                let sub = PyramidFeatures {
                    levels: pyramid
                        .levels
                        .iter()
                        .map(|l| l.index_select(&idx, 0))
                        .collect::<candle_core::Result<_>>()?,
                    modality: m,
                };
                self.unimodal[m.index()].forward(&sub)?
            };
            out.push(UnimodalLogits {
                modality: m,
                samples: present,
                logits,
            });
        }
        Ok(out)
    }

    /// Fused logits for a user-declared scenario. The absent modality's pixels
    /// are zeroed before they reach the model, so its content cannot matter.
    pub fn logits(&self, bundles: &[ModalityBundle], scenario: Scenario) -> Result<Tensor> {
        let mask = scenario.mask();
        let masks = vec![mask; bundles.len()];
        let mut batch = Batch::from_bundles(bundles, &masks, self.dtype(), self.device())?;
        if let Some(m) = mask.missing() {
            let blank = batch.image(m).zeros_like()?;
            match m {
                Modality::Rgir => batch.rgir = blank,
                Modality::Ndsm => batch.ndsm = blank,
            }
        }
        Ok(self.forward(&batch, false)?.fused_logits)
    }

    /// Per-pixel argmax class maps.
    pub fn predict(&self, bundles: &[ModalityBundle], scenario: Scenario) -> Result<Vec<Array2<u32>>> {
        let logits = self.logits(bundles, scenario)?;
        let (b, _, h, w) = logits.dims4()?;
        let ids = ops::argmax_classes(&logits)?.flatten_all()?.to_vec1::<u32>()?;
        Ok((0..b)
            .map(|i| Array2::from_shape_vec((h, w), ids[i * h * w..(i + 1) * h * w].to_vec()).expect("shape"))
            .collect())
    }
}
