use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::{Batch, Gemmnet, ModelOutputs};
use crate::coloss::{coloss_total, discriminator_loss, LossBreakdown, LossConfig, SegTarget};
use crate::data::Modality;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, ops, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    /// First-moment decay for the encoder, fusion and decoder paths.
    pub beta1: f64,
    /// First-moment decay for generator and discriminator parameters.
    pub beta1_adversarial: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm cap; `0` disables clipping.
    pub clip_norm: f64,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta1_adversarial: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            batch_size: 4,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("optim.lr", "must be positive"));
        }
        for (field, b) in [
            ("optim.beta1", self.beta1),
            ("optim.beta1_adversarial", self.beta1_adversarial),
            ("optim.beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, "must be in [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("optim.eps", "must be positive"));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::config("optim.clip_norm", "must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("optim.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

const DISCRIMINATOR: &str = "discriminator.";
const GENERATOR: &str = "generator.";

/// Owns a model and its optimizer state; single writer of the parameters.
pub struct Trainer {
    model: Gemmnet,
    loss: LossConfig,
    optim: OptimConfig,
    main: Adam,
    disc: Option<Adam>,
}

impl Trainer {
    pub fn new(model: Gemmnet, loss: LossConfig, optim: OptimConfig) -> Result<Self> {
        loss.validate(model.config().num_classes)?;
        optim.validate()?;
        if loss.mode != model.config().mode {
            return Err(Error::config(
                "loss.mode",
                format!("loss mode {} does not match model mode {}", loss.mode, model.config().mode),
            ));
        }
        let main_params = model
            .params()
            .iter()
            .filter(|(k, _)| !k.starts_with(DISCRIMINATOR))
            .map(|(k, v)| {
                let beta1 = if k.starts_with(GENERATOR) {
                    optim.beta1_adversarial
                } else {
                    optim.beta1
                };
                (k.clone(), v.clone(), beta1)
            })
            .collect();
        let main = Adam::new(main_params, optim.lr, optim.beta2, optim.eps)?;
        let disc_params: Vec<_> = model
            .params()
            .vars_with_prefix(&[DISCRIMINATOR])
            .into_iter()
            .map(|(k, v)| (k, v, optim.beta1_adversarial))
            .collect();
        let disc = if disc_params.is_empty() {
            None
        } else {
            Some(Adam::new(disc_params, optim.lr, optim.beta2, optim.eps)?)
        };
        Ok(Self {
            model,
            loss,
            optim,
            main,
            disc,
        })
    }

    pub fn model(&self) -> &Gemmnet {
        &self.model
    }

    pub fn into_model(self) -> Gemmnet {
        self.model
    }

    pub fn loss_config(&self) -> &LossConfig {
        &self.loss
    }

    pub fn optim_config(&self) -> &OptimConfig {
        &self.optim
    }

    /// Completed optimizer steps.
    pub fn step(&self) -> u64 {
        self.main.steps_taken()
    }

    /// Discriminator objective over every synthesized sample, real pairs versus
    /// detached synthesized pairs.
    fn discriminator_objective(&self, outputs: &ModelOutputs, batch: &Batch) -> Result<Option<Tensor>> {
        let Some(discs) = self.model.discriminators() else {
            return Ok(None);
        };
        let total: usize = outputs.synthesized.iter().map(|s| s.samples.len()).sum();
        if total == 0 {
            return Ok(None);
        }
        let mut loss: Option<Tensor> = None;
        for syn in &outputs.synthesized {
            let idx = Tensor::from_vec(
                syn.samples.iter().map(|&s| s as u32).collect::<Vec<_>>(),
                syn.samples.len(),
                batch.rgir.device(),
            )?;
            let real = batch.image(syn.modality).index_select(&idx, 0)?;
            let cond = batch.image(syn.modality.other()).index_select(&idx, 0)?;
            let d = discs.judging(syn.modality);
            let d_real = d.forward(&cond, &real)?;
            let d_fake = d.forward(&cond, &syn.image.detach())?;
            let weight = syn.samples.len() as f64 / total as f64;
            let term = (discriminator_loss(&d_real, &d_fake)? * weight)?;
            loss = Some(match loss {
                Some(l) => (l + term)?,
                None => term,
            });
        }
        Ok(loss)
    }

    /// One optimization step on a batch whose masks are already drawn.
    ///
    /// In cGAN mode the discriminators are updated first on detached
    /// synthesized images; the generator side then sees the updated critics.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let step = self.step() + 1;
        let target = SegTarget::new(batch.labels.view(), &self.loss, self.model.dtype(), self.model.device())?;
        let outputs = self.model.forward(batch, true)?;

        let mut adv_d = 0.0;
        if let Some(d_loss) = self.discriminator_objective(&outputs, batch)? {
            adv_d = ops::scalar_f64(&d_loss)?;
            if !adv_d.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    breakdown: format!("adv_d={adv_d}"),
                });
            }
            let opt = self.disc.as_mut().expect("discriminator optimizer");
            let mut grads = d_loss.backward()?;
            if self.optim.clip_norm > 0.0 {
                clip_grad_norm(&mut grads, opt.vars(), self.optim.clip_norm)?;
            }
            opt.step(&grads)?;
        }

        let (total, mut breakdown) = coloss_total(
            &outputs,
            &target,
            &batch.rgir,
            &batch.ndsm,
            self.model.discriminators(),
            &self.loss,
        )?;
        breakdown.adv_discriminator = adv_d;
        if !breakdown.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                breakdown: format!("{breakdown:?}"),
            });
        }
        let mut grads = total.backward()?;
        if self.optim.clip_norm > 0.0 {
            clip_grad_norm(&mut grads, self.main.vars(), self.optim.clip_norm)?;
        }
        self.main.step(&grads)?;
        Ok(breakdown)
    }

    /// Moment tensors keyed `adam.main.*` and `adam.disc.*`.
    pub fn optimizer_state(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<_> = self
            .main
            .state()
            .into_iter()
            .map(|(k, t)| (format!("adam.main.{k}"), t))
            .collect();
        if let Some(d) = &self.disc {
            out.extend(d.state().into_iter().map(|(k, t)| (format!("adam.disc.{k}"), t)));
        }
        out
    }

    pub fn load_optimizer_state(&mut self, step: u64, lookup: impl Fn(&str) -> Option<Tensor>) -> Result<()> {
        self.main.load_state(step, |k| lookup(&format!("adam.main.{k}")))?;
        if let Some(d) = &mut self.disc {
            d.load_state(step, |k| lookup(&format!("adam.disc.{k}")))?;
        }
        Ok(())
    }

    /// Mean L1 distance between a generator's output and the real target on a batch.
    pub fn generator_l1(&self, batch: &Batch, target: Modality) -> Result<f64> {
        let synth = self.model.generator(target).generate(batch.image(target.other()))?;
        ops::mean_all_f64(&(synth - batch.image(target))?.abs()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloss::ReconMode;
    use crate::data::synth::synth_dataset;
    use crate::data::ModalityMask;
    use crate::hyfex::ArchConfig;
    use crate::model::ModelConfig;
    use candle_core::{DType, Device};

    fn trainer(mode: ReconMode, baseline: bool) -> Trainer {
        let cfg = ModelConfig {
            mode,
            baseline,
            num_classes: 6,
            arch: ArchConfig::tiny(),
        };
        let model = Gemmnet::new(cfg, 7, DType::F32, &Device::Cpu).unwrap();
        let loss = LossConfig {
            mode,
            ..LossConfig::uniform(6)
        };
        Trainer::new(model, loss, OptimConfig::default()).unwrap()
    }

    fn batch(masks: &[ModalityMask]) -> Batch {
        let tiles = synth_dataset(1, masks.len(), 64, 6).unwrap();
        Batch::from_bundles(&tiles, masks, DType::F32, &Device::Cpu).unwrap()
    }

    #[test]
    fn breakdown_sums_and_routes() {
        let mut t = trainer(ReconMode::Ae, false);
        let bd = t.train_step(&batch(&[ModalityMask::FULL])).unwrap();
        assert_eq!(bd.rec, 0.0);
        assert_eq!(bd.adv_generator, 0.0);
        assert!((bd.total - bd.components_sum()).abs() < 1e-5);
        let bd = t.train_step(&batch(&[ModalityMask::MISSING_NDSM, ModalityMask::FULL])).unwrap();
        assert!(bd.rec > 0.0);
        assert!(bd.seg_unimodal > 0.0 && bd.seg_fused_scales > 0.0);
        assert_eq!(t.step(), 2);
    }

    #[test]
    fn baseline_zeroes_auxiliary_terms() {
        let mut t = trainer(ReconMode::Ae, true);
        let bd = t.train_step(&batch(&[ModalityMask::MISSING_RGIR])).unwrap();
        assert_eq!(bd.seg_fused_scales, 0.0);
        assert_eq!(bd.seg_unimodal, 0.0);
    }

    #[test]
    fn cgan_step_updates_discriminator() {
        let mut t = trainer(ReconMode::Cgan, false);
        let before = t.model().params().get("discriminator.ndsm.conv0.weight").unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let bd = t.train_step(&batch(&[ModalityMask::MISSING_NDSM])).unwrap();
        assert!(bd.adv_discriminator > 0.0 && bd.adv_generator > 0.0);
        let after = t.model().params().get("discriminator.ndsm.conv0.weight").unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_ne!(before, after);
        assert!(t.optimizer_state().iter().any(|(k, _)| k.starts_with("adam.disc.")));
    }

    #[test]
    fn full_mask_leaves_generators_untouched() {
        let mut t = trainer(ReconMode::Ae, false);
        let name = "generator.ndsm.decoder.head.weight";
        let before = t.model().params().get(name).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        t.train_step(&batch(&[ModalityMask::FULL])).unwrap();
        let after = t.model().params().get(name).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let cfg = ModelConfig {
            arch: ArchConfig::tiny(),
            ..ModelConfig::default()
        };
        let model = Gemmnet::new(cfg, 0, DType::F32, &Device::Cpu).unwrap();
        let loss = LossConfig {
            mode: ReconMode::Cgan,
            ..LossConfig::uniform(6)
        };
        assert!(Trainer::new(model, loss, OptimConfig::default()).is_err());
    }
}
