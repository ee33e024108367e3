//! Training objective: fused, per-scale and unimodal segmentation losses
//! (soft Dice + weighted label-smoothed CE) plus modality reconstruction,
//! either as a plain L2 autoencoder term or as a conditional GAN with L1.

use std::fmt;
use std::str::FromStr;

use candle_core::{DType, Device, Tensor};
use ndarray::ArrayView3;
use serde::{Deserialize, Serialize};

use crate::data::{Modality, DEFAULT_IGNORE_INDEX};
use crate::error::{Error, Result};
use crate::model::ModelOutputs;
use crate::nn::{ops, Conv2d, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconMode {
    Ae,
    Cgan,
}

impl ReconMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ae => "ae",
            Self::Cgan => "cgan",
        }
    }
}

impl fmt::Display for ReconMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReconMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ae" => Ok(Self::Ae),
            "cgan" => Ok(Self::Cgan),
            other => Err(Error::config("mode", format!("unknown mode '{other}' (expected ae or cgan)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// One weight per class. Left empty in a config file, it is filled from
    /// train-split frequencies by [`inverse_log_weights`].
    pub class_weights: Vec<f64>,
    pub lambda_l1: f64,
    pub dice_smooth: f64,
    pub label_smoothing: f64,
    pub ignore_index: u32,
    pub mode: ReconMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            class_weights: Vec::new(),
            lambda_l1: 100.0,
            dice_smooth: 1e-6,
            label_smoothing: 0.05,
            ignore_index: DEFAULT_IGNORE_INDEX,
            mode: ReconMode::Ae,
        }
    }
}

impl LossConfig {
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            class_weights: vec![1.0; num_classes],
            ..Self::default()
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_weights.len()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.class_weights.len() != num_classes {
            return Err(Error::config(
                "loss.class_weights",
                format!("expected {num_classes} weights, got {}", self.class_weights.len()),
            ));
        }
        if self.class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("loss.class_weights", "weights must be finite and nonnegative"));
        }
        if !(self.lambda_l1.is_finite() && self.lambda_l1 >= 0.0) {
            return Err(Error::config("loss.lambda_l1", "must be >= 0"));
        }
        if !(self.dice_smooth.is_finite() && self.dice_smooth > 0.0) {
            return Err(Error::config("loss.dice_smooth", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::config("loss.label_smoothing", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// `1 / ln(1.02 + f_c)` for class pixel frequencies `f_c`.
pub fn inverse_log_weights(frequencies: &[f64]) -> Vec<f64> {
    frequencies.iter().map(|f| 1.0 / (1.02 + f).ln()).collect()
}

/// Label-derived tensors reused by every segmentation term of a batch.
#[derive(Debug, Clone)]
pub struct SegTarget {
    /// `[B, C, H, W]`, all zero at ignored pixels.
    one_hot: Tensor,
    /// `[B, 1, H, W]`, 1 at labelled pixels.
    valid: Tensor,
    /// `[B, 1, H, W]`, the class weight at labelled pixels, 0 elsewhere.
    weights: Tensor,
    /// `[B, C]`, 1 where the class occurs in the sample.
    present: Tensor,
    empty: Vec<bool>,
}

impl SegTarget {
    pub fn new(labels: ArrayView3<u32>, cfg: &LossConfig, dtype: DType, device: &Device) -> Result<Self> {
        let c = cfg.num_classes();
        let (b, h, w) = labels.dim();
        let hw = h * w;
        let mut one_hot = vec![0.0f64; b * c * hw];
        let mut valid = vec![0.0f64; b * hw];
        let mut weights = vec![0.0f64; b * hw];
        let mut present = vec![0.0f64; b * c];
        let mut empty = vec![true; b];
        for ((bi, i, j), &l) in labels.indexed_iter() {
            if l == cfg.ignore_index {
                continue;
            }
            let l = l as usize;
            if l >= c {
                return Err(Error::Validation(format!("label {l} out of range for {c} classes")));
            }
            let p = i * w + j;
            one_hot[(bi * c + l) * hw + p] = 1.0;
            valid[bi * hw + p] = 1.0;
            weights[bi * hw + p] = cfg.class_weights[l];
            present[bi * c + l] = 1.0;
            empty[bi] = false;
        }
        let mk = |v: Vec<f64>, shape: &[usize]| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?)
        };
        Ok(Self {
            one_hot: mk(one_hot, &[b, c, h, w])?,
            valid: mk(valid, &[b, 1, h, w])?,
            weights: mk(weights, &[b, 1, h, w])?,
            present: mk(present, &[b, c])?,
            empty,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.empty.len()
    }

    /// Targets of a subset of the batch, in the given order.
    pub fn select(&self, samples: &[usize]) -> Result<Self> {
        let idx = Tensor::from_vec(
            samples.iter().map(|&s| s as u32).collect::<Vec<_>>(),
            samples.len(),
            self.one_hot.device(),
        )?;
        Ok(Self {
            one_hot: self.one_hot.index_select(&idx, 0)?,
            valid: self.valid.index_select(&idx, 0)?,
            weights: self.weights.index_select(&idx, 0)?,
            present: self.present.index_select(&idx, 0)?,
            empty: samples.iter().map(|&s| self.empty[s]).collect(),
        })
    }
}

/// Per-sample loss values `[B]`; `empty[b]` marks samples with no labelled pixel
/// (their value is defined as 0).
#[derive(Debug, Clone)]
pub struct LossValue {
    pub per_sample: Tensor,
    pub empty: Vec<bool>,
}

impl LossValue {
    pub fn mean(&self) -> Result<Tensor> {
        Ok(self.per_sample.mean(0)?)
    }

    pub fn sum(&self) -> Result<Tensor> {
        Ok(self.per_sample.sum(0)?)
    }
}

fn check_logits(logits: &Tensor, target: &SegTarget) -> Result<()> {
    if logits.dims() != target.one_hot.dims() {
        return Err(Error::Shape(format!(
            "logits {:?} do not match target {:?}",
            logits.dims(),
            target.one_hot.dims()
        )));
    }
    Ok(())
}

/// `1 - mean soft Dice` over the classes present in each sample.
pub fn dice_loss(logits: &Tensor, target: &SegTarget, cfg: &LossConfig) -> Result<LossValue> {
    check_logits(logits, target)?;
    let eps = cfg.dice_smooth;
    let p = ops::softmax(logits, 1)?.broadcast_mul(&target.valid)?;
    let inter = (&p * &target.one_hot)?.sum((2, 3))?;
    let denom = (p.sum((2, 3))? + target.one_hot.sum((2, 3))?)?;
    let dice = (((inter * 2.0)? + eps)? / (denom + eps)?)?;
    let per_class = (dice.affine(-1.0, 1.0)? * &target.present)?;
    let n = target.present.sum(1)?.maximum(1.0)?;
    Ok(LossValue {
        per_sample: (per_class.sum(1)? / n)?,
        empty: target.empty.clone(),
    })
}

/// Label-smoothed cross entropy, each pixel scaled by its class weight and
/// normalized by the total applied weight.
pub fn weighted_ce(logits: &Tensor, target: &SegTarget, cfg: &LossConfig) -> Result<LossValue> {
    check_logits(logits, target)?;
    let c = cfg.num_classes() as f64;
    let alpha = cfg.label_smoothing;
    let q = target.one_hot.affine(1.0 - alpha, alpha / c)?;
    let ce = (q * ops::log_softmax(logits, 1)?)?.sum_keepdim(1)?.neg()?;
    let num = (ce * &target.weights)?.sum((1, 2, 3))?;
    let den = target.weights.sum((1, 2, 3))?.maximum(1e-12)?;
    Ok(LossValue {
        per_sample: (num / den)?,
        empty: target.empty.clone(),
    })
}

/// Dice + weighted CE.
pub fn seg_loss(logits: &Tensor, target: &SegTarget, cfg: &LossConfig) -> Result<LossValue> {
    let d = dice_loss(logits, target, cfg)?;
    let ce = weighted_ce(logits, target, cfg)?;
    Ok(LossValue {
        per_sample: (d.per_sample + ce.per_sample)?,
        empty: d.empty,
    })
}

fn check_same(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("shapes differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn per_sample_mean(x: &Tensor) -> Result<Tensor> {
    let b = x.dims()[0];
    Ok(x.reshape((b, ()))?.mean(1)?)
}

/// Mean squared error over all elements.
pub fn rec_loss_ae(real: &Tensor, synth: &Tensor) -> Result<Tensor> {
    check_same(real, synth)?;
    Ok((real - synth)?.sqr()?.mean_all()?)
}

/// Mean absolute error over all elements.
pub fn l1_loss(real: &Tensor, synth: &Tensor) -> Result<Tensor> {
    check_same(real, synth)?;
    Ok((real - synth)?.abs()?.mean_all()?)
}

/// Patch discriminator over the channel-concatenated (condition, candidate) pair.
///
/// Three stride-2 4x4 convs and two stride-1 4x4 convs: a 64x64 input gives a 6x6 grid.
#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    layers: Vec<Conv2d>,
}

impl PatchDiscriminator {
    pub fn new(s: &mut Scope, in_channels: usize, width: usize) -> Result<Self> {
        let specs = [
            (in_channels, width, 2),
            (width, 2 * width, 2),
            (2 * width, 4 * width, 2),
            (4 * width, 8 * width, 1),
            (8 * width, 1, 1),
        ];
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout, stride))| Conv2d::new(&mut s.pp(&format!("conv{i}")), cin, cout, 4, stride, 1))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, condition: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        let (b, _, h, w) = condition.dims4()?;
        let (b2, _, h2, w2) = candidate.dims4()?;
        if (b, h, w) != (b2, h2, w2) {
            return Err(Error::Shape(format!(
                "condition {:?} and candidate {:?} are not aligned",
                condition.dims(),
                candidate.dims()
            )));
        }
        let mut x = Tensor::cat(&[condition, candidate], 1)?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x)?;
            if i < last {
                x = ops::leaky_relu(&x, 0.2)?;
            }
        }
        Ok(x)
    }
}

/// One discriminator per synthesized target modality.
#[derive(Debug, Clone)]
pub struct Discriminators {
    rgir: PatchDiscriminator,
    ndsm: PatchDiscriminator,
}

impl Discriminators {
    pub fn new(s: &mut Scope, width: usize) -> Result<Self> {
        let ch = Modality::Rgir.channels() + Modality::Ndsm.channels();
        Ok(Self {
            rgir: PatchDiscriminator::new(&mut s.pp("rgir"), ch, width)?,
            ndsm: PatchDiscriminator::new(&mut s.pp("ndsm"), ch, width)?,
        })
    }

    /// The discriminator judging candidates of `target`.
    pub fn judging(&self, target: Modality) -> &PatchDiscriminator {
        match target {
            Modality::Rgir => &self.rgir,
            Modality::Ndsm => &self.ndsm,
        }
    }
}

/// `1/2 [BCE(real -> 1) + BCE(fake -> 0)]`.
pub fn discriminator_loss(d_real: &Tensor, d_fake: &Tensor) -> Result<Tensor> {
    let r = ops::bce_with_logits(d_real, 1.0)?.mean_all()?;
    let f = ops::bce_with_logits(d_fake, 0.0)?.mean_all()?;
    Ok(((r + f)? * 0.5)?)
}

#[derive(Debug, Clone)]
pub struct GanLosses {
    /// `BCE(fake -> 1) + lambda * L1`.
    pub generator: Tensor,
    pub discriminator: Tensor,
}

pub fn gan_losses(d_real: &Tensor, d_fake: &Tensor, real: &Tensor, synth: &Tensor, cfg: &LossConfig) -> Result<GanLosses> {
    let adv = ops::bce_with_logits(d_fake, 1.0)?.mean_all()?;
    let l1 = l1_loss(real, synth)?;
    Ok(GanLosses {
        generator: (adv + (l1 * cfg.lambda_l1)?)?,
        discriminator: discriminator_loss(d_real, d_fake)?,
    })
}

/// Scalar components of one training step's objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg_fused: f64,
    pub seg_fused_scales: f64,
    pub seg_unimodal: f64,
    /// L2 in AE mode, `lambda * L1` in cGAN mode.
    pub rec: f64,
    pub adv_generator: f64,
    pub adv_discriminator: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "step,seg_fused,seg_scales,seg_unimodal,rec,adv_g,adv_d,total";

    pub fn components_sum(&self) -> f64 {
        self.seg_fused + self.seg_fused_scales + self.seg_unimodal + self.rec + self.adv_generator
    }

    pub fn is_finite(&self) -> bool {
        [
            self.seg_fused,
            self.seg_fused_scales,
            self.seg_unimodal,
            self.rec,
            self.adv_generator,
            self.adv_discriminator,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn csv_row(&self, step: u64) -> String {
        format!(
            "{step},{},{},{},{},{},{},{}",
            self.seg_fused,
            self.seg_fused_scales,
            self.seg_unimodal,
            self.rec,
            self.adv_generator,
            self.adv_discriminator,
            self.total
        )
    }
}

fn index_tensor(samples: &[usize], device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        samples.iter().map(|&s| s as u32).collect::<Vec<_>>(),
        samples.len(),
        device,
    )?)
}

/// Full objective for a batch: returns the differentiable total and its breakdown.
///
/// Each term is a per-sample value averaged over the batch. Unimodal and
/// reconstruction terms only exist for the samples they apply to and are
/// divided by the full batch size. `adv_discriminator` is left at 0; the
/// trainer fills it in after its own discriminator step.
pub fn coloss_total(
    outputs: &ModelOutputs,
    target: &SegTarget,
    rgir: &Tensor,
    ndsm: &Tensor,
    discriminators: Option<&Discriminators>,
    cfg: &LossConfig,
) -> Result<(Tensor, LossBreakdown)> {
    let b = target.batch_size() as f64;
    let device = outputs.fused_logits.device();
    let zero = Tensor::zeros((), outputs.fused_logits.dtype(), device)?;

    let seg_fused = seg_loss(&outputs.fused_logits, target, cfg)?.mean()?;

    let mut seg_scales = zero.clone();
    for logits in &outputs.scale_logits {
        seg_scales = (seg_scales + seg_loss(logits, target, cfg)?.mean()?)?;
    }

    let mut seg_unimodal = zero.clone();
    for uni in &outputs.unimodal_logits {
        let sub = target.select(&uni.samples)?;
        let sum = seg_loss(&uni.logits, &sub, cfg)?.sum()?;
        seg_unimodal = (seg_unimodal + (sum / b)?)?;
    }

    let mut rec = zero.clone();
    let mut adv = zero.clone();
    for syn in &outputs.synthesized {
        let idx = index_tensor(&syn.samples, device)?;
        let (real_target, real_source) = match syn.modality {
            Modality::Rgir => (rgir, ndsm),
            Modality::Ndsm => (ndsm, rgir),
        };
        let real = real_target.index_select(&idx, 0)?;
        match cfg.mode {
            ReconMode::Ae => {
                let per = per_sample_mean(&(&real - &syn.image)?.sqr()?)?;
                rec = (rec + (per.sum(0)? / b)?)?;
            }
            ReconMode::Cgan => {
                let per = per_sample_mean(&(&real - &syn.image)?.abs()?)?;
                rec = (rec + ((per.sum(0)? * cfg.lambda_l1)? / b)?)?;
                let d = discriminators
                    .ok_or_else(|| Error::Validation("cgan mode needs discriminators".into()))?
                    .judging(syn.modality);
                let cond = real_source.index_select(&idx, 0)?;
                let logits = d.forward(&cond, &syn.image)?;
                let per = per_sample_mean(&ops::bce_with_logits(&logits, 1.0)?)?;
                adv = (adv + (per.sum(0)? / b)?)?;
            }
        }
    }

    let total = ((((&seg_fused + &seg_scales)? + &seg_unimodal)? + &rec)? + &adv)?;
    let breakdown = LossBreakdown {
        seg_fused: ops::scalar_f64(&seg_fused)?,
        seg_fused_scales: ops::scalar_f64(&seg_scales)?,
        seg_unimodal: ops::scalar_f64(&seg_unimodal)?,
        rec: ops::scalar_f64(&rec)?,
        adv_generator: ops::scalar_f64(&adv)?,
        adv_discriminator: 0.0,
        total: ops::scalar_f64(&total)?,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(v: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(v.to_vec(), shape, &Device::Cpu).unwrap()
    }

    fn scalar(x: &Tensor) -> f64 {
        x.to_scalar::<f64>().unwrap()
    }

    fn target(labels: &Array3<u32>, cfg: &LossConfig) -> SegTarget {
        SegTarget::new(labels.view(), cfg, DType::F64, &Device::Cpu).unwrap()
    }

    fn no_smoothing(c: usize) -> LossConfig {
        LossConfig {
            label_smoothing: 0.0,
            ..LossConfig::uniform(c)
        }
    }

    #[test]
    fn dice_perfect_and_disjoint() {
        let cfg = no_smoothing(2);
        let labels = Array3::from_shape_vec((1, 2, 2), vec![0, 1, 1, 0]).unwrap();
        let tg = target(&labels, &cfg);
        let m = 20.0;
        let perfect = t(&[m, -m, -m, m, -m, m, m, -m], &[1, 2, 2, 2]);
        assert!(scalar(&dice_loss(&perfect, &tg, &cfg).unwrap().mean().unwrap()) < 0.01);
        let wrong = perfect.neg().unwrap();
        assert!(scalar(&dice_loss(&wrong, &tg, &cfg).unwrap().mean().unwrap()) > 0.99);
        assert!(scalar(&seg_loss(&perfect, &tg, &cfg).unwrap().mean().unwrap()) < 0.02);
    }

    #[test]
    fn dice_uniform_four_pixel_case() {
        // p = 0.5 everywhere, all labels class 0: dice_0 = (4 + e) / (6 + e), class 1 absent
        let cfg = no_smoothing(2);
        let labels = Array3::from_elem((1, 2, 2), 0u32);
        let logits = Tensor::zeros((1, 2, 2, 2), DType::F64, &Device::Cpu).unwrap();
        let d = scalar(&dice_loss(&logits, &target(&labels, &cfg), &cfg).unwrap().mean().unwrap());
        let e = cfg.dice_smooth;
        assert!((d - (1.0 - (4.0 + e) / (6.0 + e))).abs() < 1e-12);
        assert!((d - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn all_ignored_sample_is_zero_and_flagged() {
        let cfg = LossConfig::uniform(3);
        let labels = Array3::from_elem((1, 2, 2), cfg.ignore_index);
        let tg = target(&labels, &cfg);
        let logits = t(&[0.3; 12], &[1, 3, 2, 2]);
        let d = dice_loss(&logits, &tg, &cfg).unwrap();
        assert_eq!(d.empty, vec![true]);
        assert_eq!(scalar(&d.mean().unwrap()), 0.0);
        assert_eq!(scalar(&weighted_ce(&logits, &tg, &cfg).unwrap().mean().unwrap()), 0.0);
    }

    #[test]
    fn single_pixel_ce_ignores_weight() {
        // softmax(ln 3, 0) = (0.75, 0.25)
        let cfg = LossConfig {
            class_weights: vec![2.0, 1.0],
            label_smoothing: 0.0,
            ..LossConfig::default()
        };
        let labels = Array3::from_elem((1, 1, 1), 0u32);
        let logits = t(&[3f64.ln(), 0.0], &[1, 2, 1, 1]);
        let ce = scalar(&weighted_ce(&logits, &target(&labels, &cfg), &cfg).unwrap().mean().unwrap());
        assert!((ce + 0.75f64.ln()).abs() < 1e-12);
        assert!((ce - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn label_smoothing_matches_closed_form() {
        let cfg = LossConfig {
            label_smoothing: 0.1,
            ..LossConfig::uniform(2)
        };
        let labels = Array3::from_elem((1, 1, 1), 0u32);
        let logits = t(&[3f64.ln(), 0.0], &[1, 2, 1, 1]);
        let ce = scalar(&weighted_ce(&logits, &target(&labels, &cfg), &cfg).unwrap().mean().unwrap());
        let expect = -(0.95 * 0.75f64.ln() + 0.05 * 0.25f64.ln());
        assert!((ce - expect).abs() < 1e-12);
    }

    #[test]
    fn weight_scaling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let labels = Array3::from_shape_fn((2, 4, 4), |_| rng.gen_range(0..3u32));
        let logits: Vec<f64> = (0..2 * 3 * 16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let logits = t(&logits, &[2, 3, 4, 4]);
        let a = LossConfig {
            class_weights: vec![0.5, 2.0, 7.0],
            ..LossConfig::default()
        };
        let b = LossConfig {
            class_weights: vec![1.0, 4.0, 14.0],
            ..LossConfig::default()
        };
        let ca = scalar(&weighted_ce(&logits, &target(&labels, &a), &a).unwrap().mean().unwrap());
        let cb = scalar(&weighted_ce(&logits, &target(&labels, &b), &b).unwrap().mean().unwrap());
        assert!((ca - cb).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_cases() {
        assert_eq!(scalar(&rec_loss_ae(&t(&[0.2, 0.8], &[2]), &t(&[0.2, 0.8], &[2])).unwrap()), 0.0);
        assert!((scalar(&rec_loss_ae(&t(&[1.0; 4], &[4]), &t(&[0.0; 4], &[4])).unwrap()) - 1.0).abs() < 1e-12);
        let v = scalar(&rec_loss_ae(&t(&[0.2, 0.8], &[2]), &t(&[0.5, 0.5], &[2])).unwrap());
        assert!((v - 0.09).abs() < 1e-12);
        assert!(rec_loss_ae(&t(&[0.0; 2], &[2]), &t(&[0.0; 3], &[3])).is_err());
    }

    #[test]
    fn gan_fixed_points() {
        let cfg = LossConfig::uniform(2);
        let zeros = Tensor::zeros((1, 1, 6, 6), DType::F64, &Device::Cpu).unwrap();
        let real = Tensor::full(0.5f64, (1, 1, 8, 8), &Device::Cpu).unwrap();
        let g = gan_losses(&zeros, &zeros, &real, &real, &cfg).unwrap();
        let ln2 = 2f64.ln();
        assert!((scalar(&g.discriminator) - ln2).abs() < 1e-12);
        assert!((scalar(&g.generator) - ln2).abs() < 1e-12);
        let synth = (&real + 0.01).unwrap();
        let g = gan_losses(&zeros, &zeros, &real, &synth, &cfg).unwrap();
        assert!((scalar(&g.generator) - (ln2 + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn discriminator_grid_is_six_by_six() {
        let mut store = ParamStore::new(0, DType::F32, &Device::Cpu);
        let d = Discriminators::new(&mut store.root(), 8).unwrap();
        let cond = Tensor::zeros((2, 3, 64, 64), DType::F32, &Device::Cpu).unwrap();
        let cand = Tensor::ones((2, 1, 64, 64), DType::F32, &Device::Cpu).unwrap();
        let out = d.judging(Modality::Ndsm).forward(&cond, &cand).unwrap();
        assert_eq!(out.dims(), &[2, 1, 6, 6]);
        let again = d.judging(Modality::Ndsm).forward(&cond, &cand).unwrap();
        assert_eq!(
            out.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            again.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        );
        let small = Tensor::zeros((2, 1, 32, 32), DType::F32, &Device::Cpu).unwrap();
        assert!(d.judging(Modality::Ndsm).forward(&cond, &small).is_err());
    }

    #[test]
    fn inverse_log_weights_favour_rare_classes() {
        let w = inverse_log_weights(&[0.5, 0.015]);
        assert!((w[0] - 1.0 / 1.52f64.ln()).abs() < 1e-12);
        assert!(w[1] > 10.0 * w[0] / 2.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = LossConfig::uniform(3);
        assert!(cfg.validate(3).is_ok());
        assert!(cfg.validate(4).is_err());
        cfg.label_smoothing = 1.0;
        assert!(cfg.validate(3).is_err());
        assert_eq!("cgan".parse::<ReconMode>().unwrap(), ReconMode::Cgan);
        assert!("gan".parse::<ReconMode>().is_err());
    }
}
