//! Single-file checkpoints in the safetensors container.
//!
//! Tensors are stored as `param.<name>` for every parameter and
//! `adam.main.{m,v}.<name>` / `adam.disc.{m,v}.<name>` for optimizer moments.
//! The header metadata holds `format` and `meta`, a JSON [`CheckpointMeta`].

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{Gemmnet, ModelConfig, OptimConfig, Trainer};
use crate::coloss::LossConfig;
use crate::data::io::NormStats;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "gemmnet-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub step: u64,
    pub seed: u64,
    /// Normalization statistics in the `norm_stats.txt` text form.
    pub norm_stats: Option<String>,
    /// The run config file the checkpoint came from, verbatim.
    pub run_config: Option<String>,
    /// Full-scenario validation mF1 at save time, if evaluated.
    pub val_mf1: Option<f64>,
}

impl CheckpointMeta {
    pub fn norm_stats(&self) -> Result<Option<NormStats>> {
        self.norm_stats.as_deref().map(NormStats::parse).transpose()
    }
}

fn ckpt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes parameters, optimizer state and `meta` (whose `step` is taken from the trainer).
pub fn save_checkpoint(path: &Path, trainer: &Trainer, meta: &CheckpointMeta) -> Result<()> {
    let mut meta = meta.clone();
    meta.step = trainer.step();
    meta.model = trainer.model().config().clone();
    meta.loss = trainer.loss_config().clone();
    meta.optim = trainer.optim_config().clone();
    let mut tensors: Vec<(String, Tensor)> = trainer
        .model()
        .params()
        .iter()
        .map(|(k, v)| (format!("param.{k}"), v.as_tensor().detach()))
        .collect();
    tensors.extend(trainer.optimizer_state());
    let json = serde_json::to_string(&meta).map_err(|e| ckpt_err(path, e.to_string()))?;
    let info = HashMap::from([
        ("format".to_string(), CHECKPOINT_FORMAT.to_string()),
        ("meta".to_string(), json),
    ]);
    let bytes = safetensors::serialize(tensors, Some(info)).map_err(|e| ckpt_err(path, e.to_string()))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// A loaded checkpoint, not yet bound to a model.
pub struct Checkpoint {
    pub path: PathBuf,
    pub meta: CheckpointMeta,
    tensors: HashMap<String, Tensor>,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| ckpt_err(path, e.to_string()))?;
    let (_, header) =
        safetensors::SafeTensors::read_metadata(&bytes).map_err(|e| ckpt_err(path, e.to_string()))?;
    let info = header.metadata().clone().unwrap_or_default();
    match info.get("format") {
        Some(f) if f == CHECKPOINT_FORMAT => {}
        other => return Err(ckpt_err(path, format!("unsupported format {other:?}"))),
    }
    let meta: CheckpointMeta = serde_json::from_str(info.get("meta").ok_or_else(|| ckpt_err(path, "missing meta"))?)
        .map_err(|e| ckpt_err(path, e.to_string()))?;
    let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu)?;
    Ok(Checkpoint {
        path: path.to_path_buf(),
        meta,
        tensors,
    })
}

impl Checkpoint {
    /// Rebuilds the model and copies every parameter in; the stored and
    /// configured inventories must match exactly.
    pub fn model(&self, device: &Device) -> Result<Gemmnet> {
        let model = Gemmnet::new(self.meta.model.clone(), 0, DType::F32, device)?;
        let stored = self.tensors.keys().filter(|k| k.starts_with("param.")).count();
        if stored != model.params().len() {
            return Err(ckpt_err(
                &self.path,
                format!("holds {stored} parameters, config expects {}", model.params().len()),
            ));
        }
        for (name, _) in model.params().iter() {
            let t = self
                .tensors
                .get(&format!("param.{name}"))
                .ok_or_else(|| ckpt_err(&self.path, format!("missing parameter '{name}'")))?;
            model
                .params()
                .set(name, t)
                .map_err(|e| ckpt_err(&self.path, e.to_string()))?;
        }
        Ok(model)
    }

    /// Model plus optimizer state, ready to continue training.
    pub fn trainer(&self, device: &Device) -> Result<Trainer> {
        let model = self.model(device)?;
        let mut trainer = Trainer::new(model, self.meta.loss.clone(), self.meta.optim.clone())?;
        trainer.load_optimizer_state(self.meta.step, |k| {
            self.tensors.get(k).and_then(|t| t.to_device(device).ok())
        })?;
        Ok(trainer)
    }

    /// Errors unless the checkpoint predicts `num_classes` classes.
    pub fn check_num_classes(&self, num_classes: usize) -> Result<()> {
        if self.meta.model.num_classes != num_classes {
            return Err(ckpt_err(
                &self.path,
                format!(
                    "model has {} classes but the dataset has {num_classes}",
                    self.meta.model.num_classes
                ),
            ));
        }
        Ok(())
    }
}
