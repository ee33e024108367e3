//! Command implementations behind the `gemmnet` binary: dataset synthesis,
//! training, multi-scenario evaluation, comparison and plotting.
//!
//! Run directory layout written by [`cmd_train`]:
//!
//! ```text
//! <run>/config.toml        effective config (class weights resolved)
//! <run>/loss.csv           step,seg_fused,seg_scales,seg_unimodal,rec,adv_g,adv_d,total
//! <run>/val_metrics.csv    step,scenario,class,f1,iou   (class `mean` rows hold mF1/mIoU)
//! <run>/last.ckpt          latest checkpoint
//! <run>/best.ckpt          best full-scenario validation mF1
//! <run>/train.lock         present while a trainer owns the directory
//! ```
//!
//! [`cmd_eval`] writes `metrics.csv` (`scenario,class,f1,iou`) and
//! `metrics.txt` (a table); [`cmd_plot`] renders `loss_curve.svg` and
//! `f1_bars.svg`.

mod eval;
mod plot;
mod report;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coloss::LossConfig;
use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, OptimConfig};

pub use eval::{cmd_eval, evaluate, EvalOptions, EvalOutcome, EvalReport, LabelOracle, Predictor, ScenarioMetrics};
pub use plot::{cmd_plot, render_f1_bars, render_loss_curve};
pub use report::{
    compare_reports, format_comparison, metrics_table, read_metrics_csv, write_metrics_csv, ComparisonRow, MetricRow,
    MEAN_ROW, METRICS_HEADER,
};
pub use synth::{cmd_synth, SynthOptions};
pub use train::{cmd_train, TrainOptions, TrainSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub batch_size: usize,
    /// Class names left out of mF1/mIoU.
    pub excluded_classes: Vec<String>,
    /// Class whose F1 is tracked separately in summaries.
    pub rare_class: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            excluded_classes: vec!["clutter".into()],
            rare_class: Some("car".into()),
        }
    }
}

/// Everything a training run needs; a run directory always holds a copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_max_steps() -> u64 {
    1000
}

fn default_eval_every() -> u64 {
    250
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            field: e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_default(),
            reason: e.message().to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Harness(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Harness(format!("cannot serialize config: {e}")))
    }

    /// Checks every section; class weights may still be empty (resolved at train time).
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        self.optim.validate()?;
        if self.model.num_classes != self.dataset.num_classes {
            return Err(Error::config(
                "model.num_classes",
                format!("{} does not match dataset.num_classes {}", self.model.num_classes, self.dataset.num_classes),
            ));
        }
        if self.loss.mode != self.model.mode {
            return Err(Error::config("loss.mode", "must equal model.mode"));
        }
        if !self.loss.class_weights.is_empty() {
            self.loss.validate(self.model.num_classes)?;
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        if self.eval.batch_size == 0 {
            return Err(Error::config("eval.batch_size", "must be >= 1"));
        }
        let stride = crate::hyfex::BOTTLENECK_STRIDE;
        if self.dataset.patch_size % stride != 0 {
            return Err(Error::config(
                "dataset.patch_size",
                format!("must be a multiple of {stride}"),
            ));
        }
        Ok(())
    }

    /// Class ids named in `eval.excluded_classes` (unknown names are skipped).
    pub fn excluded_class_ids(&self) -> Vec<usize> {
        class_ids(&self.dataset.class_names, &self.eval.excluded_classes)
    }

    pub fn rare_class_id(&self) -> Option<usize> {
        let name = self.eval.rare_class.as_ref()?;
        self.dataset.class_names.iter().position(|c| c == name)
    }
}

pub(crate) fn class_ids(names: &[String], wanted: &[String]) -> Vec<usize> {
    wanted
        .iter()
        .filter_map(|w| names.iter().position(|n| n == w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../../configs/example.toml");

    #[test]
    fn example_config_parses_and_roundtrips() {
        let cfg = RunConfig::from_toml(EXAMPLE).unwrap();
        cfg.validate().unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.excluded_class_ids(), vec![5]);
        assert_eq!(cfg.rare_class_id(), Some(4));
    }

    #[test]
    fn bad_fields_are_reported() {
        let err = RunConfig::from_toml("output_dir = 'x'\nbogus = 1\n[dataset]\nroot_dir = 'd'\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let mut cfg = RunConfig::from_toml(EXAMPLE).unwrap();
        cfg.model.num_classes = 5;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "model.num_classes"));
        let mut cfg = RunConfig::from_toml(EXAMPLE).unwrap();
        cfg.dataset.patch_size = 48;
        cfg.dataset.stride = 48;
        assert!(cfg.validate().is_err());
    }
}
