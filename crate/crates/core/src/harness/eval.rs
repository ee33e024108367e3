use std::fs;
use std::path::{Path, PathBuf};

use candle_core::Device;
use image::{DynamicImage, ImageBuffer, Luma};
use ndarray::Array2;

use super::report::{compare_reports, format_comparison, metrics_table, write_metrics_csv, ComparisonRow, MetricRow, MEAN_ROW};
use super::{class_ids, RunConfig};
use crate::data::{extract_patches, load_tiles, load_tiles_with_stats, DatasetSpec, ModalityBundle, Scenario, Split};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::model::{load_checkpoint, Checkpoint, Gemmnet};

/// Anything that maps bundles to class-id maps under a declared scenario.
pub trait Predictor {
    fn predict(&self, bundles: &[ModalityBundle], scenario: Scenario) -> Result<Vec<Array2<u32>>>;
}

impl Predictor for Gemmnet {
    fn predict(&self, bundles: &[ModalityBundle], scenario: Scenario) -> Result<Vec<Array2<u32>>> {
        Gemmnet::predict(self, bundles, scenario)
    }
}

/// Predicts the labels themselves (ignored pixels become class 0).
pub struct LabelOracle {
    pub ignore_index: u32,
}

impl Predictor for LabelOracle {
    fn predict(&self, bundles: &[ModalityBundle], _: Scenario) -> Result<Vec<Array2<u32>>> {
        Ok(bundles
            .iter()
            .map(|b| b.label.mapv(|l| if l == self.ignore_index { 0 } else { l }))
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioMetrics {
    pub scenario: Scenario,
    pub cm: ConfusionMatrix,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    /// Class ids left out of the means.
    pub excluded: Vec<usize>,
    pub scenarios: Vec<ScenarioMetrics>,
}

impl EvalReport {
    fn get(&self, scenario: Scenario) -> Option<&ScenarioMetrics> {
        self.scenarios.iter().find(|s| s.scenario == scenario)
    }

    pub fn mf1(&self, scenario: Scenario) -> Option<f64> {
        self.get(scenario)?.cm.summary(&self.excluded).ok().map(|s| s.mf1)
    }

    pub fn miou(&self, scenario: Scenario) -> Option<f64> {
        self.get(scenario)?.cm.summary(&self.excluded).ok().map(|s| s.miou)
    }

    pub fn class_f1(&self, scenario: Scenario, class: usize) -> Option<f64> {
        self.get(scenario)?.cm.f1_per_class().get(class).copied().flatten()
    }

    /// Rows for `metrics.csv`: every class, then the `mean` row.
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for s in &self.scenarios {
            let name = s.scenario.name().to_string();
            for (c, score) in s.cm.per_class().into_iter().enumerate() {
                rows.push(MetricRow {
                    scenario: name.clone(),
                    class: self.class_names.get(c).cloned().unwrap_or_else(|| format!("class_{c}")),
                    f1: score.map(|s| s.f1),
                    iou: score.map(|s| s.iou),
                });
            }
            let summary = s.cm.summary(&self.excluded).ok();
            rows.push(MetricRow {
                scenario: name,
                class: MEAN_ROW.into(),
                f1: summary.map(|s| s.mf1),
                iou: summary.map(|s| s.miou),
            });
        }
        rows
    }
}

fn write_prediction(dir: &Path, id: &str, pred: &Array2<u32>) -> Result<()> {
    let (h, w) = pred.dim();
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([pred[[y as usize, x as usize]].min(255) as u8]));
    DynamicImage::ImageLuma8(img).save(dir.join(format!("{id}.png")))?;
    Ok(())
}

/// Accumulates one confusion matrix per scenario. With `dump_dir`, every
/// prediction is also written as `<dump_dir>/<scenario>/<sample_id>.png`.
pub fn evaluate(
    predictor: &dyn Predictor,
    patches: &[ModalityBundle],
    scenarios: &[Scenario],
    batch_size: usize,
    num_classes: usize,
    ignore_index: u32,
    dump_dir: Option<&Path>,
) -> Result<Vec<ScenarioMetrics>> {
    if patches.is_empty() {
        return Err(Error::Harness("nothing to evaluate".into()));
    }
    let mut out = Vec::with_capacity(scenarios.len());
    for &scenario in scenarios {
        let dir = dump_dir.map(|d| d.join(scenario.name()));
        if let Some(dir) = &dir {
            fs::create_dir_all(dir)?;
        }
        let mut cm = ConfusionMatrix::new(num_classes, ignore_index);
        for chunk in patches.chunks(batch_size.max(1)) {
            let preds = predictor.predict(chunk, scenario)?;
            for (bundle, pred) in chunk.iter().zip(&preds) {
                cm.update(pred.view(), bundle.label.view())?;
                if let Some(dir) = &dir {
                    write_prediction(dir, &bundle.sample_id, pred)?;
                }
            }
        }
        out.push(ScenarioMetrics { scenario, cm });
    }
    Ok(out)
}

/// Cuts tiles into non-overlapping evaluation patches.
pub(crate) fn eval_patches(tiles: &[ModalityBundle], patch_size: usize) -> Result<Vec<ModalityBundle>> {
    let mut out = Vec::new();
    for t in tiles {
        out.extend(extract_patches(t, patch_size, patch_size)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub checkpoint: PathBuf,
    /// Run config for the dataset; defaults to the one stored in the checkpoint.
    pub config: Option<PathBuf>,
    pub split: Split,
    pub scenarios: Vec<Scenario>,
    pub out_dir: PathBuf,
    /// Second checkpoint treated as the comparison base.
    pub compare: Option<PathBuf>,
    pub dump_predictions: bool,
}

impl EvalOptions {
    pub fn new(checkpoint: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            checkpoint: checkpoint.into(),
            config: None,
            split: Split::Test,
            scenarios: Scenario::ALL.to_vec(),
            out_dir: out_dir.into(),
            compare: None,
            dump_predictions: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub table: String,
    pub comparison: Option<Vec<ComparisonRow>>,
}

fn run_config_for(ck: &Checkpoint, explicit: Option<&Path>) -> Result<RunConfig> {
    match explicit {
        Some(p) => RunConfig::load(p),
        None => {
            let text = ck.meta.run_config.as_deref().ok_or_else(|| {
                Error::Harness(format!("{} stores no run config; pass --config", ck.path.display()))
            })?;
            RunConfig::from_toml(text)
        }
    }
}

fn load_split(ck: &Checkpoint, spec: &DatasetSpec) -> Result<Vec<ModalityBundle>> {
    match ck.meta.norm_stats()? {
        Some(stats) => load_tiles_with_stats(spec, &stats),
        None => load_tiles(spec),
    }
}

fn evaluate_checkpoint(path: &Path, opts: &EvalOptions, dump: Option<&Path>) -> Result<EvalReport> {
    let ck = load_checkpoint(path)?;
    let cfg = run_config_for(&ck, opts.config.as_deref())?;
    let spec = cfg.dataset.with_split(opts.split);
    ck.check_num_classes(spec.num_classes)?;
    let tiles = load_split(&ck, &spec)?;
    let patches = eval_patches(&tiles, spec.patch_size)?;
    let model = ck.model(&Device::Cpu)?;
    let scenarios = evaluate(
        &model,
        &patches,
        &opts.scenarios,
        cfg.eval.batch_size,
        spec.num_classes,
        spec.ignore_index,
        dump,
    )?;
    Ok(EvalReport {
        class_names: spec.class_names.clone(),
        excluded: class_ids(&spec.class_names, &cfg.eval.excluded_classes),
        scenarios,
    })
}

/// Evaluates a checkpoint on every requested scenario and writes
/// `metrics.csv`, `metrics.txt` and, with a comparison base, `comparison.txt`.
pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalOutcome> {
    if opts.scenarios.is_empty() {
        return Err(Error::Harness("no scenario requested".into()));
    }
    fs::create_dir_all(&opts.out_dir)?;
    let dump = opts.dump_predictions.then(|| opts.out_dir.join("predictions"));
    let report = evaluate_checkpoint(&opts.checkpoint, opts, dump.as_deref())?;
    let rows = report.rows();
    write_metrics_csv(&opts.out_dir.join("metrics.csv"), &rows)?;
    let mut table = metrics_table(&rows);
    let comparison = match &opts.compare {
        Some(base) => {
            let base_rows = evaluate_checkpoint(base, opts, None)?.rows();
            let cmp = compare_reports(&base_rows, &rows);
            let text = format_comparison(&cmp);
            fs::write(opts.out_dir.join("comparison.txt"), &text)?;
            table.push('\n');
            table.push_str(&text);
            Some(cmp)
        }
        None => None,
    };
    fs::write(opts.out_dir.join("metrics.txt"), &table)?;
    Ok(EvalOutcome {
        report,
        table,
        comparison,
    })
}
