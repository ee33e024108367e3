use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;

use candle_core::{DType, Device};
use rand::Rng;

use super::eval::{eval_patches, evaluate, EvalReport};
use super::report::csv_line;
use super::RunConfig;
use crate::coloss::{inverse_log_weights, LossBreakdown};
use crate::data::{
    augment, extract_patches, load_tiles, sample_modality_mask, worker_rng, ModalityBundle, ModalityMask,
    Scenario, Split, NORM_STATS_FILE,
};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, Batch, CheckpointMeta, Gemmnet, Trainer};

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub config: RunConfig,
    /// Checkpoint to continue from; the step counter resumes from it.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub steps: u64,
    pub last_breakdown: Option<LossBreakdown>,
    pub best_val_mf1: Option<f64>,
    pub last_val: Option<EvalReport>,
}

/// Holds `train.lock` for the lifetime of a run.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("train.lock");
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            Error::Harness(format!("run directory {} is locked ({e})", run_dir.display()))
        })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(Self(path))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Pixel frequency of each class over labelled pixels.
fn class_frequencies(patches: &[ModalityBundle], num_classes: usize, ignore: u32) -> Vec<f64> {
    let mut counts = vec![0u64; num_classes];
    for p in patches {
        for &l in &p.label {
            if l != ignore && (l as usize) < num_classes {
                counts[l as usize] += 1;
            }
        }
    }
    let total = counts.iter().sum::<u64>().max(1) as f64;
    counts.iter().map(|&c| c as f64 / total).collect()
}

/// Augmented patches and masks for one step, drawn from the step's own RNG stream.
fn draw_step(
    patches: &[ModalityBundle],
    seed: u64,
    step: u64,
    batch_size: usize,
) -> (Vec<ModalityBundle>, Vec<ModalityMask>) {
    let mut rng = worker_rng(seed, step);
    let mut bundles = Vec::with_capacity(batch_size);
    let mut masks = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let p = &patches[rng.gen_range(0..patches.len())];
        bundles.push(augment(p, &mut rng));
        masks.push(sample_modality_mask(&mut rng));
    }
    (bundles, masks)
}

fn read_loss_rows(path: &Path, up_to: u64) -> Result<Vec<String>> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    Ok(fs::read_to_string(path)?
        .lines()
        .skip(1)
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|s| s <= up_to)
        })
        .map(String::from)
        .collect())
}

fn open_log(path: &Path, header: &str, keep: &[String]) -> Result<File> {
    let mut f = File::create(path)?;
    writeln!(f, "{header}")?;
    for line in keep {
        writeln!(f, "{line}")?;
    }
    Ok(f)
}

/// Trains per the config, evaluating on the validation split every
/// `eval_every` steps and at the last step.
pub fn cmd_train(opts: &TrainOptions) -> Result<TrainSummary> {
    let mut cfg = opts.config.clone();
    cfg.validate()?;
    let spec = cfg.dataset.with_split(Split::Train);
    let mut patches = Vec::new();
    for tile in load_tiles(&spec)? {
        patches.extend(extract_patches(&tile, spec.patch_size, spec.stride)?);
    }
    if patches.is_empty() {
        return Err(Error::Harness("training split produced no patches".into()));
    }
    let val_spec = spec.with_split(Split::Val);
    let val = if val_spec.split_dir().is_dir() {
        eval_patches(&load_tiles(&val_spec)?, spec.patch_size)?
    } else {
        Vec::new()
    };
    if cfg.loss.class_weights.is_empty() {
        let freq = class_frequencies(&patches, spec.num_classes, spec.ignore_index);
        cfg.loss.class_weights = inverse_log_weights(&freq);
    }
    cfg.loss.validate(cfg.model.num_classes)?;

    let run_dir = cfg.output_dir.clone();
    fs::create_dir_all(&run_dir)?;
    let _lock = RunLock::acquire(&run_dir)?;
    let config_text = cfg.to_toml()?;
    fs::write(run_dir.join("config.toml"), &config_text)?;
    let norm_stats = fs::read_to_string(spec.root_dir.join(NORM_STATS_FILE)).ok();

    let (mut trainer, mut best) = match &opts.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if ck.meta.model != cfg.model {
                return Err(Error::Checkpoint {
                    path: path.clone(),
                    reason: "model config differs from the run config".into(),
                });
            }
            let best = load_checkpoint(&run_dir.join("best.ckpt"))
                .ok()
                .and_then(|b| b.meta.val_mf1);
            (ck.trainer(&Device::Cpu)?, best)
        }
        None => {
            let model = Gemmnet::new(cfg.model.clone(), cfg.seed, DType::F32, &Device::Cpu)?;
            (Trainer::new(model, cfg.loss.clone(), cfg.optim.clone())?, None)
        }
    };
    let start = trainer.step();
    let loss_path = run_dir.join("loss.csv");
    let val_path = run_dir.join("val_metrics.csv");
    let mut loss_log = open_log(&loss_path, LossBreakdown::CSV_HEADER, &read_loss_rows(&loss_path, start)?)?;
    let mut val_log = open_log(&val_path, "step,scenario,class,f1,iou", &read_loss_rows(&val_path, start)?)?;

    let meta = |val_mf1: Option<f64>| CheckpointMeta {
        model: cfg.model.clone(),
        loss: cfg.loss.clone(),
        optim: cfg.optim.clone(),
        step: 0,
        seed: cfg.seed,
        norm_stats: norm_stats.clone(),
        run_config: Some(config_text.clone()),
        val_mf1,
    };
    let excluded = cfg.excluded_class_ids();
    let mut last_breakdown = None;
    let mut last_val = None;
    let seed = cfg.seed;
    let batch_size = cfg.optim.batch_size;
    let max_steps = cfg.max_steps;

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = sync_channel::<(u64, Vec<ModalityBundle>, Vec<ModalityMask>)>(2);
        let patches = &patches;
        scope.spawn(move || {
            for step in start + 1..=max_steps {
                let (b, m) = draw_step(patches, seed, step, batch_size);
                if tx.send((step, b, m)).is_err() {
                    break;
                }
            }
        });
        for (step, bundles, masks) in rx {
            let batch = Batch::from_bundles(&bundles, &masks, DType::F32, &Device::Cpu)?;
            let bd = trainer.train_step(&batch)?;
            writeln!(loss_log, "{}", bd.csv_row(step))?;
            last_breakdown = Some(bd);
            if step % cfg.eval_every == 0 || step == max_steps {
                loss_log.flush()?;
                let mut val_mf1 = None;
                if !val.is_empty() {
                    let report = EvalReport {
                        class_names: spec.class_names.clone(),
                        excluded: excluded.clone(),
                        scenarios: evaluate(
                            trainer.model(),
                            &val,
                            &Scenario::ALL,
                            cfg.eval.batch_size,
                            spec.num_classes,
                            spec.ignore_index,
                            None,
                        )?,
                    };
                    for row in report.rows() {
                        writeln!(val_log, "{step},{}", csv_line(&row))?;
                    }
                    val_log.flush()?;
                    val_mf1 = report.mf1(Scenario::Full);
                    log::info!(
                        "step {step}: total {:.4}, val mF1 full {:.4} missing_rgir {:.4} missing_ndsm {:.4}",
                        bd.total,
                        val_mf1.unwrap_or(f64::NAN),
                        report.mf1(Scenario::MissingRgir).unwrap_or(f64::NAN),
                        report.mf1(Scenario::MissingNdsm).unwrap_or(f64::NAN)
                    );
                    last_val = Some(report);
                }
                save_checkpoint(&run_dir.join("last.ckpt"), &trainer, &meta(val_mf1))?;
                if let Some(m) = val_mf1 {
                    if best.is_none_or(|b| m > b) {
                        best = Some(m);
                        save_checkpoint(&run_dir.join("best.ckpt"), &trainer, &meta(val_mf1))?;
                    }
                }
            }
        }
        Ok(())
    })?;
    loss_log.flush()?;
    Ok(TrainSummary {
        run_dir,
        steps: trainer.step(),
        last_breakdown,
        best_val_mf1: best,
        last_val,
    })
}
