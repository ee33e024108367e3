//! A few optimizer steps, a checkpoint round trip, and a bit-identical
//! continuation from the restored trainer.

use candle_core::{DType, Device};
use gemmnet::coloss::LossConfig;
use gemmnet::data::{sample_modality_mask, synth_dataset, worker_rng};
use gemmnet::hyfex::ArchConfig;
use gemmnet::model::{load_checkpoint, save_checkpoint, Batch, CheckpointMeta, Gemmnet, ModelConfig, OptimConfig, Trainer};

fn main() -> gemmnet::Result<()> {
    let dev = Device::Cpu;
    let tiles = synth_dataset(0, 4, 64, 6)?;
    let model_cfg = ModelConfig {
        arch: ArchConfig::tiny(),
        ..ModelConfig::default()
    };
    let loss = LossConfig::uniform(6);
    let optim = OptimConfig::default();
    let mut trainer = Trainer::new(Gemmnet::new(model_cfg.clone(), 0, DType::F32, &dev)?, loss.clone(), optim.clone())?;

    let batch_for = |step: u64| -> gemmnet::Result<Batch> {
        let mut rng = worker_rng(0, step);
        let masks: Vec<_> = tiles.iter().map(|_| sample_modality_mask(&mut rng)).collect();
        Batch::from_bundles(&tiles, &masks, DType::F32, &dev)
    };
    for step in 1..=5 {
        let bd = trainer.train_step(&batch_for(step)?)?;
        println!("step {step}: total {:.4}", bd.total);
    }

    let path = std::env::temp_dir().join("gemmnet_example.ckpt");
    let meta = CheckpointMeta {
        model: model_cfg,
        loss,
        optim,
        step: trainer.step(),
        seed: 0,
        norm_stats: None,
        run_config: None,
        val_mf1: None,
    };
    save_checkpoint(&path, &trainer, &meta)?;
    let mut restored = load_checkpoint(&path)?.trainer(&dev)?;
    let next = batch_for(6)?;
    let a = trainer.train_step(&next)?;
    let b = restored.train_step(&next)?;
    println!("step 6 original {:.6}, restored {:.6}", a.total, b.total);
    std::fs::remove_file(&path)?;
    Ok(())
}
