//! Computes every CoLoss term for one batch in both reconstruction modes.

use candle_core::{DType, Device};
use gemmnet::coloss::{coloss_total, inverse_log_weights, LossConfig, LossBreakdown, ReconMode, SegTarget};
use gemmnet::data::{synth_dataset, ModalityMask};
use gemmnet::hyfex::ArchConfig;
use gemmnet::model::{Batch, Gemmnet, ModelConfig};

fn main() -> gemmnet::Result<()> {
    let dev = Device::Cpu;
    let tiles = synth_dataset(3, 3, 64, 6)?;
    let masks = [ModalityMask::FULL, ModalityMask::MISSING_RGIR, ModalityMask::MISSING_NDSM];
    let batch = Batch::from_bundles(&tiles, &masks, DType::F32, &dev)?;

    println!("{}", LossBreakdown::CSV_HEADER);
    for mode in [ReconMode::Ae, ReconMode::Cgan] {
        let model = Gemmnet::new(
            ModelConfig {
                mode,
                baseline: false,
                num_classes: 6,
                arch: ArchConfig::tiny(),
            },
            0,
            DType::F32,
            &dev,
        )?;
        let cfg = LossConfig {
            mode,
            class_weights: inverse_log_weights(&[0.3, 0.25, 0.2, 0.15, 0.015, 0.085]),
            ..LossConfig::default()
        };
        let target = SegTarget::new(batch.labels.view(), &cfg, DType::F32, &dev)?;
        let out = model.forward(&batch, true)?;
        let (_, bd) = coloss_total(&out, &target, &batch.rgir, &batch.ndsm, model.discriminators(), &cfg)?;
        println!("{}  ({mode})", bd.csv_row(0));
    }
    Ok(())
}
