//! Runs the hybrid conv/transformer encoder and a missing-modality generator
//! on one patch and prints the pyramid shapes.

use candle_core::{DType, Device};
use gemmnet::coloss::ReconMode;
use gemmnet::data::{synth_dataset, ModalityMask, Modality};
use gemmnet::hyfex::ArchConfig;
use gemmnet::model::{Batch, Gemmnet, ModelConfig};

fn main() -> gemmnet::Result<()> {
    let cfg = ModelConfig {
        mode: ReconMode::Ae,
        baseline: false,
        num_classes: 6,
        arch: ArchConfig::tiny(),
    };
    let model = Gemmnet::new(cfg, 0, DType::F32, &Device::Cpu)?;
    let tiles = synth_dataset(0, 1, 64, 6)?;
    let batch = Batch::from_bundles(&tiles, &[ModalityMask::FULL], DType::F32, &Device::Cpu)?;

    for m in Modality::ALL {
        let pyramid = model.encoder(m).encode(batch.image(m), m)?;
        let shapes: Vec<_> = pyramid.levels.iter().map(|l| l.dims().to_vec()).collect();
        println!("{:<5} {:?}", m.name(), shapes);
    }

    let ndsm = model.generator(Modality::Ndsm).generate(&batch.rgir)?;
    let (lo, hi) = (ndsm.min_all()?.to_scalar::<f32>()?, ndsm.max_all()?.to_scalar::<f32>()?);
    println!("synthesized ndsm {:?}, range [{lo:.3}, {hi:.3}]", ndsm.dims());
    println!("{} parameters", model.params().num_elements());
    Ok(())
}
