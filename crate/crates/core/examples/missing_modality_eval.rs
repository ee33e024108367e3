//! Evaluates a freshly initialized model under the three modality scenarios,
//! next to a label oracle as a sanity reference.

use candle_core::{DType, Device};
use gemmnet::data::{synth_dataset, Scenario};
use gemmnet::harness::{evaluate, metrics_table, EvalReport, LabelOracle, Predictor};
use gemmnet::hyfex::ArchConfig;
use gemmnet::model::{Gemmnet, ModelConfig};

fn report(p: &dyn Predictor, tiles: &[gemmnet::data::ModalityBundle]) -> gemmnet::Result<EvalReport> {
    Ok(EvalReport {
        class_names: gemmnet::data::ISPRS_CLASSES.iter().map(|s| s.to_string()).collect(),
        excluded: vec![5],
        scenarios: evaluate(p, tiles, &Scenario::ALL, 4, 6, 255, None)?,
    })
}

fn main() -> gemmnet::Result<()> {
    let tiles = synth_dataset(11, 4, 64, 6)?;
    let model = Gemmnet::new(
        ModelConfig {
            arch: ArchConfig::tiny(),
            ..ModelConfig::default()
        },
        0,
        DType::F32,
        &Device::Cpu,
    )?;
    println!("untrained model:\n{}", metrics_table(&report(&model, &tiles)?.rows()));
    println!("label oracle:\n{}", metrics_table(&report(&LabelOracle { ignore_index: 255 }, &tiles)?.rows()));
    Ok(())
}
