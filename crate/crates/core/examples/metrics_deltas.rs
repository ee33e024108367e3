//! Confusion-matrix metrics and the relative / percentage-point delta
//! arithmetic used in comparison reports.

use gemmnet::metrics::{abs_delta_pp, format_pp, format_relative, relative_delta, ConfusionMatrix};
use ndarray::array;

fn main() -> gemmnet::Result<()> {
    let label = array![[0u32, 0, 1, 1], [2, 2, 255, 1]];
    let pred = array![[0u32, 1, 1, 1], [2, 0, 2, 1]];
    let mut cm = ConfusionMatrix::new(3, 255);
    cm.update(pred.view(), label.view())?;
    for (c, s) in cm.per_class().iter().enumerate() {
        if let Some(s) = s {
            println!("class {c}: F1 {:.4} IoU {:.4}", s.f1, s.iou);
        }
    }
    println!("mF1 {:.4} mIoU {:.4} OA {:.4}", cm.mf1()?, cm.miou()?, cm.pixel_accuracy()?);

    for (base, new) in [(54.67, 61.07), (55.15, 64.25), (76.59, 78.27)] {
        let rel = relative_delta(base, new)?;
        println!("{base} -> {new}: {} ({})", format_relative(rel), format_pp(abs_delta_pp(base, new)));
    }
    Ok(())
}
