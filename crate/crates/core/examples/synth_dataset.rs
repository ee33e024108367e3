//! Generates a few synthetic tiles and prints the class histogram.
//!
//! cargo run --example synth_dataset -- [seed]

use gemmnet::data::{class_layout, rare_class, synth_dataset};

fn main() -> gemmnet::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let classes = class_layout(6);
    let tiles = synth_dataset(seed, 4, 256, classes.len())?;
    let mut counts = vec![0usize; classes.len()];
    for t in &tiles {
        for &l in &t.label {
            counts[l as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    for (c, n) in classes.iter().zip(&counts) {
        println!("{:<22} {:>6.2}%", c.name(), 100.0 * *n as f64 / total as f64);
    }
    println!("rare class: {}", classes[rare_class(classes.len())].name());

    // per-class mean height shows the NDSM signal
    let t = &tiles[0];
    for (i, c) in classes.iter().enumerate() {
        let hs: Vec<f32> = t
            .label
            .iter()
            .zip(t.ndsm.iter())
            .filter(|(l, _)| **l as usize == i)
            .map(|(_, h)| *h)
            .collect();
        if !hs.is_empty() {
            println!("{:<22} mean ndsm {:.3}", c.name(), hs.iter().sum::<f32>() / hs.len() as f32);
        }
    }
    Ok(())
}
