//! Writes a dataset to disk, reloads it, cuts patches, augments them and
//! draws modality masks the way the trainer does.

use gemmnet::data::{
    augment, extract_patches, load_tiles, sample_modality_mask, synth_dataset, window_starts, worker_rng,
    write_dataset, DatasetSpec, Split,
};

fn main() -> gemmnet::Result<()> {
    let dir = std::env::temp_dir().join("gemmnet_patch_pipeline");
    let _ = std::fs::remove_dir_all(&dir);
    write_dataset(&dir, Split::Train, &synth_dataset(1, 2, 200, 6)?)?;

    let spec = DatasetSpec {
        patch_size: 64,
        stride: 64,
        ..DatasetSpec::new(&dir, Split::Train)
    };
    let tiles = load_tiles(&spec)?;
    println!("loaded {} tiles of {}x{}", tiles.len(), tiles[0].height(), tiles[0].width());
    // 200 is not a multiple of 64: the last window shifts back to cover the edge
    println!("window starts: {:?}", window_starts(200, 64, 64));

    let patches = extract_patches(&tiles[0], spec.patch_size, spec.stride)?;
    println!("{} patches, first id {}", patches.len(), patches[0].sample_id);

    let mut rng = worker_rng(0, 1);
    for p in patches.iter().take(4) {
        let a = augment(p, &mut rng);
        let mask = sample_modality_mask(&mut rng);
        println!("{:<16} mask {:?} changed {}", a.sample_id, mask.scenario(), a != *p);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
