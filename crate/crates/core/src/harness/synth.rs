use std::fs;
use std::path::PathBuf;

use crate::data::{class_layout, synth_dataset, write_dataset, NormStats, Split, NORM_STATS_FILE};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub tile_size: usize,
    pub num_classes: usize,
    pub force: bool,
}

impl SynthOptions {
    pub fn new(seed: u64, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed,
            out_dir: out_dir.into(),
            n_train: 8,
            n_val: 2,
            n_test: 2,
            tile_size: 256,
            num_classes: 6,
            force: false,
        }
    }

    pub fn n_tiles(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }
}

/// Writes a synthetic dataset: `train/`, `val/`, `test/`, unit
/// `norm_stats.txt` (rasters are already in `[0, 1]`) and `classes.txt`.
///
/// Tiles are numbered across splits, so no scene appears in two splits.
pub fn cmd_synth(opts: &SynthOptions) -> Result<()> {
    if opts.out_dir.exists() {
        let non_empty = fs::read_dir(&opts.out_dir)?.next().is_some();
        if non_empty && !opts.force {
            return Err(Error::Harness(format!(
                "{} exists and is not empty (use --force to overwrite)",
                opts.out_dir.display()
            )));
        }
        if non_empty {
            for split in Split::ALL {
                let dir = opts.out_dir.join(split.name());
                if dir.exists() {
                    fs::remove_dir_all(dir)?;
                }
            }
        }
    }
    if opts.n_train == 0 {
        return Err(Error::Harness("need at least one training tile".into()));
    }
    let tiles = synth_dataset(opts.seed, opts.n_tiles(), opts.tile_size, opts.num_classes)?;
    let (train, rest) = tiles.split_at(opts.n_train);
    let (val, test) = rest.split_at(opts.n_val);
    fs::create_dir_all(&opts.out_dir)?;
    for (split, part) in [(Split::Train, train), (Split::Val, val), (Split::Test, test)] {
        write_dataset(&opts.out_dir, split, part)?;
    }
    // stored values already span [0, 1] after decoding, so normalization is the identity
    let mut stats = NormStats::unit();
    stats.ndsm_max = 65535.0;
    stats.rgir_max = [255.0; 3];
    fs::write(opts.out_dir.join(NORM_STATS_FILE), stats.to_text())?;
    let names: Vec<&str> = class_layout(opts.num_classes).iter().map(|c| c.name()).collect();
    fs::write(opts.out_dir.join("classes.txt"), names.join("\n") + "\n")?;
    log::info!("wrote {} tiles to {}", opts.n_tiles(), opts.out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_tiles, read_manifest, DatasetSpec};

    fn opts(dir: &std::path::Path) -> SynthOptions {
        SynthOptions {
            n_train: 3,
            n_val: 1,
            n_test: 1,
            tile_size: 64,
            ..SynthOptions::new(5, dir)
        }
    }

    #[test]
    fn writes_loadable_splits_and_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        let o = opts(&root);
        cmd_synth(&o).unwrap();
        assert_eq!(read_manifest(&root.join("train")).unwrap().len(), 3);
        let spec = DatasetSpec::new(&root, Split::Train);
        let loaded = load_tiles(&spec).unwrap();
        let direct = synth_dataset(5, 3, 64, 6).unwrap();
        for (a, b) in loaded.iter().zip(&direct) {
            assert_eq!(a.label, b.label);
            let err = (&a.rgir - &b.rgir).mapv(f32::abs).fold(0.0f32, |m, v| m.max(*v));
            assert!(err <= 0.5 / 255.0 + 1e-6);
        }
        let val = load_tiles(&spec.with_split(Split::Val)).unwrap();
        assert_eq!(val[0].sample_id, "tile_003");

        assert!(cmd_synth(&o).is_err());
        cmd_synth(&SynthOptions { force: true, ..o }).unwrap();
    }
}
