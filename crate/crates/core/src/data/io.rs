//! On-disk dataset layout.
//!
//! ```text
//! <root>/norm_stats.txt            per-channel min/max of the train split (key = value)
//! <root>/<split>/manifest.txt      one tile id per line
//! <root>/<split>/<tile_id>/rgir.png   3-channel, 8 or 16 bit (TIFF also accepted)
//! <root>/<split>/<tile_id>/ndsm.png   1-channel, 8 or 16 bit
//! <root>/<split>/<tile_id>/label.png  1-channel integer class ids
//! ```
//!
//! Raw raster values are min-max normalized per channel to `[0, 1]` with the
//! persisted train statistics and clamped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use ndarray::{Array2, Array3};

use super::{DatasetSpec, ModalityBundle, Split};
use crate::error::{Error, Result};

pub const NORM_STATS_FILE: &str = "norm_stats.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
const RASTER_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

/// Per-channel min/max used for normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub rgir_min: [f32; 3],
    pub rgir_max: [f32; 3],
    pub ndsm_min: f32,
    pub ndsm_max: f32,
}

impl NormStats {
    /// Identity-ish stats for rasters already stored in `[0, 1]`.
    pub fn unit() -> Self {
        Self {
            rgir_min: [0.0; 3],
            rgir_max: [1.0; 3],
            ndsm_min: 0.0,
            ndsm_max: 1.0,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in 0..3 {
            out.push_str(&format!("rgir.{c}.min = {}\n", self.rgir_min[c]));
            out.push_str(&format!("rgir.{c}.max = {}\n", self.rgir_max[c]));
        }
        out.push_str(&format!("ndsm.0.min = {}\n", self.ndsm_min));
        out.push_str(&format!("ndsm.0.max = {}\n", self.ndsm_max));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("bad norm stats line '{line}'")))?;
            let v: f32 = v
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("bad norm stats value in '{line}'")))?;
            map.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::Validation(format!("norm stats missing key '{k}'")))
        };
        Ok(Self {
            rgir_min: [get("rgir.0.min")?, get("rgir.1.min")?, get("rgir.2.min")?],
            rgir_max: [get("rgir.0.max")?, get("rgir.1.max")?, get("rgir.2.max")?],
            ndsm_min: get("ndsm.0.min")?,
            ndsm_max: get("ndsm.0.max")?,
        })
    }
}

fn normalize(v: f32, min: f32, max: f32) -> f32 {
    if max > min {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn find_raster(dir: &Path, stem: &str) -> Option<PathBuf> {
    RASTER_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Raw, unscaled channel values of a decoded raster.
fn raw_channels(img: &DynamicImage) -> (usize, usize, Vec<Vec<f32>>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    macro_rules! collect {
        ($buf:expr, $n:expr) => {{
            let mut chans = vec![Vec::with_capacity(w * h); $n];
            for p in $buf.pixels() {
                for (c, ch) in chans.iter_mut().enumerate() {
                    ch.push(p.0[c] as f32);
                }
            }
            chans
        }};
    }
    let chans = match img {
        DynamicImage::ImageLuma8(b) => collect!(b, 1),
        DynamicImage::ImageLuma16(b) => collect!(b, 1),
        DynamicImage::ImageLumaA8(b) => collect!(b, 1),
        DynamicImage::ImageLumaA16(b) => collect!(b, 1),
        DynamicImage::ImageRgb8(b) => collect!(b, 3),
        DynamicImage::ImageRgba8(b) => collect!(b, 3),
        DynamicImage::ImageRgb16(b) => collect!(b, 3),
        DynamicImage::ImageRgba16(b) => collect!(b, 3),
        DynamicImage::ImageRgb32F(b) => collect!(b, 3),
        DynamicImage::ImageRgba32F(b) => collect!(b, 3),
        other => {
            let b = other.to_rgb32f();
            collect!(b, 3)
        }
    };
    (h, w, chans)
}

struct RawTile {
    id: String,
    rgir: (usize, usize, Vec<Vec<f32>>),
    ndsm: (usize, usize, Vec<Vec<f32>>),
    label: (usize, usize, Vec<Vec<f32>>),
}

fn read_raster(dir: &Path, tile: &str, stem: &str, channels: usize) -> Result<(usize, usize, Vec<Vec<f32>>)> {
    let load_err = |reason: String| Error::Load {
        tile: tile.to_string(),
        modality: stem.to_string(),
        reason,
    };
    let path = find_raster(dir, stem).ok_or_else(|| {
        load_err(format!(
            "no {stem}.{{{}}} in {}",
            RASTER_EXTENSIONS.join(","),
            dir.display()
        ))
    })?;
    let img = image::open(&path).map_err(|e| load_err(e.to_string()))?;
    let (h, w, chans) = raw_channels(&img);
    if chans.len() < channels {
        return Err(load_err(format!(
            "expected {channels} channels, found {}",
            chans.len()
        )));
    }
    Ok((h, w, chans.into_iter().take(channels).collect()))
}

fn read_raw_tile(split_dir: &Path, id: &str) -> Result<RawTile> {
    let dir = split_dir.join(id);
    let tile = RawTile {
        id: id.to_string(),
        rgir: read_raster(&dir, id, "rgir", 3)?,
        ndsm: read_raster(&dir, id, "ndsm", 1)?,
        label: read_raster(&dir, id, "label", 1)?,
    };
    let dims = [
        ("rgir", tile.rgir.0, tile.rgir.1),
        ("ndsm", tile.ndsm.0, tile.ndsm.1),
        ("label", tile.label.0, tile.label.1),
    ];
    if dims.iter().any(|d| (d.1, d.2) != (dims[0].1, dims[0].2)) {
        let desc: Vec<_> = dims.iter().map(|(n, h, w)| format!("{n} {h}x{w}")).collect();
        return Err(Error::Validation(format!(
            "tile '{id}': modality shapes differ ({})",
            desc.join(", ")
        )));
    }
    Ok(tile)
}

/// Tile ids of a split: the manifest when present, otherwise every subdirectory. Always sorted.
pub fn read_manifest(split_dir: &Path) -> Result<Vec<String>> {
    let manifest = split_dir.join(MANIFEST_FILE);
    let mut ids: Vec<String> = if manifest.is_file() {
        fs::read_to_string(&manifest)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    } else {
        let mut ids = Vec::new();
        for entry in fs::read_dir(split_dir)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids
    };
    ids.sort();
    ids.dedup();
    Ok(ids)
}

pub fn write_manifest(split_dir: &Path, ids: &[String]) -> Result<()> {
    let mut text = ids.join("\n");
    text.push('\n');
    fs::write(split_dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

fn stats_of(tiles: &[RawTile]) -> NormStats {
    let mut s = NormStats {
        rgir_min: [f32::INFINITY; 3],
        rgir_max: [f32::NEG_INFINITY; 3],
        ndsm_min: f32::INFINITY,
        ndsm_max: f32::NEG_INFINITY,
    };
    for t in tiles {
        for c in 0..3 {
            for &v in &t.rgir.2[c] {
                s.rgir_min[c] = s.rgir_min[c].min(v);
                s.rgir_max[c] = s.rgir_max[c].max(v);
            }
        }
        for &v in &t.ndsm.2[0] {
            s.ndsm_min = s.ndsm_min.min(v);
            s.ndsm_max = s.ndsm_max.max(v);
        }
    }
    s
}

fn read_split(spec: &DatasetSpec) -> Result<Vec<RawTile>> {
    let split_dir = spec.split_dir();
    read_manifest(&split_dir)?
        .iter()
        .map(|id| read_raw_tile(&split_dir, id))
        .collect()
}

/// Per-channel min/max over the train split of `spec.root_dir`.
pub fn compute_norm_stats(spec: &DatasetSpec) -> Result<NormStats> {
    let tiles = read_split(&spec.with_split(Split::Train))?;
    if tiles.is_empty() {
        return Err(Error::Validation(format!(
            "train split of {} is empty",
            spec.root_dir.display()
        )));
    }
    Ok(stats_of(&tiles))
}

/// Loads every tile of `spec.split`, normalizing with the persisted train statistics
/// (or, when none are persisted, statistics computed from the train split).
pub fn load_tiles(spec: &DatasetSpec) -> Result<Vec<ModalityBundle>> {
    let stats_path = spec.root_dir.join(NORM_STATS_FILE);
    let stats = if stats_path.is_file() {
        NormStats::parse(&fs::read_to_string(&stats_path)?)?
    } else {
        compute_norm_stats(spec)?
    };
    load_tiles_with_stats(spec, &stats)
}

pub fn load_tiles_with_stats(spec: &DatasetSpec, stats: &NormStats) -> Result<Vec<ModalityBundle>> {
    spec.validate()?;
    read_split(spec)?
        .into_iter()
        .map(|t| {
            let (h, w) = (t.rgir.0, t.rgir.1);
            let rgir = Array3::from_shape_fn((3, h, w), |(c, i, j)| {
                normalize(t.rgir.2[c][i * w + j], stats.rgir_min[c], stats.rgir_max[c])
            });
            let ndsm = Array3::from_shape_fn((1, h, w), |(_, i, j)| {
                normalize(t.ndsm.2[0][i * w + j], stats.ndsm_min, stats.ndsm_max)
            });
            let label = Array2::from_shape_fn((h, w), |(i, j)| {
                let v = t.label.2[0][i * w + j] as u32;
                if (v as usize) >= spec.num_classes || spec.ignore_classes.contains(&v) {
                    spec.ignore_index
                } else {
                    v
                }
            });
            ModalityBundle::new(rgir, ndsm, label, t.id)
        })
        .collect()
}

fn quantize(v: f32, max: f32) -> f32 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes tiles (values in `[0, 1]`) into `<root>/<split>/` with a manifest.
/// RGIR is stored as 8-bit RGB, NDSM as 16-bit grey, labels as 8-bit grey.
pub fn write_dataset(root: &Path, split: Split, tiles: &[ModalityBundle]) -> Result<()> {
    let split_dir = root.join(split.name());
    fs::create_dir_all(&split_dir)?;
    let mut ids = Vec::with_capacity(tiles.len());
    for t in tiles {
        let dir = split_dir.join(&t.sample_id);
        fs::create_dir_all(&dir)?;
        let (h, w) = (t.height() as u32, t.width() as u32);
        let rgir = ImageBuffer::from_fn(w, h, |x, y| {
            let (i, j) = (y as usize, x as usize);
            Rgb([0, 1, 2].map(|c| quantize(t.rgir[[c, i, j]], 255.0) as u8))
        });
        let ndsm = ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantize(t.ndsm[[0, y as usize, x as usize]], 65535.0) as u16])
        });
        let label = ImageBuffer::from_fn(w, h, |x, y| {
            Luma([t.label[[y as usize, x as usize]].min(255) as u8])
        });
        DynamicImage::ImageRgb8(rgir).save(dir.join("rgir.png"))?;
        DynamicImage::ImageLuma16(ndsm).save(dir.join("ndsm.png"))?;
        DynamicImage::ImageLuma8(label).save(dir.join("label.png"))?;
        ids.push(t.sample_id.clone());
    }
    ids.sort();
    write_manifest(&split_dir, &ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    fn spec(root: &Path) -> DatasetSpec {
        DatasetSpec {
            patch_size: 64,
            stride: 64,
            ..DatasetSpec::new(root, Split::Train)
        }
    }

    #[test]
    fn norm_stats_text_roundtrip() {
        let s = NormStats {
            rgir_min: [1.0, 2.5, 0.0],
            rgir_max: [200.0, 255.0, 254.0],
            ndsm_min: -3.25,
            ndsm_max: 40.0,
        };
        assert_eq!(NormStats::parse(&s.to_text()).unwrap(), s);
        assert!(NormStats::parse("rgir.0.min = 1").is_err());
    }

    #[test]
    fn load_sorted_and_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let mut tiles = synth_dataset(4, 2, 64, 6).unwrap();
        tiles.reverse();
        write_dataset(dir.path(), Split::Train, &tiles).unwrap();
        let loaded = load_tiles(&spec(dir.path())).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].sample_id, "tile_000");
        assert_eq!(loaded[1].sample_id, "tile_001");
        assert_eq!(loaded[0].label, tiles[1].label);
    }

    #[test]
    fn known_fixture_normalizes_to_unit_max() {
        let dir = tempfile::tempdir().unwrap();
        // 64x64 fixture with raw 8-bit values 10..=200 in every rgir channel
        let rgir = Array3::from_shape_fn((3, 64, 64), |(c, i, j)| {
            (10.0 + ((i * 64 + j + c * 7) % 191) as f32) / 255.0
        });
        let raw_max: f32 = rgir.iter().fold(0.0f32, |m, v| m.max(*v));
        let raw_min: f32 = rgir.iter().fold(1.0f32, |m, v| m.min(*v));
        assert!((raw_max * 255.0 - 200.0).abs() < 1e-3 && (raw_min * 255.0 - 10.0).abs() < 1e-3);
        let tile = ModalityBundle::new(
            rgir,
            Array3::from_shape_fn((1, 64, 64), |(_, i, _)| i as f32 / 63.0),
            Array2::from_shape_fn((64, 64), |(i, _)| (i % 6) as u32),
            "fixture",
        )
        .unwrap();
        write_dataset(dir.path(), Split::Train, &[tile]).unwrap();
        let loaded = load_tiles(&spec(dir.path())).unwrap();
        let max = loaded[0].rgir.iter().fold(f32::MIN, |m, v| m.max(*v));
        let min = loaded[0].rgir.iter().fold(f32::MAX, |m, v| m.min(*v));
        assert_eq!(max, 1.0);
        assert_eq!(min, 0.0);
        let stats = compute_norm_stats(&spec(dir.path())).unwrap();
        assert_eq!(stats.rgir_max, [200.0; 3]);
        assert_eq!(stats.rgir_min, [10.0; 3]);
    }

    #[test]
    fn missing_file_names_tile_and_modality() {
        let dir = tempfile::tempdir().unwrap();
        let tiles = synth_dataset(1, 1, 64, 6).unwrap();
        write_dataset(dir.path(), Split::Train, &tiles).unwrap();
        fs::remove_file(dir.path().join("train/tile_000/ndsm.png")).unwrap();
        let err = load_tiles_with_stats(&spec(dir.path()), &NormStats::unit()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("tile_000") && msg.contains("ndsm"), "{msg}");
    }

    #[test]
    fn shape_mismatch_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let tiles = synth_dataset(1, 1, 64, 6).unwrap();
        write_dataset(dir.path(), Split::Train, &tiles).unwrap();
        let small: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(32, 32);
        DynamicImage::ImageLuma16(small)
            .save(dir.path().join("train/tile_000/ndsm.png"))
            .unwrap();
        let err = load_tiles_with_stats(&spec(dir.path()), &NormStats::unit()).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("tile_000")), "{err}");
    }

    #[test]
    fn loading_is_pure() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), Split::Train, &synth_dataset(2, 2, 64, 6).unwrap()).unwrap();
        let a = load_tiles(&spec(dir.path())).unwrap();
        let b = load_tiles(&spec(dir.path())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ignore_classes_are_remapped() {
        let dir = tempfile::tempdir().unwrap();
        let tiles = synth_dataset(2, 1, 64, 6).unwrap();
        write_dataset(dir.path(), Split::Train, &tiles).unwrap();
        let mut s = spec(dir.path());
        s.ignore_classes = vec![0];
        let loaded = load_tiles(&s).unwrap();
        assert!(loaded[0].label.iter().all(|&v| v != 0));
        assert!(loaded[0].label.iter().any(|&v| v == 255));
    }
}
