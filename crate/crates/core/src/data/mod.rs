//! Co-registered RGIR/NDSM samples, patching, augmentation and modality masks.
//!
//! Rasters are held as `ndarray` arrays in channel-first layout: images are
//! `[channels, height, width]` and labels are `[height, width]`.

pub mod augment;
pub mod io;
pub mod patches;
pub mod synth;

use std::fmt;
use std::path::PathBuf;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{augment, Transform};
pub use io::{
    compute_norm_stats, load_tiles, load_tiles_with_stats, read_manifest, write_dataset,
    write_manifest, NormStats, NORM_STATS_FILE,
};
pub use patches::{extract_patches, window_starts};
pub use synth::{class_layout, rare_class, synth_dataset, SyntheticClass};

/// Label sentinel excluding a pixel from losses and metrics.
pub const DEFAULT_IGNORE_INDEX: u32 = 255;

/// Standard ISPRS label set.
pub const ISPRS_CLASSES: [&str; 6] = [
    "impervious_surfaces",
    "building",
    "low_vegetation",
    "tree",
    "car",
    "clutter",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgir,
    Ndsm,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Rgir, Modality::Ndsm];

    pub fn channels(self) -> usize {
        match self {
            Modality::Rgir => 3,
            Modality::Ndsm => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgir => "rgir",
            Modality::Ndsm => "ndsm",
        }
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::Rgir => Modality::Ndsm,
            Modality::Ndsm => Modality::Rgir,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Modality::Rgir => 0,
            Modality::Ndsm => 1,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One co-registered sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBundle {
    /// `[3, H, W]`, values in `[0, 1]`.
    pub rgir: Array3<f32>,
    /// `[1, H, W]`, values in `[0, 1]`.
    pub ndsm: Array3<f32>,
    /// `[H, W]` class ids or the ignore sentinel.
    pub label: Array2<u32>,
    pub sample_id: String,
}

impl ModalityBundle {
    /// Builds a bundle, checking channel counts, shared spatial dims and finiteness.
    pub fn new(
        rgir: Array3<f32>,
        ndsm: Array3<f32>,
        label: Array2<u32>,
        sample_id: impl Into<String>,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        if rgir.dim().0 != 3 || ndsm.dim().0 != 1 {
            return Err(Error::Validation(format!(
                "sample '{sample_id}': expected 3 rgir channels and 1 ndsm channel, got {} and {}",
                rgir.dim().0,
                ndsm.dim().0
            )));
        }
        let (_, h, w) = rgir.dim();
        let (_, nh, nw) = ndsm.dim();
        let (lh, lw) = label.dim();
        if (nh, nw) != (h, w) || (lh, lw) != (h, w) {
            return Err(Error::Validation(format!(
                "sample '{sample_id}': modality shapes differ (rgir {h}x{w}, ndsm {nh}x{nw}, label {lh}x{lw})"
            )));
        }
        if rgir.iter().chain(ndsm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "sample '{sample_id}': non-finite raster value"
            )));
        }
        Ok(Self {
            rgir,
            ndsm,
            label,
            sample_id,
        })
    }

    pub fn height(&self) -> usize {
        self.label.dim().0
    }

    pub fn width(&self) -> usize {
        self.label.dim().1
    }

    pub fn image(&self, modality: Modality) -> &Array3<f32> {
        match modality {
            Modality::Rgir => &self.rgir,
            Modality::Ndsm => &self.ndsm,
        }
    }

    pub fn image_mut(&mut self, modality: Modality) -> &mut Array3<f32> {
        match modality {
            Modality::Rgir => &mut self.rgir,
            Modality::Ndsm => &mut self.ndsm,
        }
    }

    /// Checks that every label is a class id below `num_classes` or exactly `ignore_index`.
    pub fn validate_labels(&self, num_classes: usize, ignore_index: u32) -> Result<()> {
        if let Some(bad) = self
            .label
            .iter()
            .find(|&&v| (v as usize) >= num_classes && v != ignore_index)
        {
            return Err(Error::Validation(format!(
                "sample '{}': label value {bad} is neither a class id < {num_classes} nor the ignore index {ignore_index}",
                self.sample_id
            )));
        }
        Ok(())
    }
}

/// Which modalities are observed. The all-missing mask cannot be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModalityMask {
    rgir_available: bool,
    ndsm_available: bool,
}

impl ModalityMask {
    pub const FULL: ModalityMask = ModalityMask {
        rgir_available: true,
        ndsm_available: true,
    };
    pub const MISSING_NDSM: ModalityMask = ModalityMask {
        rgir_available: true,
        ndsm_available: false,
    };
    pub const MISSING_RGIR: ModalityMask = ModalityMask {
        rgir_available: false,
        ndsm_available: true,
    };

    /// The three admissible masks, in sampling order.
    pub const ALL: [ModalityMask; 3] = [Self::FULL, Self::MISSING_NDSM, Self::MISSING_RGIR];

    pub fn new(rgir_available: bool, ndsm_available: bool) -> Result<Self> {
        if !rgir_available && !ndsm_available {
            return Err(Error::Validation(
                "at least one modality must be available".into(),
            ));
        }
        Ok(Self {
            rgir_available,
            ndsm_available,
        })
    }

    pub fn rgir_available(self) -> bool {
        self.rgir_available
    }

    pub fn ndsm_available(self) -> bool {
        self.ndsm_available
    }

    pub fn is_available(self, modality: Modality) -> bool {
        match modality {
            Modality::Rgir => self.rgir_available,
            Modality::Ndsm => self.ndsm_available,
        }
    }

    /// The modality that has to be synthesized, if any.
    pub fn missing(self) -> Option<Modality> {
        match (self.rgir_available, self.ndsm_available) {
            (true, true) => None,
            (true, false) => Some(Modality::Ndsm),
            _ => Some(Modality::Rgir),
        }
    }

    pub fn scenario(self) -> Scenario {
        match self.missing() {
            None => Scenario::Full,
            Some(Modality::Rgir) => Scenario::MissingRgir,
            Some(Modality::Ndsm) => Scenario::MissingNdsm,
        }
    }
}

/// Evaluation condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Full,
    MissingRgir,
    MissingNdsm,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Full, Scenario::MissingRgir, Scenario::MissingNdsm];

    pub fn mask(self) -> ModalityMask {
        match self {
            Scenario::Full => ModalityMask::FULL,
            Scenario::MissingRgir => ModalityMask::MISSING_RGIR,
            Scenario::MissingNdsm => ModalityMask::MISSING_NDSM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Full => "full",
            Scenario::MissingRgir => "missing_rgir",
            Scenario::MissingNdsm => "missing_ndsm",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "scenario",
                    format!("unknown scenario '{s}' (expected full, missing_rgir or missing_ndsm)"),
                )
            })
    }
}

/// Draws one of the three admissible masks uniformly.
pub fn sample_modality_mask<R: Rng + ?Sized>(rng: &mut R) -> ModalityMask {
    ModalityMask::ALL[rng.gen_range(0..3)]
}

/// Per-worker stream derived from `(seed, worker_index)`; results do not depend on scheduling.
pub fn worker_rng(seed: u64, worker_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker_index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::config("split", format!("unknown split '{s}' (expected train, val or test)")))
    }
}

/// Where a split lives and how it is cut into patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub root_dir: PathBuf,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_patch_size")]
    pub stride: usize,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_ignore_index")]
    pub ignore_index: u32,
    #[serde(default = "default_class_names")]
    pub class_names: Vec<String>,
    /// Class ids rewritten to the ignore index at load time (e.g. clutter).
    #[serde(default)]
    pub ignore_classes: Vec<u32>,
}

fn default_split() -> Split {
    Split::Train
}
fn default_patch_size() -> usize {
    512
}
fn default_num_classes() -> usize {
    ISPRS_CLASSES.len()
}
fn default_ignore_index() -> u32 {
    DEFAULT_IGNORE_INDEX
}
fn default_class_names() -> Vec<String> {
    ISPRS_CLASSES.iter().map(|s| s.to_string()).collect()
}

impl DatasetSpec {
    pub fn new(root_dir: impl Into<PathBuf>, split: Split) -> Self {
        Self {
            root_dir: root_dir.into(),
            split,
            patch_size: default_patch_size(),
            stride: default_patch_size(),
            num_classes: default_num_classes(),
            ignore_index: default_ignore_index(),
            class_names: default_class_names(),
            ignore_classes: Vec::new(),
        }
    }

    pub fn with_split(&self, split: Split) -> Self {
        Self {
            split,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::config("dataset.patch_size", "must be > 0"));
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(Error::config(
                "dataset.stride",
                format!("must satisfy 0 < stride <= patch_size ({})", self.patch_size),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::config("dataset.num_classes", "must be >= 2"));
        }
        if self.class_names.len() != self.num_classes {
            return Err(Error::config(
                "dataset.class_names",
                format!(
                    "expected {} names, got {}",
                    self.num_classes,
                    self.class_names.len()
                ),
            ));
        }
        if (self.ignore_index as usize) < self.num_classes {
            return Err(Error::config(
                "dataset.ignore_index",
                "must not collide with a class id",
            ));
        }
        Ok(())
    }

    pub fn split_dir(&self) -> PathBuf {
        self.root_dir.join(self.split.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    #[test]
    fn bundle_rejects_mismatched_shapes() {
        let err = ModalityBundle::new(
            Array3::zeros((3, 8, 8)),
            Array3::zeros((1, 4, 4)),
            Array2::zeros((8, 8)),
            "t",
        )
        .unwrap_err();
        assert!(err.to_string().contains("'t'"));
    }

    #[test]
    fn bundle_rejects_nan() {
        let mut rgir = Array3::zeros((3, 4, 4));
        rgir[[1, 2, 2]] = f32::NAN;
        assert!(
            ModalityBundle::new(rgir, Array3::zeros((1, 4, 4)), Array2::zeros((4, 4)), "t")
                .is_err()
        );
    }

    #[test]
    fn labels_outside_range_must_be_ignore() {
        let mut label = Array2::zeros((2, 2));
        label[[0, 0]] = 255;
        let b = ModalityBundle::new(
            Array3::zeros((3, 2, 2)),
            Array3::zeros((1, 2, 2)),
            label.clone(),
            "t",
        )
        .unwrap();
        b.validate_labels(6, 255).unwrap();
        label[[0, 1]] = 7;
        let b = ModalityBundle { label, ..b };
        assert!(b.validate_labels(6, 255).is_err());
    }

    #[test]
    fn all_false_mask_is_unconstructible() {
        assert!(ModalityMask::new(false, false).is_err());
        assert_eq!(ModalityMask::new(true, false).unwrap(), ModalityMask::MISSING_NDSM);
    }

    #[test]
    fn mask_sequence_is_deterministic_and_never_empty() {
        let draw = |seed| {
            let mut rng = worker_rng(seed, 0);
            (0..1000)
                .map(|_| sample_modality_mask(&mut rng))
                .collect::<Vec<_>>()
        };
        let a = draw(17);
        assert_eq!(a, draw(17));
        assert!(a.iter().all(|m| m.rgir_available() || m.ndsm_available()));
    }

    #[test]
    fn mask_frequencies_are_uniform() {
        let mut rng = worker_rng(2024, 0);
        let n = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let m = sample_modality_mask(&mut rng);
            counts[ModalityMask::ALL.iter().position(|x| *x == m).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.323..=0.343).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn dataset_spec_validation() {
        let mut spec = DatasetSpec::new("/tmp", Split::Train);
        spec.validate().unwrap();
        spec.stride = 600;
        assert!(spec.validate().is_err());
        spec.stride = 256;
        spec.num_classes = 1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("missing_rgir".parse::<Scenario>().unwrap(), Scenario::MissingRgir);
        assert!("none".parse::<Scenario>().is_err());
        for s in Scenario::ALL {
            assert_eq!(s.mask().scenario(), s);
        }
    }
}
