use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use rand::Rng;

use super::ModalityBundle;

/// Joint geometric transform: optional flips followed by `rot90` quarter turns counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Transform {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: u8,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        hflip: false,
        vflip: false,
        rot90: 0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Transform {
            hflip: rng.gen_bool(0.5),
            vflip: rng.gen_bool(0.5),
            rot90: rng.gen_range(0..4),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    fn apply_image(&self, img: &Array3<f32>) -> Array3<f32> {
        let mut v = img.view();
        if self.hflip {
            v.slice_collapse(s![.., .., ..;-1]);
        }
        if self.vflip {
            v.slice_collapse(s![.., ..;-1, ..]);
        }
        for _ in 0..self.rot90 % 4 {
            v = rotate_ccw3(v);
        }
        v.as_standard_layout().into_owned()
    }

    fn apply_label(&self, label: &Array2<u32>) -> Array2<u32> {
        let mut v = label.view();
        if self.hflip {
            v.slice_collapse(s![.., ..;-1]);
        }
        if self.vflip {
            v.slice_collapse(s![..;-1, ..]);
        }
        for _ in 0..self.rot90 % 4 {
            v = rotate_ccw2(v);
        }
        v.as_standard_layout().into_owned()
    }

    /// Applies the transform to all three rasters. Pixels are permuted, never interpolated.
    pub fn apply(&self, bundle: &ModalityBundle) -> ModalityBundle {
        ModalityBundle {
            rgir: self.apply_image(&bundle.rgir),
            ndsm: self.apply_image(&bundle.ndsm),
            label: self.apply_label(&bundle.label),
            sample_id: bundle.sample_id.clone(),
        }
    }
}

// Quarter turn counter-clockwise on a view: transpose, then reverse rows.
fn rotate_ccw3(v: ArrayView3<'_, f32>) -> ArrayView3<'_, f32> {
    let mut t = v.permuted_axes([0, 2, 1]);
    t.slice_collapse(s![.., ..;-1, ..]);
    t
}

fn rotate_ccw2(v: ArrayView2<'_, u32>) -> ArrayView2<'_, u32> {
    let mut t = v.reversed_axes();
    t.slice_collapse(s![..;-1, ..]);
    t
}

/// Samples a transform from `rng` and applies it jointly to the bundle.
pub fn augment<R: Rng + ?Sized>(bundle: &ModalityBundle, rng: &mut R) -> ModalityBundle {
    Transform::sample(rng).apply(bundle)
}
