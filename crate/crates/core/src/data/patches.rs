use ndarray::s;

use super::ModalityBundle;
use crate::error::{Error, Result};

/// Sliding-window start offsets along one axis.
///
/// A window that would overrun the border is shifted back so it ends flush
/// with it; the last start is always `dim - patch`.
pub fn window_starts(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    assert!(patch > 0 && stride > 0 && patch <= dim);
    let mut starts = Vec::new();
    let mut s = 0;
    while s + patch < dim {
        starts.push(s);
        s += stride;
    }
    starts.push(dim - patch);
    starts
}

/// Cuts a tile into `patch_size x patch_size` patches in row-major order.
pub fn extract_patches(
    tile: &ModalityBundle,
    patch_size: usize,
    stride: usize,
) -> Result<Vec<ModalityBundle>> {
    let (h, w) = (tile.height(), tile.width());
    if patch_size == 0 || stride == 0 {
        return Err(Error::Validation("patch size and stride must be > 0".into()));
    }
    if patch_size > h.min(w) {
        return Err(Error::Validation(format!(
            "patch size {patch_size} exceeds tile '{}' of {h}x{w}",
            tile.sample_id
        )));
    }
    let rows = window_starts(h, patch_size, stride);
    let cols = window_starts(w, patch_size, stride);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            let (r1, c1) = (r + patch_size, c + patch_size);
            out.push(ModalityBundle {
                rgir: tile.rgir.slice(s![.., r..r1, c..c1]).to_owned(),
                ndsm: tile.ndsm.slice(s![.., r..r1, c..c1]).to_owned(),
                label: tile.label.slice(s![r..r1, c..c1]).to_owned(),
                sample_id: format!("{}_r{r}_c{c}", tile.sample_id),
            });
        }
    }
    Ok(out)
}
