//! Multimodal RGIR/NDSM semantic segmentation that stays usable when one modality is missing.

pub mod coloss;
pub mod data;
pub mod error;
pub mod harness;
pub mod hyfex;
pub mod hyfma;
pub mod metrics;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
