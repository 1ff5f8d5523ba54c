//! Volumetric segmentation evaluation and preprocessing toolkit.
//!
//! The crate covers the non-training half of a brain tissue segmentation
//! pipeline: NIfTI-1 ingestion, intensity preprocessing, resampling between
//! voxel grids, seeded data augmentation, per-class DSC / IoU / HD95
//! metrics backed by an exact Euclidean distance transform, Kruskal-Wallis
//! and Dunn method comparison, and table-style reporting. A deterministic
//! phantom generator provides desk-scale test volumes, and a CLI wires the
//! pieces together for batch use.
//!
//! The numeric kernels are generic over the [`Real`] scalar (f32 or f64);
//! the pipeline itself works at f64 (see [`VolumeF64`]) and stores float32
//! on disk.

pub mod augment;
pub mod cli;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod preprocess;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod volume;

pub use scalar::Real;
pub use volume::{LabelVolume, TissueClass, Volume};

/// Working-precision intensity volume used by the pipeline.
pub type VolumeF64 = Volume<f64>;
/// Single-precision intensity volume (matches the on-disk payload type).
pub type VolumeF32 = Volume<f32>;
