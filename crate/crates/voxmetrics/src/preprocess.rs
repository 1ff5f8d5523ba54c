//! Intensity preprocessing: upper-percentile clipping followed by per-image
//! min-max scaling, plus the machine-readable training-protocol manifest.

use crate::scalar::Real;
use crate::volume::{Volume, VolumeError};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("percentile must lie in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Percentile of already-sorted values with the linear-interpolation
/// convention `rank = (p / 100) * (n - 1)`.
///
/// This single convention is shared by intensity clipping and the
/// 95th-percentile surface distance so the two stay comparable.
pub fn percentile_sorted<T: Real>(sorted: &[T], p: f64) -> T {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0) * (n - 1) as f64;
    let lo = rank.floor().clamp(0.0, (n - 1) as f64) as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        return sorted[lo];
    }
    let a = sorted[lo].to_f64_lossy();
    let b = sorted[lo + 1].to_f64_lossy();
    T::from_f64_lossy(a + frac * (b - a))
}

/// Percentile of an unsorted slice; sorts a copy.
pub fn percentile<T: Real>(values: &[T], p: f64) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    percentile_sorted(&sorted, p)
}

/// Clip every voxel above the p-th percentile down to that percentile.
pub fn clip_percentile<T: Real>(vol: &Volume<T>, p: f64) -> Result<Volume<T>, PreprocessError> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(PreprocessError::BadPercentile(p));
    }
    let q = percentile(vol.data(), p);
    Ok(vol.map_values(|v| if v > q { q } else { v })?)
}

/// Threshold that [`clip_percentile`] would apply, exposed for inspection.
pub fn clip_threshold<T: Real>(vol: &Volume<T>, p: f64) -> Result<T, PreprocessError> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(PreprocessError::BadPercentile(p));
    }
    Ok(percentile(vol.data(), p))
}

/// Min-max scale to [0, 1]; a constant volume maps to all zeros.
pub fn minmax_normalize<T: Real>(vol: &Volume<T>) -> Result<Volume<T>, PreprocessError> {
    let (lo, hi) = vol.min_max();
    if lo == hi {
        return Ok(vol.map_values(|_| T::zero())?);
    }
    let range = hi - lo;
    Ok(vol.map_values(|v| (v - lo) / range)?)
}

/// Full per-image preprocessing: clip at the given percentile, then min-max
/// scale. No cohort statistics are involved.
pub fn preprocess_case<T: Real>(vol: &Volume<T>, clip_p: f64) -> Result<Volume<T>, PreprocessError> {
    minmax_normalize(&clip_percentile(vol, clip_p)?)
}

/// Default clipping percentile applied by the pipeline.
pub const DEFAULT_CLIP_PERCENTILE: f64 = 99.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStage {
    pub name: String,
    pub dataset_role: DatasetRole,
    pub epochs: u32,
    pub initial_learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingSpec {
    pub clip_percentile: f64,
    pub normalization: String,
}

/// Machine-readable description of the two-stage transfer-learning schedule.
/// Descriptive output only; this crate never trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolManifest {
    pub stages: Vec<TrainingStage>,
    pub augmentations: Vec<String>,
    pub preprocessing: PreprocessingSpec,
}

/// The fixed two-stage schedule: human pretraining (1000 epochs at 1e-2)
/// followed by vervet fine-tuning (200 epochs at 1e-4).
pub fn emit_training_protocol() -> ProtocolManifest {
    ProtocolManifest {
        stages: vec![
            TrainingStage {
                name: "human_pretrain".to_string(),
                dataset_role: DatasetRole::Pretrain,
                epochs: 1000,
                initial_learning_rate: 1e-2,
            },
            TrainingStage {
                name: "vervet_finetune".to_string(),
                dataset_role: DatasetRole::Finetune,
                epochs: 200,
                initial_learning_rate: 1e-4,
            },
        ],
        augmentations: crate::augment::TRANSFORM_NAMES
            .iter()
            .map(|s| s.to_string())
            .collect(),
        preprocessing: PreprocessingSpec {
            clip_percentile: DEFAULT_CLIP_PERCENTILE,
            normalization: "minmax".to_string(),
        },
    }
}
