//! Per-class segmentation metrics: DSC, IoU, and the 95th-percentile
//! Hausdorff surface distance, backed by an exact Euclidean distance
//! transform.
//!
//! Conventions, pinned for testability:
//! - distances are millimeters, weighted by the header spacing;
//! - surfaces are 6-connected border voxels (the grid edge counts as
//!   outside);
//! - HD95 is the max of the two directed 95th-percentile surface distances,
//!   with the same linear-interpolation percentile used everywhere else;
//! - a class empty in both volumes has undefined metrics, a class empty in
//!   exactly one has DSC = IoU = 0 and HD95 = +infinity.

mod edt;

use crate::preprocess::percentile_sorted;
use crate::scalar::Real;
use crate::volume::{LabelVolume, TissueClass};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction and ground-truth grids do not match (dims {pred_dims:?} vs {gt_dims:?}, spacing {pred_spacing:?} vs {gt_spacing:?})")]
    GridMismatch {
        pred_dims: [usize; 3],
        gt_dims: [usize; 3],
        pred_spacing: [f64; 3],
        gt_spacing: [f64; 3],
    },
    #[error("distance transform of an empty mask is undefined")]
    EmptyMask,
    #[error("case_id and method must be non-empty")]
    EmptyIdentifier,
}

fn check_grids(pred: &LabelVolume, gt: &LabelVolume) -> Result<(), MetricsError> {
    if pred.dims() != gt.dims() || pred.spacing() != gt.spacing() {
        return Err(MetricsError::GridMismatch {
            pred_dims: pred.dims(),
            gt_dims: gt.dims(),
            pred_spacing: pred.spacing(),
            gt_spacing: gt.spacing(),
        });
    }
    Ok(())
}

/// Voxelwise true-positive / false-positive / false-negative counts for the
/// binary masks `pred == class` and `gt == class`.
pub fn confusion_counts(
    pred: &LabelVolume,
    gt: &LabelVolume,
    class: TissueClass,
) -> Result<(usize, usize, usize), MetricsError> {
    check_grids(pred, gt)?;
    let code = class.code();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p == code, g == code) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    Ok((tp, fp, fneg))
}

/// Dice similarity coefficient `2tp / (2tp + fp + fn)`; `None` when the
/// class is absent from both volumes.
pub fn dice(
    pred: &LabelVolume,
    gt: &LabelVolume,
    class: TissueClass,
) -> Result<Option<f64>, MetricsError> {
    let (tp, fp, fneg) = confusion_counts(pred, gt, class)?;
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        return Ok(None);
    }
    Ok(Some(2.0 * tp as f64 / denom as f64))
}

/// Intersection over union `tp / (tp + fp + fn)`; `None` when the class is
/// absent from both volumes.
pub fn iou(
    pred: &LabelVolume,
    gt: &LabelVolume,
    class: TissueClass,
) -> Result<Option<f64>, MetricsError> {
    let (tp, fp, fneg) = confusion_counts(pred, gt, class)?;
    let denom = tp + fp + fneg;
    if denom == 0 {
        return Ok(None);
    }
    Ok(Some(tp as f64 / denom as f64))
}

/// Exact Euclidean distance (mm) from every voxel to the nearest true voxel
/// center, axes weighted by spacing.
pub fn distance_transform<T: Real>(
    mask: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Result<Vec<T>, MetricsError> {
    if !mask.iter().any(|&m| m) {
        return Err(MetricsError::EmptyMask);
    }
    let mut field = edt::squared_distance_field::<T>(mask, dims, spacing);
    for v in &mut field {
        *v = v.sqrt();
    }
    Ok(field)
}

/// True voxels with at least one 6-connected neighbor that is false or
/// outside the grid, as linear indices alongside a full boolean mask.
pub fn surface_voxels(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let mut surface = vec![false; mask.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if !mask[idx(x, y, z)] {
                    continue;
                }
                let boundary = x == 0
                    || !mask[idx(x - 1, y, z)]
                    || x + 1 == dims[0]
                    || !mask[idx(x + 1, y, z)]
                    || y == 0
                    || !mask[idx(x, y - 1, z)]
                    || y + 1 == dims[1]
                    || !mask[idx(x, y + 1, z)]
                    || z == 0
                    || !mask[idx(x, y, z - 1)]
                    || z + 1 == dims[2]
                    || !mask[idx(x, y, z + 1)];
                if boundary {
                    surface[idx(x, y, z)] = true;
                }
            }
        }
    }
    surface
}

/// Directed 95th-percentile distances from each surface of `from` to the
/// nearest surface voxel of `to`.
fn directed_p95(
    from_surface: &[bool],
    to_surface: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Result<f64, MetricsError> {
    let field = distance_transform::<f64>(to_surface, dims, spacing)?;
    let mut dists: Vec<f64> = from_surface
        .iter()
        .zip(&field)
        .filter_map(|(&s, &d)| if s { Some(d) } else { None })
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    Ok(percentile_sorted(&dists, 95.0))
}

/// 95th-percentile Hausdorff distance between the class surfaces of two
/// label volumes, in mm. `None` when the class is absent from both volumes,
/// `+infinity` when it is absent from exactly one.
pub fn hd95(
    pred: &LabelVolume,
    gt: &LabelVolume,
    class: TissueClass,
) -> Result<Option<f64>, MetricsError> {
    check_grids(pred, gt)?;
    let pred_mask = pred.class_mask(class);
    let gt_mask = gt.class_mask(class);
    let pred_any = pred_mask.iter().any(|&m| m);
    let gt_any = gt_mask.iter().any(|&m| m);
    match (pred_any, gt_any) {
        (false, false) => return Ok(None),
        (true, true) => {}
        _ => return Ok(Some(f64::INFINITY)),
    }
    let dims = pred.dims();
    let spacing = pred.spacing();
    let pred_surface = surface_voxels(&pred_mask, dims);
    let gt_surface = surface_voxels(&gt_mask, dims);
    let forward = directed_p95(&pred_surface, &gt_surface, dims, spacing)?;
    let backward = directed_p95(&gt_surface, &pred_surface, dims, spacing)?;
    Ok(Some(forward.max(backward)))
}

/// Metrics for one tissue class. `dsc` and `iou` are undefined together
/// (class absent from both volumes); `hd95` may additionally be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: TissueClass,
    pub dsc: Option<f64>,
    pub iou: Option<f64>,
    #[serde(with = "crate::report::serde_inf_opt")]
    pub hd95: Option<f64>,
}

/// Per-case, per-class metric triples for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub case_id: String,
    pub method: String,
    pub per_class: Vec<ClassMetrics>,
}

/// Evaluate all six foreground classes of a prediction against the ground
/// truth.
pub fn evaluate_case(
    pred: &LabelVolume,
    gt: &LabelVolume,
    case_id: &str,
    method: &str,
) -> Result<MetricsRecord, MetricsError> {
    if case_id.is_empty() || method.is_empty() {
        return Err(MetricsError::EmptyIdentifier);
    }
    check_grids(pred, gt)?;
    let mut per_class = Vec::with_capacity(TissueClass::FOREGROUND.len());
    for class in TissueClass::FOREGROUND {
        per_class.push(ClassMetrics {
            class,
            dsc: dice(pred, gt, class)?,
            iou: iou(pred, gt, class)?,
            hd95: hd95(pred, gt, class)?,
        });
    }
    Ok(MetricsRecord {
        case_id: case_id.to_string(),
        method: method.to_string(),
        per_class,
    })
}
