//! Canonical in-memory volume types and geometric resampling.
//!
//! A [`Volume`] is a 3D scalar grid with physical voxel spacing (mm) and a
//! carried 3x4 affine; a [`LabelVolume`] is the integer-labelled counterpart
//! restricted to the seven tissue codes. Voxel data is stored x-fastest:
//! `index = x + nx * (y + ny * z)`.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Number of tissue classes including background.
pub const NUM_CLASSES: usize = 7;

/// Highest valid label code.
pub const MAX_LABEL: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("dims must all be positive, got {0:?}")]
    EmptyDims([usize; 3]),
    #[error("data length {got} does not match dims {dims:?} ({expected} voxels)")]
    DataLength {
        dims: [usize; 3],
        expected: usize,
        got: usize,
    },
    #[error("spacing must be positive and finite, got {0:?}")]
    NonPositiveSpacing([f64; 3]),
    #[error("volume contains a non-finite value at linear index {0}")]
    NonFinite(usize),
    #[error("label {0} exceeds the maximum tissue code {MAX_LABEL}")]
    LabelOutOfRange(u8),
    #[error("resample target produced an empty grid")]
    DegenerateOutput,
}

/// The six foreground tissue classes plus background.
///
/// The code/class mapping is fixed: 0=background, 1=CSF, 2=GM, 3=WM,
/// 4=DGM, 5=brainstem, 6=cerebellum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TissueClass {
    Background,
    Csf,
    Gm,
    Wm,
    Dgm,
    Brainstem,
    Cerebellum,
}

impl TissueClass {
    /// All classes in code order.
    pub const ALL: [TissueClass; NUM_CLASSES] = [
        TissueClass::Background,
        TissueClass::Csf,
        TissueClass::Gm,
        TissueClass::Wm,
        TissueClass::Dgm,
        TissueClass::Brainstem,
        TissueClass::Cerebellum,
    ];

    /// The six foreground classes in code order.
    pub const FOREGROUND: [TissueClass; 6] = [
        TissueClass::Csf,
        TissueClass::Gm,
        TissueClass::Wm,
        TissueClass::Dgm,
        TissueClass::Brainstem,
        TissueClass::Cerebellum,
    ];

    /// Integer code of this class.
    pub const fn code(self) -> u8 {
        match self {
            TissueClass::Background => 0,
            TissueClass::Csf => 1,
            TissueClass::Gm => 2,
            TissueClass::Wm => 3,
            TissueClass::Dgm => 4,
            TissueClass::Brainstem => 5,
            TissueClass::Cerebellum => 6,
        }
    }

    /// Class for an integer code.
    pub fn from_code(code: u8) -> Result<Self, VolumeError> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or(VolumeError::LabelOutOfRange(code))
    }

    /// Display name used in reports.
    pub const fn name(self) -> &'static str {
        match self {
            TissueClass::Background => "background",
            TissueClass::Csf => "CSF",
            TissueClass::Gm => "GM",
            TissueClass::Wm => "WM",
            TissueClass::Dgm => "DGM",
            TissueClass::Brainstem => "brainstem",
            TissueClass::Cerebellum => "cerebellum",
        }
    }

    /// Machine tag used in file formats (matches the serde names).
    pub const fn tag(self) -> &'static str {
        match self {
            TissueClass::Background => "background",
            TissueClass::Csf => "csf",
            TissueClass::Gm => "gm",
            TissueClass::Wm => "wm",
            TissueClass::Dgm => "dgm",
            TissueClass::Brainstem => "brainstem",
            TissueClass::Cerebellum => "cerebellum",
        }
    }

    /// Inverse of [`TissueClass::tag`].
    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

impl std::fmt::Display for TissueClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn identity_affine(spacing: [f64; 3]) -> [[f64; 4]; 3] {
    [
        [spacing[0], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[2], 0.0],
    ]
}

fn check_geometry(dims: [usize; 3], spacing: [f64; 3]) -> Result<(), VolumeError> {
    if dims.contains(&0) {
        return Err(VolumeError::EmptyDims(dims));
    }
    if spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
        return Err(VolumeError::NonPositiveSpacing(spacing));
    }
    Ok(())
}

/// 3D scalar intensity grid with physical voxel spacing and a carried affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: [[f64; 4]; 3],
    data: Vec<T>,
}

impl<T: Real> Volume<T> {
    /// Build a volume with the default axis-aligned affine.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self, VolumeError> {
        Self::with_affine(dims, spacing, identity_affine(spacing), data)
    }

    /// Build a volume carrying an explicit 3x4 affine.
    pub fn with_affine(
        dims: [usize; 3],
        spacing: [f64; 3],
        affine: [[f64; 4]; 3],
        data: Vec<T>,
    ) -> Result<Self, VolumeError> {
        check_geometry(dims, spacing)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(VolumeError::DataLength {
                dims,
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        Ok(Self {
            dims,
            spacing,
            affine,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> [[f64; 4]; 3] {
        self.affine
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn num_voxels(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    /// Minimum and maximum voxel value.
    pub fn min_max(&self) -> (T, T) {
        let mut lo = self.data[0];
        let mut hi = self.data[0];
        for &v in &self.data[1..] {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    /// Mean voxel value, accumulated at f64.
    pub fn mean(&self) -> T {
        let sum: f64 = self.data.iter().map(|v| v.to_f64_lossy()).sum();
        T::from_f64_lossy(sum / self.data.len() as f64)
    }

    /// Apply a per-voxel transform, revalidating finiteness.
    pub fn map_values(&self, f: impl Fn(T) -> T) -> Result<Self, VolumeError> {
        let data: Vec<T> = self.data.iter().map(|&v| f(v)).collect();
        Self::with_affine(self.dims, self.spacing, self.affine, data)
    }

    /// Same grid, different payload.
    pub fn with_data(&self, data: Vec<T>) -> Result<Self, VolumeError> {
        Self::with_affine(self.dims, self.spacing, self.affine, data)
    }
}

/// 3D integer label grid over the seven tissue codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: [[f64; 4]; 3],
    data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<u8>) -> Result<Self, VolumeError> {
        Self::with_affine(dims, spacing, identity_affine(spacing), data)
    }

    pub fn with_affine(
        dims: [usize; 3],
        spacing: [f64; 3],
        affine: [[f64; 4]; 3],
        data: Vec<u8>,
    ) -> Result<Self, VolumeError> {
        check_geometry(dims, spacing)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(VolumeError::DataLength {
                dims,
                expected,
                got: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| v > MAX_LABEL) {
            return Err(VolumeError::LabelOutOfRange(bad));
        }
        Ok(Self {
            dims,
            spacing,
            affine,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> [[f64; 4]; 3] {
        self.affine
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn num_voxels(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.index(x, y, z)]
    }

    /// Voxel counts per label code.
    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0usize; NUM_CLASSES];
        for &v in &self.data {
            h[v as usize] += 1;
        }
        h
    }

    /// Binary mask of voxels carrying the given class.
    pub fn class_mask(&self, class: TissueClass) -> Vec<bool> {
        let code = class.code();
        self.data.iter().map(|&v| v == code).collect()
    }

    /// Physical volume of one voxel in mm^3.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }
}

/// Edge policy for the samplers.
#[derive(Clone, Copy)]
pub(crate) enum Edge<T> {
    /// Clamp coordinates to the nearest edge voxel (resampling semantics).
    Clamp,
    /// Fill out-of-field samples with a constant (rigid-transform semantics).
    Fill(T),
}

/// Per-axis linear index map: `input = output * scale + offset`.
#[derive(Clone, Copy)]
pub(crate) struct AxisMap {
    pub scale: f64,
    pub offset: f64,
}

impl AxisMap {
    #[inline]
    pub fn apply(self, k: usize) -> f64 {
        k as f64 * self.scale + self.offset
    }
}

#[inline]
fn tri_axis(coord: f64, n: usize) -> (usize, usize, f64) {
    let hi = (n - 1) as f64;
    let c = coord.clamp(0.0, hi);
    let x0 = c.floor();
    let i0 = x0 as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, c - x0)
}

/// Trilinear sample at a continuous coordinate. Returns `None` when the
/// coordinate is out of field under a `Fill` policy.
#[inline]
pub(crate) fn trilinear_at<T: Real>(vol: &Volume<T>, coord: [f64; 3], edge: Edge<T>) -> T {
    let dims = vol.dims();
    if let Edge::Fill(fill) = edge {
        for a in 0..3 {
            if coord[a] < 0.0 || coord[a] > (dims[a] - 1) as f64 {
                return fill;
            }
        }
    }
    let (x0, x1, fx) = tri_axis(coord[0], dims[0]);
    let (y0, y1, fy) = tri_axis(coord[1], dims[1]);
    let (z0, z1, fz) = tri_axis(coord[2], dims[2]);
    // Nested lerp form: exact for constant data and for zero fractions.
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let c00 = lerp(
        vol.get(x0, y0, z0).to_f64_lossy(),
        vol.get(x1, y0, z0).to_f64_lossy(),
        fx,
    );
    let c10 = lerp(
        vol.get(x0, y1, z0).to_f64_lossy(),
        vol.get(x1, y1, z0).to_f64_lossy(),
        fx,
    );
    let c01 = lerp(
        vol.get(x0, y0, z1).to_f64_lossy(),
        vol.get(x1, y0, z1).to_f64_lossy(),
        fx,
    );
    let c11 = lerp(
        vol.get(x0, y1, z1).to_f64_lossy(),
        vol.get(x1, y1, z1).to_f64_lossy(),
        fx,
    );
    let c0 = lerp(c00, c10, fy);
    let c1 = lerp(c01, c11, fy);
    T::from_f64_lossy(lerp(c0, c1, fz))
}

/// Nearest-neighbor label sample at a continuous coordinate.
#[inline]
pub(crate) fn nearest_at(labels: &LabelVolume, coord: [f64; 3], edge: Edge<u8>) -> u8 {
    let dims = labels.dims();
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let r = coord[a].round();
        if r < 0.0 || r > (dims[a] - 1) as f64 {
            match edge {
                Edge::Fill(fill) => return fill,
                Edge::Clamp => idx[a] = r.clamp(0.0, (dims[a] - 1) as f64) as usize,
            }
        } else {
            idx[a] = r as usize;
        }
    }
    labels.get(idx[0], idx[1], idx[2])
}

/// Sample an intensity volume on a new grid described by per-axis maps.
pub(crate) fn sample_axes_trilinear<T: Real>(
    vol: &Volume<T>,
    out_dims: [usize; 3],
    maps: [AxisMap; 3],
    edge: Edge<T>,
) -> Vec<T> {
    let mut out = Vec::with_capacity(out_dims[0] * out_dims[1] * out_dims[2]);
    for z in 0..out_dims[2] {
        let cz = maps[2].apply(z);
        for y in 0..out_dims[1] {
            let cy = maps[1].apply(y);
            for x in 0..out_dims[0] {
                let cx = maps[0].apply(x);
                out.push(trilinear_at(vol, [cx, cy, cz], edge));
            }
        }
    }
    out
}

/// Sample a label volume on a new grid described by per-axis maps.
pub(crate) fn sample_axes_nearest(
    labels: &LabelVolume,
    out_dims: [usize; 3],
    maps: [AxisMap; 3],
    edge: Edge<u8>,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(out_dims[0] * out_dims[1] * out_dims[2]);
    for z in 0..out_dims[2] {
        let cz = maps[2].apply(z);
        for y in 0..out_dims[1] {
            let cy = maps[1].apply(y);
            for x in 0..out_dims[0] {
                let cx = maps[0].apply(x);
                out.push(nearest_at(labels, [cx, cy, cz], edge));
            }
        }
    }
    out
}

/// Output grid and index maps for a spacing change.
///
/// Output extents follow `round(dim * source / target)` per axis (minimum 1)
/// and output voxel center `k` maps to input coordinate
/// `(k + 0.5) * target / source - 0.5`.
fn resample_geometry(
    dims: [usize; 3],
    spacing: [f64; 3],
    target: [f64; 3],
) -> Result<([usize; 3], [AxisMap; 3]), VolumeError> {
    if target.iter().any(|&t| !t.is_finite() || t <= 0.0) {
        return Err(VolumeError::NonPositiveSpacing(target));
    }
    let mut out_dims = [0usize; 3];
    let mut maps = [AxisMap {
        scale: 1.0,
        offset: 0.0,
    }; 3];
    for a in 0..3 {
        if dims[a] == 0 {
            return Err(VolumeError::DegenerateOutput);
        }
        let n = (dims[a] as f64 * spacing[a] / target[a]).round().max(1.0) as usize;
        let r = target[a] / spacing[a];
        out_dims[a] = n;
        maps[a] = AxisMap {
            scale: r,
            offset: 0.5 * r - 0.5,
        };
    }
    Ok((out_dims, maps))
}

/// Compose the carried affine with a per-axis index map so the resampled
/// grid stays registered with the source.
fn compose_affine(affine: [[f64; 4]; 3], maps: [AxisMap; 3]) -> [[f64; 4]; 3] {
    let mut out = affine;
    for row in 0..3 {
        out[row][3] = affine[row][3]
            + affine[row][0] * maps[0].offset
            + affine[row][1] * maps[1].offset
            + affine[row][2] * maps[2].offset;
        for col in 0..3 {
            out[row][col] = affine[row][col] * maps[col].scale;
        }
    }
    out
}

/// Resample an intensity volume to a new spacing with trilinear
/// interpolation; out-of-range samples clamp to the nearest edge voxel.
pub fn resample_intensity<T: Real>(
    vol: &Volume<T>,
    target_spacing: [f64; 3],
) -> Result<Volume<T>, VolumeError> {
    let (out_dims, maps) = resample_geometry(vol.dims(), vol.spacing(), target_spacing)?;
    let data = sample_axes_trilinear(vol, out_dims, maps, Edge::Clamp);
    Volume::with_affine(
        out_dims,
        target_spacing,
        compose_affine(vol.affine(), maps),
        data,
    )
}

/// Resample a label volume to a new spacing with nearest-neighbor sampling.
/// The output label set is always a subset of the input label set.
pub fn resample_labels(
    labels: &LabelVolume,
    target_spacing: [f64; 3],
) -> Result<LabelVolume, VolumeError> {
    let (out_dims, maps) = resample_geometry(labels.dims(), labels.spacing(), target_spacing)?;
    let data = sample_axes_nearest(labels, out_dims, maps, Edge::Clamp);
    LabelVolume::with_affine(
        out_dims,
        target_spacing,
        compose_affine(labels.affine(), maps),
        data,
    )
}
