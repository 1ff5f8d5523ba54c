//! Stochastic augmentation transforms applied jointly to an intensity
//! volume and its label map.
//!
//! Spatial transforms (rotation, scaling, mirroring) move intensity and
//! labels through identical geometry: trilinear resampling for intensity,
//! nearest-neighbor for labels, out-of-field fill with 0 / background.
//! Intensity-only transforms never touch the label volume.
//!
//! All randomness flows from one root seed through per-case, per-transform
//! ChaCha streams, so batch outputs are independent of scheduling and
//! worker count.

use crate::scalar::Real;
use crate::volume::{
    nearest_at, sample_axes_trilinear, trilinear_at, AxisMap, Edge, LabelVolume, Volume,
    VolumeError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Transform names as listed in the training protocol (brightness and
/// contrast adjustments count as one entry).
pub const TRANSFORM_NAMES: [&str; 8] = [
    "rotation",
    "scaling",
    "gaussian_noise",
    "gaussian_blur",
    "brightness_contrast",
    "low_resolution_simulation",
    "gamma",
    "mirroring",
];

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("intensity and label grids do not match")]
    GridMismatch,
    #[error("gamma input must be min-max normalized to [0,1], found {0}")]
    NotNormalized(f64),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("invalid augmentation spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Mirror axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

fn check_paired<T: Real>(vol: &Volume<T>, labels: &LabelVolume) -> Result<(), AugmentError> {
    if vol.dims() != labels.dims() || vol.spacing() != labels.spacing() {
        return Err(AugmentError::GridMismatch);
    }
    Ok(())
}

/// (sin, cos) of an angle in degrees, exact for multiples of 90 so that
/// quarter turns land precisely on grid points.
fn sincos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.trunc() && quarter.abs() < 1e15 {
        match ((quarter as i64 % 4) + 4) % 4 {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: Mat3, b: Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn transpose(m: Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[j][i];
        }
    }
    out
}

/// Content rotation matrix R = Rz * Ry * Rx for angles in degrees.
fn rotation_matrix(angles_deg: [f64; 3]) -> Mat3 {
    let (sx, cx) = sincos_deg(angles_deg[0]);
    let (sy, cy) = sincos_deg(angles_deg[1]);
    let (sz, cz) = sincos_deg(angles_deg[2]);
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(rz, mat_mul(ry, rx))
}

/// Sample intensity and labels through a shared inverse coordinate map.
fn warp_pair<T: Real>(
    vol: &Volume<T>,
    labels: &LabelVolume,
    map: impl Fn(usize, usize, usize) -> [f64; 3],
) -> Result<(Volume<T>, LabelVolume), AugmentError> {
    let dims = vol.dims();
    let n = vol.num_voxels();
    let mut vdata = Vec::with_capacity(n);
    let mut ldata = Vec::with_capacity(n);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let coord = map(x, y, z);
                vdata.push(trilinear_at(vol, coord, Edge::Fill(T::zero())));
                ldata.push(nearest_at(labels, coord, Edge::Fill(0)));
            }
        }
    }
    let out_vol = vol.with_data(vdata)?;
    let out_labels = LabelVolume::with_affine(dims, labels.spacing(), labels.affine(), ldata)?;
    Ok((out_vol, out_labels))
}

/// Rigid rotation about the volume center in physical (mm) space.
/// Dims are unchanged; out-of-field voxels fill with 0 / background.
pub fn rotate<T: Real>(
    vol: &Volume<T>,
    labels: &LabelVolume,
    angles_deg: [f64; 3],
) -> Result<(Volume<T>, LabelVolume), AugmentError> {
    check_paired(vol, labels)?;
    if angles_deg.iter().any(|a| !a.is_finite()) {
        return Err(AugmentError::BadParameter(format!(
            "rotation angles must be finite, got {angles_deg:?}"
        )));
    }
    if angles_deg == [0.0, 0.0, 0.0] {
        return Ok((vol.clone(), labels.clone()));
    }
    let dims = vol.dims();
    let spacing = vol.spacing();
    let center = [
        (dims[0] - 1) as f64 / 2.0,
        (dims[1] - 1) as f64 / 2.0,
        (dims[2] - 1) as f64 / 2.0,
    ];
    let inv = transpose(rotation_matrix(angles_deg));
    warp_pair(vol, labels, |x, y, z| {
        let d = [
            (x as f64 - center[0]) * spacing[0],
            (y as f64 - center[1]) * spacing[1],
            (z as f64 - center[2]) * spacing[2],
        ];
        let mut coord = [0.0; 3];
        for a in 0..3 {
            let e = inv[a][0] * d[0] + inv[a][1] * d[1] + inv[a][2] * d[2];
            coord[a] = e / spacing[a] + center[a];
        }
        coord
    })
}

/// Zoom about the volume center; factor > 1 enlarges content. Dims are
/// unchanged and the fill rules match [`rotate`].
pub fn scale_spatial<T: Real>(
    vol: &Volume<T>,
    labels: &LabelVolume,
    factor: f64,
) -> Result<(Volume<T>, LabelVolume), AugmentError> {
    check_paired(vol, labels)?;
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::BadParameter(format!(
            "scale factor must be positive, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok((vol.clone(), labels.clone()));
    }
    let dims = vol.dims();
    let center = [
        (dims[0] - 1) as f64 / 2.0,
        (dims[1] - 1) as f64 / 2.0,
        (dims[2] - 1) as f64 / 2.0,
    ];
    warp_pair(vol, labels, |x, y, z| {
        [
            (x as f64 - center[0]) / factor + center[0],
            (y as f64 - center[1]) / factor + center[1],
            (z as f64 - center[2]) / factor + center[2],
        ]
    })
}

fn gaussian_noise_with<T: Real>(
    vol: &Volume<T>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Volume<T>, AugmentError> {
    let data: Vec<T> = vol
        .data()
        .iter()
        .map(|&v| {
            let eps: f64 = rng.sample(StandardNormal);
            T::from_f64_lossy(v.to_f64_lossy() + eps * sigma)
        })
        .collect();
    Ok(vol.with_data(data)?)
}

/// Add i.i.d. Gaussian noise of the given standard deviation, drawn from a
/// generator seeded with `seed`. Labels are untouched by construction.
pub fn add_gaussian_noise<T: Real>(
    vol: &Volume<T>,
    sigma: f64,
    seed: u64,
) -> Result<Volume<T>, AugmentError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(AugmentError::BadParameter(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(vol.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_noise_with(vol, sigma, &mut rng)
}

/// Half-sample symmetric reflection: indices fold back at the grid edges.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// 1D Gaussian kernel truncated at 4 sigma and renormalized to sum 1.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).floor() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    kernel
}

fn blur_axis(data: &mut Vec<f64>, dims: [usize; 3], axis: usize, kernel: &[f64]) {
    let radius = (kernel.len() / 2) as isize;
    let strides = [1usize, dims[0], dims[0] * dims[1]];
    let stride = strides[axis];
    let n = dims[axis];
    let mut out = vec![0.0f64; data.len()];
    let outer = [dims[0], dims[1], dims[2]];
    for z in 0..if axis == 2 { 1 } else { outer[2] } {
        for y in 0..if axis == 1 { 1 } else { outer[1] } {
            for x in 0..if axis == 0 { 1 } else { outer[0] } {
                let base = x + dims[0] * (y + dims[1] * z);
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, &w) in kernel.iter().enumerate() {
                        let src = reflect(i as isize + j as isize - radius, n);
                        acc += w * data[base + src * stride];
                    }
                    out[base + i * stride] = acc;
                }
            }
        }
    }
    *data = out;
}

/// Separable Gaussian blur with the kernel truncated at 4 sigma (in voxels)
/// and reflected edges.
pub fn gaussian_blur<T: Real>(vol: &Volume<T>, sigma: f64) -> Result<Volume<T>, AugmentError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(AugmentError::BadParameter(format!(
            "blur sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 || (4.0 * sigma) < 1.0 {
        return Ok(vol.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let dims = vol.dims();
    let mut data: Vec<f64> = vol.data().iter().map(|v| v.to_f64_lossy()).collect();
    for axis in 0..3 {
        blur_axis(&mut data, dims, axis, &kernel);
    }
    Ok(vol.with_data(data.into_iter().map(T::from_f64_lossy).collect())?)
}

/// Multiply every voxel by a positive factor.
pub fn adjust_brightness<T: Real>(vol: &Volume<T>, factor: f64) -> Result<Volume<T>, AugmentError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::BadParameter(format!(
            "brightness factor must be positive, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(vol.clone());
    }
    let f = T::from_f64_lossy(factor);
    Ok(vol.map_values(|v| v * f)?)
}

/// Scale contrast about the global mean: `mean + factor * (v - mean)`,
/// clamped back into the input value range.
pub fn adjust_contrast<T: Real>(vol: &Volume<T>, factor: f64) -> Result<Volume<T>, AugmentError> {
    if !(factor.is_finite() && factor >= 0.0) {
        return Err(AugmentError::BadParameter(format!(
            "contrast factor must be >= 0, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(vol.clone());
    }
    let mean = vol.mean();
    let (lo, hi) = vol.min_max();
    let f = T::from_f64_lossy(factor);
    Ok(vol.map_values(|v| {
        let out = mean + f * (v - mean);
        if out < lo {
            lo
        } else if out > hi {
            hi
        } else {
            out
        }
    })?)
}

/// Trilinear downsample by `1/downscale` then upsample back to the original
/// grid; dims and spacing are unchanged, high frequencies are attenuated.
pub fn simulate_low_res<T: Real>(vol: &Volume<T>, downscale: f64) -> Result<Volume<T>, AugmentError> {
    if !(downscale.is_finite() && downscale >= 1.0) {
        return Err(AugmentError::BadParameter(format!(
            "low-res downscale must be >= 1, got {downscale}"
        )));
    }
    if downscale == 1.0 {
        return Ok(vol.clone());
    }
    let dims = vol.dims();
    let mut low_dims = [0usize; 3];
    let mut down = [AxisMap {
        scale: 1.0,
        offset: 0.0,
    }; 3];
    let mut up = down;
    for a in 0..3 {
        low_dims[a] = ((dims[a] as f64 / downscale).round().max(1.0)) as usize;
        let r_down = dims[a] as f64 / low_dims[a] as f64;
        let r_up = low_dims[a] as f64 / dims[a] as f64;
        down[a] = AxisMap {
            scale: r_down,
            offset: 0.5 * r_down - 0.5,
        };
        up[a] = AxisMap {
            scale: r_up,
            offset: 0.5 * r_up - 0.5,
        };
    }
    let low_data = sample_axes_trilinear(vol, low_dims, down, Edge::Clamp);
    let low = Volume::new(low_dims, vol.spacing(), low_data)?;
    let restored = sample_axes_trilinear(&low, dims, up, Edge::Clamp);
    Ok(vol.with_data(restored)?)
}

/// Gamma transform `v^gamma` for volumes already min-max normalized to [0,1].
pub fn gamma_transform<T: Real>(vol: &Volume<T>, gamma: f64) -> Result<Volume<T>, AugmentError> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(AugmentError::BadParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if let Some(&bad) = vol
        .data()
        .iter()
        .find(|v| **v < T::zero() || **v > T::one())
    {
        return Err(AugmentError::NotNormalized(bad.to_f64_lossy()));
    }
    if gamma == 1.0 {
        return Ok(vol.clone());
    }
    let g = T::from_f64_lossy(gamma);
    Ok(vol.map_values(|v| v.powf(g))?)
}

/// Flip along each listed axis by exact index reversal.
pub fn mirror<T: Real>(
    vol: &Volume<T>,
    labels: &LabelVolume,
    axes: &[Axis],
) -> Result<(Volume<T>, LabelVolume), AugmentError> {
    check_paired(vol, labels)?;
    if axes.is_empty() {
        return Ok((vol.clone(), labels.clone()));
    }
    let dims = vol.dims();
    let flip = [
        axes.contains(&Axis::X),
        axes.contains(&Axis::Y),
        axes.contains(&Axis::Z),
    ];
    let src = |x: usize, y: usize, z: usize| {
        let sx = if flip[0] { dims[0] - 1 - x } else { x };
        let sy = if flip[1] { dims[1] - 1 - y } else { y };
        let sz = if flip[2] { dims[2] - 1 - z } else { z };
        (sx, sy, sz)
    };
    let n = vol.num_voxels();
    let mut vdata = Vec::with_capacity(n);
    let mut ldata = Vec::with_capacity(n);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let (sx, sy, sz) = src(x, y, z);
                vdata.push(vol.get(sx, sy, sz));
                ldata.push(labels.get(sx, sy, sz));
            }
        }
    }
    let out_vol = vol.with_data(vdata)?;
    let out_labels = LabelVolume::with_affine(dims, labels.spacing(), labels.affine(), ldata)?;
    Ok((out_vol, out_labels))
}

fn default_true() -> bool {
    true
}

fn default_axes() -> Vec<Axis> {
    Axis::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotateConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    pub probability: f64,
    /// Angles drawn uniformly from [-max, +max] per axis, in degrees.
    pub max_degrees: [f64; 3],
}

impl Default for RotateConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            probability: 0.2,
            max_degrees: [30.0, 30.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    pub probability: f64,
    /// Parameter drawn uniformly from [range[0], range[1]].
    pub range: [f64; 2],
}

impl RangeConfig {
    fn new(probability: f64, range: [f64; 2]) -> Self {
        Self {
            enabled: true,
            probability,
            range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Per-axis flip probability; each axis fires independently.
    pub probability: f64,
    #[serde(default = "default_axes")]
    pub axes: Vec<Axis>,
}

impl Default for MirrorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            probability: 0.5,
            axes: Axis::ALL.to_vec(),
        }
    }
}

/// Full augmentation configuration with one seeded stream per transform.
///
/// The defaults follow the common convention for this kind of training
/// pipeline and are overridable through the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub seed: u64,
    pub rotate: RotateConfig,
    pub scale: RangeConfig,
    pub noise: RangeConfig,
    pub blur: RangeConfig,
    pub brightness: RangeConfig,
    pub contrast: RangeConfig,
    pub low_res: RangeConfig,
    pub gamma: RangeConfig,
    pub mirror: MirrorConfig,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            rotate: RotateConfig::default(),
            scale: RangeConfig::new(0.2, [0.7, 1.4]),
            noise: RangeConfig::new(0.1, [0.0, 0.1]),
            blur: RangeConfig::new(0.2, [0.5, 1.0]),
            brightness: RangeConfig::new(0.15, [0.75, 1.25]),
            contrast: RangeConfig::new(0.15, [0.75, 1.25]),
            low_res: RangeConfig::new(0.25, [1.0, 2.0]),
            gamma: RangeConfig::new(0.3, [0.7, 1.5]),
            mirror: MirrorConfig::default(),
        }
    }
}

impl AugmentSpec {
    /// Parse a JSON config; missing fields fall back to the defaults.
    pub fn from_json(json: &str) -> Result<Self, AugmentError> {
        let spec: Self =
            serde_json::from_str(json).map_err(|e| AugmentError::BadSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(AugmentError::BadSpec(format!(
                    "{name}: probability {p} outside [0, 1]"
                )))
            }
        };
        let range = |name: &str, r: [f64; 2], lo_min: f64| {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(AugmentError::BadSpec(format!(
                    "{name}: range {r:?} must satisfy lo <= hi"
                )));
            }
            if r[0] < lo_min {
                return Err(AugmentError::BadSpec(format!(
                    "{name}: range {r:?} must start at {lo_min} or above"
                )));
            }
            Ok(())
        };
        prob("rotate", self.rotate.probability)?;
        if self
            .rotate
            .max_degrees
            .iter()
            .any(|d| !d.is_finite() || *d < 0.0)
        {
            return Err(AugmentError::BadSpec(format!(
                "rotate: max_degrees {:?} must be finite and >= 0",
                self.rotate.max_degrees
            )));
        }
        prob("scale", self.scale.probability)?;
        range("scale", self.scale.range, f64::MIN_POSITIVE)?;
        prob("noise", self.noise.probability)?;
        range("noise", self.noise.range, 0.0)?;
        prob("blur", self.blur.probability)?;
        range("blur", self.blur.range, 0.0)?;
        prob("brightness", self.brightness.probability)?;
        range("brightness", self.brightness.range, f64::MIN_POSITIVE)?;
        prob("contrast", self.contrast.probability)?;
        range("contrast", self.contrast.range, 0.0)?;
        prob("low_res", self.low_res.probability)?;
        range("low_res", self.low_res.range, 1.0)?;
        prob("gamma", self.gamma.probability)?;
        range("gamma", self.gamma.range, f64::MIN_POSITIVE)?;
        prob("mirror", self.mirror.probability)?;
        Ok(())
    }
}

/// Pipeline stage order is fixed for reproducibility.
const STAGE_COUNT: u64 = 9;

/// Independent generator for one (case, stage) cell of the batch.
fn stage_rng(seed: u64, case_index: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case_index.wrapping_mul(STAGE_COUNT).wrapping_add(stage));
    rng
}

fn draw_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + rng.gen::<f64>() * (hi - lo)
    } else {
        lo
    }
}

fn fires(rng: &mut ChaCha8Rng, enabled: bool, probability: f64) -> bool {
    // The draw happens unconditionally so disabling one transform never
    // shifts another transform's stream.
    let u = rng.gen::<f64>();
    enabled && u < probability
}

/// Apply the enabled transforms in the fixed order
/// rotate, scale, noise, blur, brightness, contrast, low-res, gamma, mirror.
///
/// Each transform fires independently with its configured probability and
/// draws parameters uniformly from its range. All randomness derives from
/// `spec.seed` and `case_index`, so identical inputs give bit-identical
/// outputs regardless of batch scheduling.
pub fn apply_pipeline<T: Real>(
    spec: &AugmentSpec,
    case_index: u64,
    vol: &Volume<T>,
    labels: &LabelVolume,
) -> Result<(Volume<T>, LabelVolume), AugmentError> {
    spec.validate()?;
    check_paired(vol, labels)?;
    let mut v = vol.clone();
    let mut l = labels.clone();

    // Stage 0: rotation.
    let mut rng = stage_rng(spec.seed, case_index, 0);
    if fires(&mut rng, spec.rotate.enabled, spec.rotate.probability) {
        let m = spec.rotate.max_degrees;
        let angles = [
            draw_uniform(&mut rng, -m[0], m[0]),
            draw_uniform(&mut rng, -m[1], m[1]),
            draw_uniform(&mut rng, -m[2], m[2]),
        ];
        (v, l) = rotate(&v, &l, angles)?;
    }

    // Stage 1: spatial scaling.
    let mut rng = stage_rng(spec.seed, case_index, 1);
    if fires(&mut rng, spec.scale.enabled, spec.scale.probability) {
        let f = draw_uniform(&mut rng, spec.scale.range[0], spec.scale.range[1]);
        (v, l) = scale_spatial(&v, &l, f)?;
    }

    // Stage 2: additive Gaussian noise.
    let mut rng = stage_rng(spec.seed, case_index, 2);
    if fires(&mut rng, spec.noise.enabled, spec.noise.probability) {
        let sigma = draw_uniform(&mut rng, spec.noise.range[0], spec.noise.range[1]);
        if sigma > 0.0 {
            v = gaussian_noise_with(&v, sigma, &mut rng)?;
        }
    }

    // Stage 3: Gaussian blur.
    let mut rng = stage_rng(spec.seed, case_index, 3);
    if fires(&mut rng, spec.blur.enabled, spec.blur.probability) {
        let sigma = draw_uniform(&mut rng, spec.blur.range[0], spec.blur.range[1]);
        v = gaussian_blur(&v, sigma)?;
    }

    // Stage 4: brightness.
    let mut rng = stage_rng(spec.seed, case_index, 4);
    if fires(&mut rng, spec.brightness.enabled, spec.brightness.probability) {
        let f = draw_uniform(&mut rng, spec.brightness.range[0], spec.brightness.range[1]);
        v = adjust_brightness(&v, f)?;
    }

    // Stage 5: contrast.
    let mut rng = stage_rng(spec.seed, case_index, 5);
    if fires(&mut rng, spec.contrast.enabled, spec.contrast.probability) {
        let f = draw_uniform(&mut rng, spec.contrast.range[0], spec.contrast.range[1]);
        v = adjust_contrast(&v, f)?;
    }

    // Stage 6: low-resolution simulation.
    let mut rng = stage_rng(spec.seed, case_index, 6);
    if fires(&mut rng, spec.low_res.enabled, spec.low_res.probability) {
        let d = draw_uniform(&mut rng, spec.low_res.range[0], spec.low_res.range[1]);
        v = simulate_low_res(&v, d)?;
    }

    // Stage 7: gamma. Earlier intensity stages may have pushed values out
    // of [0,1], so the pipeline form rescales into [0,1], applies the power,
    // and restores the pre-gamma range; the standalone op stays strict.
    let mut rng = stage_rng(spec.seed, case_index, 7);
    if fires(&mut rng, spec.gamma.enabled, spec.gamma.probability) {
        let g = draw_uniform(&mut rng, spec.gamma.range[0], spec.gamma.range[1]);
        let (lo, hi) = v.min_max();
        if hi > lo && g != 1.0 {
            let range = hi - lo;
            let gt = T::from_f64_lossy(g);
            v = v.map_values(|x| {
                let t = ((x - lo) / range).max(T::zero()).min(T::one());
                lo + t.powf(gt) * range
            })?;
        }
    }

    // Stage 8: mirroring, one independent draw per axis.
    let mut rng = stage_rng(spec.seed, case_index, 8);
    let mut axes = Vec::new();
    for axis in Axis::ALL {
        let u = rng.gen::<f64>();
        if spec.mirror.enabled && spec.mirror.axes.contains(&axis) && u < spec.mirror.probability {
            axes.push(axis);
        }
    }
    if !axes.is_empty() {
        (v, l) = mirror(&v, &l, &axes)?;
    }

    Ok((v, l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_pair(dims: [usize; 3]) -> (Volume<f64>, LabelVolume) {
        let n = dims[0] * dims[1] * dims[2];
        let vol = Volume::new(dims, [1.0; 3], (0..n).map(|i| i as f64).collect()).unwrap();
        let labels = LabelVolume::new(dims, [1.0; 3], (0..n).map(|i| (i % 7) as u8).collect())
            .unwrap();
        (vol, labels)
    }

    #[test]
    fn rotate_zero_angles_is_identity() {
        let (vol, labels) = ramp_pair([5, 4, 3]);
        let (v, l) = rotate(&vol, &labels, [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vol);
        assert_eq!(l, labels);
    }

    #[test]
    fn rotate_quarter_turn_matches_index_permutation() {
        let n = 6;
        let (vol, labels) = ramp_pair([n, n, n]);
        let (v, l) = rotate(&vol, &labels, [0.0, 0.0, 90.0]).unwrap();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    // Inverse map of a +90 degree content rotation about z.
                    let expected_v = vol.get(y, n - 1 - x, z);
                    let expected_l = labels.get(y, n - 1 - x, z);
                    assert_eq!(v.get(x, y, z), expected_v, "at {x},{y},{z}");
                    assert_eq!(l.get(x, y, z), expected_l);
                }
            }
        }
    }

    #[test]
    fn rotate_never_invents_labels() {
        let dims = [8, 8, 8];
        let n = 512;
        let vol = Volume::new(dims, [1.0; 3], vec![1.0; n]).unwrap();
        let labels = LabelVolume::new(
            dims,
            [1.0; 3],
            (0..n).map(|i| if i % 5 == 0 { 3 } else { 0 }).collect(),
        )
        .unwrap();
        let (_, l) = rotate(&vol, &labels, [10.0, 20.0, 30.0]).unwrap();
        assert!(l.data().iter().all(|&v| v == 0 || v == 3));
    }

    #[test]
    fn scale_unit_factor_is_identity() {
        let (vol, labels) = ramp_pair([4, 4, 4]);
        let (v, l) = scale_spatial(&vol, &labels, 1.0).unwrap();
        assert_eq!(v, vol);
        assert_eq!(l, labels);
    }

    #[test]
    fn scale_doubles_ball_volume_roughly_eightfold() {
        let n = 48usize;
        let c = (n as f64 - 1.0) / 2.0;
        let r = 8.0f64;
        let mut lab = vec![0u8; n * n * n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2);
                    if d2 <= r * r {
                        lab[x + n * (y + n * z)] = 1;
                    }
                }
            }
        }
        let labels = LabelVolume::new([n, n, n], [1.0; 3], lab).unwrap();
        let vol = Volume::new([n, n, n], [1.0; 3], vec![0.0; n * n * n]).unwrap();
        let before = labels.histogram()[1] as f64;
        let (_, scaled) = scale_spatial(&vol, &labels, 2.0).unwrap();
        let after = scaled.histogram()[1] as f64;
        let ratio = after / before;
        assert!((ratio - 8.0).abs() / 8.0 < 0.15, "ratio = {ratio}");
    }

    #[test]
    fn noise_zero_sigma_is_identity_and_seed_is_deterministic() {
        let (vol, _) = ramp_pair([4, 4, 4]);
        let same = add_gaussian_noise(&vol, 0.0, 7).unwrap();
        assert_eq!(same, vol);
        let a = add_gaussian_noise(&vol, 0.25, 7).unwrap();
        let b = add_gaussian_noise(&vol, 0.25, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, vol);
    }

    #[test]
    fn noise_sample_statistics_match_sigma() {
        let n = 100usize;
        let vol = Volume::new([n, n, n], [1.0; 3], vec![0.0; n * n * n]).unwrap();
        let sigma = 0.1;
        let noisy = add_gaussian_noise(&vol, sigma, 42).unwrap();
        let count = noisy.num_voxels() as f64;
        let mean: f64 = noisy.data().iter().sum::<f64>() / count;
        let var: f64 = noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        let std = var.sqrt();
        assert!(mean.abs() < 4.0 * sigma / count.sqrt(), "mean = {mean}");
        assert!((std - sigma).abs() / sigma < 0.01, "std = {std}");
    }

    #[test]
    fn blur_identity_and_constant_cases() {
        let (vol, _) = ramp_pair([5, 5, 5]);
        assert_eq!(gaussian_blur(&vol, 0.0).unwrap(), vol);

        let constant = Volume::<f64>::new([6, 6, 6], [1.0; 3], vec![2.5; 216]).unwrap();
        let blurred = gaussian_blur(&constant, 0.8).unwrap();
        for &v in blurred.data() {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_impulse_matches_truncated_kernel() {
        let n = 11usize;
        let mut data = vec![0.0; n * n * n];
        data[5 + n * (5 + n * 5)] = 1.0;
        let vol = Volume::new([n, n, n], [1.0; 3], data).unwrap();
        let out = gaussian_blur(&vol, 1.0).unwrap();

        // Oracle: evaluate the truncated, renormalized kernel directly.
        let weights: Vec<f64> = (-4i32..=4).map(|k| (-(k * k) as f64 / 2.0).exp()).collect();
        let z: f64 = weights.iter().sum();
        let w0 = 1.0 / z;
        let center = out.get(5, 5, 5);
        assert!((center - w0.powi(3)).abs() < 1e-12, "center = {center}");

        let total: f64 = out.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-6, "total = {total}");
    }

    #[test]
    fn brightness_scales_values_and_mean() {
        let (vol, _) = ramp_pair([3, 3, 3]);
        assert_eq!(adjust_brightness(&vol, 1.0).unwrap(), vol);
        let doubled = adjust_brightness(&vol, 2.0).unwrap();
        for (a, b) in vol.data().iter().zip(doubled.data()) {
            assert_eq!(*b, a * 2.0);
        }
        assert_eq!(doubled.mean(), vol.mean() * 2.0);
    }

    #[test]
    fn contrast_identity_collapse_and_clamp() {
        let (vol, _) = ramp_pair([3, 3, 3]);
        assert_eq!(adjust_contrast(&vol, 1.0).unwrap(), vol);

        let flat = adjust_contrast(&vol, 0.0).unwrap();
        let mean = vol.mean();
        assert!(flat.data().iter().all(|&v| v == mean));

        let (lo, hi) = vol.min_max();
        let stretched = adjust_contrast(&vol, 3.0).unwrap();
        assert!(stretched.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn low_res_identity_and_constant() {
        let (vol, _) = ramp_pair([6, 6, 6]);
        assert_eq!(simulate_low_res(&vol, 1.0).unwrap(), vol);

        let constant = Volume::<f64>::new([8, 8, 8], [1.0; 3], vec![1.5; 512]).unwrap();
        let out = simulate_low_res(&constant, 1.7).unwrap();
        for &v in out.data() {
            assert!((v - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn low_res_attenuates_checkerboard() {
        let n = 16usize;
        let mut data = vec![0.0f64; n * n * n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    data[x + n * (y + n * z)] = if (x + y + z) % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
        let vol = Volume::new([n, n, n], [1.0; 3], data).unwrap();
        let out = simulate_low_res(&vol, 2.0).unwrap();
        let max_abs = out.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs < 1.0, "max |v| = {max_abs}");
    }

    #[test]
    fn gamma_basics_and_error() {
        let vol = Volume::new([1, 1, 3], [1.0; 3], vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(gamma_transform(&vol, 1.0).unwrap(), vol);
        let squared = gamma_transform(&vol, 2.0).unwrap();
        assert_eq!(squared.data(), &[0.0, 0.25, 1.0]);

        let bad = Volume::new([1, 1, 2], [1.0; 3], vec![0.5, 1.5]).unwrap();
        assert!(matches!(
            gamma_transform(&bad, 2.0),
            Err(AugmentError::NotNormalized(v)) if v == 1.5
        ));
    }

    #[test]
    fn mirror_involution_and_full_reversal() {
        let (vol, labels) = ramp_pair([2, 2, 2]);
        let (idv, idl) = mirror(&vol, &labels, &[]).unwrap();
        assert_eq!(idv, vol);
        assert_eq!(idl, labels);

        let axes = [Axis::X, Axis::Y, Axis::Z];
        let (m1, l1) = mirror(&vol, &labels, &axes).unwrap();
        let reversed: Vec<f64> = vol.data().iter().rev().copied().collect();
        assert_eq!(m1.data(), reversed.as_slice());

        let (m2, l2) = mirror(&m1, &l1, &axes).unwrap();
        assert_eq!(m2, vol);
        assert_eq!(l2, labels);
    }

    #[test]
    fn label_transform_equals_one_hot_indicator_transform() {
        let (vol, labels) = ramp_pair([7, 6, 5]);
        let (_, rotated) = rotate(&vol, &labels, [15.0, -10.0, 25.0]).unwrap();
        // Out-of-field voxels fill with background, so the equivalence is
        // stated for the foreground classes.
        for class in crate::volume::TissueClass::FOREGROUND {
            let indicator: Vec<u8> = labels
                .data()
                .iter()
                .map(|&v| u8::from(v == class.code()))
                .collect();
            let ind_labels =
                LabelVolume::new(labels.dims(), labels.spacing(), indicator).unwrap();
            let (_, ind_rot) = rotate(&vol, &ind_labels, [15.0, -10.0, 25.0]).unwrap();
            let direct: Vec<u8> = rotated
                .data()
                .iter()
                .map(|&v| u8::from(v == class.code()))
                .collect();
            assert_eq!(ind_rot.data(), direct.as_slice(), "class {class:?}");
        }
    }

    #[test]
    fn pipeline_zero_probability_is_identity() {
        let (vol, labels) = ramp_pair([6, 6, 6]);
        let mut spec = AugmentSpec::default();
        spec.rotate.probability = 0.0;
        spec.scale.probability = 0.0;
        spec.noise.probability = 0.0;
        spec.blur.probability = 0.0;
        spec.brightness.probability = 0.0;
        spec.contrast.probability = 0.0;
        spec.low_res.probability = 0.0;
        spec.gamma.probability = 0.0;
        spec.mirror.probability = 0.0;
        let (v, l) = apply_pipeline(&spec, 0, &vol, &labels).unwrap();
        assert_eq!(v, vol);
        assert_eq!(l, labels);
    }

    #[test]
    fn pipeline_same_seed_same_output() {
        let (vol, labels) = ramp_pair([8, 8, 8]);
        let spec = AugmentSpec {
            seed: 1234,
            ..AugmentSpec::default()
        };
        for case in 0..6u64 {
            let (v1, l1) = apply_pipeline(&spec, case, &vol, &labels).unwrap();
            let (v2, l2) = apply_pipeline(&spec, case, &vol, &labels).unwrap();
            assert_eq!(v1, v2);
            assert_eq!(l1, l2);
        }
    }

    #[test]
    fn pipeline_cases_draw_independent_streams() {
        let (vol, labels) = ramp_pair([8, 8, 8]);
        let spec = AugmentSpec {
            seed: 99,
            ..AugmentSpec::default()
        };
        let (v0, _) = apply_pipeline(&spec, 0, &vol, &labels).unwrap();
        let (v1, _) = apply_pipeline(&spec, 1, &vol, &labels).unwrap();
        assert_ne!(v0, v1);
    }

    #[test]
    fn pipeline_preserves_label_closure_and_dims() {
        let dims = [9, 8, 7];
        let n = 504;
        let vol = Volume::new(dims, [1.0; 3], (0..n).map(|i| i as f64).collect()).unwrap();
        // Only labels {0, 3, 5} present in the input.
        let labels = LabelVolume::new(
            dims,
            [1.0; 3],
            (0..n).map(|i| [0u8, 3, 5][i % 3]).collect(),
        )
        .unwrap();
        let spec = AugmentSpec {
            seed: 7,
            ..AugmentSpec::default()
        };
        for case in 0..10u64 {
            let (v, l) = apply_pipeline(&spec, case, &vol, &labels).unwrap();
            assert_eq!(v.dims(), vol.dims());
            assert_eq!(l.dims(), labels.dims());
            // Spatial transforms may introduce background, nothing else.
            assert!(l.data().iter().all(|&code| matches!(code, 0 | 3 | 5)));
        }
    }

    #[test]
    fn spec_validation_rejects_bad_values() {
        let mut spec = AugmentSpec::default();
        spec.noise.probability = 1.5;
        assert!(matches!(spec.validate(), Err(AugmentError::BadSpec(_))));

        let mut spec = AugmentSpec::default();
        spec.gamma.range = [1.5, 0.7];
        assert!(matches!(spec.validate(), Err(AugmentError::BadSpec(_))));

        let mut spec = AugmentSpec::default();
        spec.low_res.range = [0.5, 2.0];
        assert!(matches!(spec.validate(), Err(AugmentError::BadSpec(_))));
    }

    #[test]
    fn spec_json_roundtrip_and_partial_config() {
        let spec = AugmentSpec::default();
        let back = AugmentSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);

        let partial = AugmentSpec::from_json(
            r#"{"seed": 5, "noise": {"probability": 0.9, "range": [0.0, 0.2]}}"#,
        )
        .unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.noise.probability, 0.9);
        assert!(partial.noise.enabled);
        assert_eq!(partial.blur, AugmentSpec::default().blur);
    }
}
