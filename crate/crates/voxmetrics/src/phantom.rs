//! Deterministic synthetic brain phantom: a nested-ellipsoid six-class
//! label map with a matched noisy intensity volume.
//!
//! The anatomy is parametric in physical coordinates (fractions of the
//! field of view), so the same spec rendered at two spacings approximates
//! the same object; that is what makes cross-resolution resampling tests
//! meaningful. Layout:
//!
//! - cerebrum ellipsoid at (0.50, 0.54, 0.62) of the extent with semi-axes
//!   (0.36, 0.32, 0.30): DGM core (r <= 0.30), WM (r <= 0.62),
//!   GM shell (r <= 0.86), CSF shell (r <= 1);
//! - brainstem: vertical cylinder at (0.50, 0.42) with radius 0.09 of the
//!   smaller in-plane extent, z in [0.10, 0.45], filling background only;
//! - cerebellum: ellipsoid at (0.50, 0.30, 0.38) with semi-axes
//!   (0.17, 0.14, 0.12), filling background only.
//!
//! Intensities are the class mean plus seeded Gaussian noise, quantized to
//! f32 so that written files reproduce the in-memory payload bit-exactly.

use crate::volume::{LabelVolume, TissueClass, Volume, VolumeError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum PhantomError {
    #[error("phantom dims must be at least 16 per axis, got {0:?}")]
    SpecTooSmall([usize; 3]),
    #[error("class intensities must be distinct")]
    DuplicateIntensity,
    #[error("noise sigma must be finite and >= 0, got {0}")]
    BadNoiseSigma(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Parameters of one synthetic case.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub seed: u64,
    pub noise_sigma: f64,
    pub class_intensity: BTreeMap<TissueClass, f64>,
}

impl PhantomSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], seed: u64) -> Self {
        let class_intensity = [
            (TissueClass::Background, 0.0),
            (TissueClass::Csf, 0.15),
            (TissueClass::Gm, 0.45),
            (TissueClass::Wm, 0.80),
            (TissueClass::Dgm, 0.60),
            (TissueClass::Brainstem, 0.70),
            (TissueClass::Cerebellum, 0.50),
        ]
        .into_iter()
        .collect();
        Self {
            dims,
            spacing,
            seed,
            noise_sigma: 0.02,
            class_intensity,
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        if self.dims.iter().any(|&d| d < 16) {
            return Err(PhantomError::SpecTooSmall(self.dims));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(PhantomError::BadNoiseSigma(self.noise_sigma));
        }
        let mut means: Vec<f64> = self.class_intensity.values().copied().collect();
        means.sort_by(|a, b| a.partial_cmp(b).expect("finite intensities"));
        if means.windows(2).any(|w| w[0] == w[1]) {
            return Err(PhantomError::DuplicateIntensity);
        }
        Ok(())
    }
}

fn classify(p: [f64; 3], extent: [f64; 3]) -> TissueClass {
    let frac = [p[0] / extent[0], p[1] / extent[1], p[2] / extent[2]];

    // Cerebrum: nested shells of one ellipsoid.
    let center = [0.50, 0.54, 0.62];
    let semi = [0.36, 0.32, 0.30];
    let mut r2 = 0.0;
    for a in 0..3 {
        let d = (frac[a] - center[a]) / semi[a];
        r2 += d * d;
    }
    if r2 <= 1.0 {
        let r = r2.sqrt();
        return if r <= 0.30 {
            TissueClass::Dgm
        } else if r <= 0.62 {
            TissueClass::Wm
        } else if r <= 0.86 {
            TissueClass::Gm
        } else {
            TissueClass::Csf
        };
    }

    // Brainstem cylinder, below the cerebrum.
    let radius = 0.09 * extent[0].min(extent[1]);
    let dx = p[0] - 0.50 * extent[0];
    let dy = p[1] - 0.42 * extent[1];
    if dx * dx + dy * dy <= radius * radius && frac[2] >= 0.10 && frac[2] <= 0.45 {
        return TissueClass::Brainstem;
    }

    // Cerebellum, posterior-inferior ellipsoid.
    let center = [0.50, 0.30, 0.38];
    let semi = [0.17, 0.14, 0.12];
    let mut r2 = 0.0;
    for a in 0..3 {
        let d = (frac[a] - center[a]) / semi[a];
        r2 += d * d;
    }
    if r2 <= 1.0 {
        return TissueClass::Cerebellum;
    }

    TissueClass::Background
}

/// Generate the labelled phantom and its noisy intensity volume.
pub fn generate(spec: &PhantomSpec) -> Result<(Volume<f64>, LabelVolume), PhantomError> {
    spec.validate()?;
    let dims = spec.dims;
    let extent = [
        dims[0] as f64 * spec.spacing[0],
        dims[1] as f64 * spec.spacing[1],
        dims[2] as f64 * spec.spacing[2],
    ];
    let n = dims[0] * dims[1] * dims[2];
    let mut labels = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [
                    (x as f64 + 0.5) * spec.spacing[0],
                    (y as f64 + 0.5) * spec.spacing[1],
                    (z as f64 + 0.5) * spec.spacing[2],
                ];
                let class = classify(p, extent);
                labels.push(class.code());
                let mean = spec.class_intensity.get(&class).copied().unwrap_or(0.0);
                let eps: f64 = rng.sample(StandardNormal);
                // Quantize to f32 so NIfTI round-trips are bit-exact.
                let value = (mean + eps * spec.noise_sigma) as f32;
                intensity.push(f64::from(value));
            }
        }
    }
    let volume = Volume::new(dims, spec.spacing, intensity)?;
    let labels = LabelVolume::new(dims, spec.spacing, labels)?;
    Ok((volume, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_case;
    use crate::volume::resample_labels;

    #[test]
    fn default_phantom_contains_all_seven_labels() {
        let spec = PhantomSpec::new([64, 64, 64], [1.0; 3], 7);
        let (_, labels) = generate(&spec).unwrap();
        let hist = labels.histogram();
        for (code, &count) in hist.iter().enumerate() {
            assert!(count > 0, "label {code} missing: {hist:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PhantomSpec::new([32, 32, 32], [1.0; 3], 99);
        let (v1, l1) = generate(&spec).unwrap();
        let (v2, l2) = generate(&spec).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn small_spec_is_rejected() {
        let spec = PhantomSpec::new([15, 64, 64], [1.0; 3], 0);
        assert!(matches!(generate(&spec), Err(PhantomError::SpecTooSmall(_))));
    }

    #[test]
    fn duplicate_intensities_are_rejected() {
        let mut spec = PhantomSpec::new([32, 32, 32], [1.0; 3], 0);
        spec.class_intensity.insert(TissueClass::Csf, 0.45); // collides with GM
        assert!(matches!(
            generate(&spec),
            Err(PhantomError::DuplicateIntensity)
        ));
    }

    #[test]
    fn labels_partition_the_grid() {
        let spec = PhantomSpec::new([48, 48, 48], [1.0; 3], 3);
        let (_, labels) = generate(&spec).unwrap();
        let hist = labels.histogram();
        assert_eq!(hist.iter().sum::<usize>(), labels.num_voxels());
    }

    #[test]
    fn cross_resolution_physical_volumes_agree() {
        // Same physical object sampled at 0.5 mm and 1.0 mm.
        let fine = PhantomSpec::new([64, 64, 64], [0.5; 3], 11);
        let coarse = PhantomSpec::new([32, 32, 32], [1.0; 3], 11);
        let (_, fine_labels) = generate(&fine).unwrap();
        let (_, coarse_labels) = generate(&coarse).unwrap();
        let fine_hist = fine_labels.histogram();
        let coarse_hist = coarse_labels.histogram();
        for code in 1..7 {
            let fine_vol = fine_hist[code] as f64 * fine_labels.voxel_volume();
            let coarse_vol = coarse_hist[code] as f64 * coarse_labels.voxel_volume();
            let rel = (fine_vol - coarse_vol).abs() / fine_vol;
            assert!(
                rel < 0.10,
                "label {code}: {fine_vol:.1} vs {coarse_vol:.1} mm^3 ({rel:.3})"
            );
        }
    }

    #[test]
    fn label_resampling_preserves_class_volumes_within_5_percent() {
        let spec = PhantomSpec::new([64, 64, 64], [0.5; 3], 21);
        let (_, labels) = generate(&spec).unwrap();
        let coarse = resample_labels(&labels, [1.0; 3]).unwrap();
        let fine_hist = labels.histogram();
        let coarse_hist = coarse.histogram();
        for code in 0..7 {
            if fine_hist[code] < 100 {
                continue;
            }
            let fine_vol = fine_hist[code] as f64 * labels.voxel_volume();
            let coarse_vol = coarse_hist[code] as f64 * coarse.voxel_volume();
            let rel = (fine_vol - coarse_vol).abs() / fine_vol;
            assert!(
                rel < 0.05,
                "label {code}: {fine_vol:.1} vs {coarse_vol:.1} mm^3 ({rel:.3})"
            );
        }
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let spec = PhantomSpec::new([32, 32, 32], [1.0; 3], 5);
        let (_, labels) = generate(&spec).unwrap();
        let record = evaluate_case(&labels, &labels, "phantom", "self").unwrap();
        for cm in &record.per_class {
            if cm.dsc.is_some() {
                assert_eq!(cm.dsc, Some(1.0));
                assert_eq!(cm.hd95, Some(0.0));
            }
        }
    }
}
