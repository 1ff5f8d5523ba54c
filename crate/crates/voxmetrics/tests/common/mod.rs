//! Oracles for the integration and acceptance suites.
//!
//! Everything here recomputes expected values from first principles
//! (exhaustive scans, all-pairs distances, numeric quadrature) and stays
//! independent of the library's implementation paths.

use rand::rngs::StdRng;
use rand::Rng;
use voxmetrics::LabelVolume;

/// O(n^2) nearest-true-voxel scan; distances in mm.
pub fn brute_force_edt(mask: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut seeds = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if mask[x + dims[0] * (y + dims[1] * z)] {
                    seeds.push([x as f64, y as f64, z as f64]);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(mask.len());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = [x as f64, y as f64, z as f64];
                let mut best = f64::INFINITY;
                for s in &seeds {
                    let dx = (p[0] - s[0]) * spacing[0];
                    let dy = (p[1] - s[1]) * spacing[1];
                    let dz = (p[2] - s[2]) * spacing[2];
                    best = best.min((dx * dx + dy * dy + dz * dz).sqrt());
                }
                out.push(best);
            }
        }
    }
    out
}

/// Border voxels under 6-connectivity; the grid edge counts as outside.
pub fn brute_force_surface(mask: &[bool], dims: [usize; 3]) -> Vec<[usize; 3]> {
    let at = |x: isize, y: isize, z: isize| -> bool {
        if x < 0
            || y < 0
            || z < 0
            || x >= dims[0] as isize
            || y >= dims[1] as isize
            || z >= dims[2] as isize
        {
            return false;
        }
        mask[x as usize + dims[0] * (y as usize + dims[1] * z as usize)]
    };
    let mut out = Vec::new();
    for z in 0..dims[2] as isize {
        for y in 0..dims[1] as isize {
            for x in 0..dims[0] as isize {
                if !at(x, y, z) {
                    continue;
                }
                let exposed = !at(x - 1, y, z)
                    || !at(x + 1, y, z)
                    || !at(x, y - 1, z)
                    || !at(x, y + 1, z)
                    || !at(x, y, z - 1)
                    || !at(x, y, z + 1);
                if exposed {
                    out.push([x as usize, y as usize, z as usize]);
                }
            }
        }
    }
    out
}

/// Linear-interpolation percentile at rank (p/100)(n-1), re-derived here.
pub fn percentile_oracle(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        values[lo]
    } else {
        values[lo] + frac * (values[lo + 1] - values[lo])
    }
}

/// All-pairs brute-force HD95 between class masks (None when both empty).
pub fn brute_force_hd95(
    pred_mask: &[bool],
    gt_mask: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Option<f64> {
    let pred_any = pred_mask.iter().any(|&m| m);
    let gt_any = gt_mask.iter().any(|&m| m);
    match (pred_any, gt_any) {
        (false, false) => return None,
        (true, true) => {}
        _ => return Some(f64::INFINITY),
    }
    let pred_surface = brute_force_surface(pred_mask, dims);
    let gt_surface = brute_force_surface(gt_mask, dims);
    let nearest = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|a| {
                let mut best = f64::INFINITY;
                for b in to {
                    let dx = (a[0] as f64 - b[0] as f64) * spacing[0];
                    let dy = (a[1] as f64 - b[1] as f64) * spacing[1];
                    let dz = (a[2] as f64 - b[2] as f64) * spacing[2];
                    best = best.min((dx * dx + dy * dy + dz * dz).sqrt());
                }
                best
            })
            .collect()
    };
    let mut forward = nearest(&pred_surface, &gt_surface);
    let mut backward = nearest(&gt_surface, &pred_surface);
    let f = percentile_oracle(&mut forward, 95.0);
    let b = percentile_oracle(&mut backward, 95.0);
    Some(f.max(b))
}

/// Classical maximum Hausdorff distance between class-mask surfaces.
pub fn brute_force_hausdorff_max(
    pred_mask: &[bool],
    gt_mask: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> f64 {
    let pred_surface = brute_force_surface(pred_mask, dims);
    let gt_surface = brute_force_surface(gt_mask, dims);
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| -> f64 {
        from.iter()
            .map(|a| {
                let mut best = f64::INFINITY;
                for b in to {
                    let dx = (a[0] as f64 - b[0] as f64) * spacing[0];
                    let dy = (a[1] as f64 - b[1] as f64) * spacing[1];
                    let dz = (a[2] as f64 - b[2] as f64) * spacing[2];
                    best = best.min((dx * dx + dy * dy + dz * dz).sqrt());
                }
                best
            })
            .fold(0.0f64, f64::max)
    };
    directed(&pred_surface, &gt_surface).max(directed(&gt_surface, &pred_surface))
}

/// Direct set-arithmetic Dice (None when both masks are empty).
pub fn set_dice(pred_mask: &[bool], gt_mask: &[bool]) -> Option<f64> {
    let inter = pred_mask
        .iter()
        .zip(gt_mask)
        .filter(|(&p, &g)| p && g)
        .count();
    let a = pred_mask.iter().filter(|&&m| m).count();
    let b = gt_mask.iter().filter(|&&m| m).count();
    if a + b == 0 {
        None
    } else {
        Some(2.0 * inter as f64 / (a + b) as f64)
    }
}

/// Direct set-arithmetic IoU (None when both masks are empty).
pub fn set_iou(pred_mask: &[bool], gt_mask: &[bool]) -> Option<f64> {
    let inter = pred_mask
        .iter()
        .zip(gt_mask)
        .filter(|(&p, &g)| p && g)
        .count();
    let union = pred_mask
        .iter()
        .zip(gt_mask)
        .filter(|(&p, &g)| p || g)
        .count();
    if union == 0 {
        None
    } else {
        Some(inter as f64 / union as f64)
    }
}

/// Composite Simpson quadrature.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Standard-normal survival by quadrature.
pub fn normal_sf_quadrature(z: f64) -> f64 {
    let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    simpson(pdf, z, z + 45.0, 400_000)
}

/// Random label volume over codes 0..max_label with an f32-exact spacing.
pub fn random_label_volume(rng: &mut StdRng, max_dim: usize, max_label: u8) -> LabelVolume {
    let dims = [
        rng.gen_range(4..=max_dim),
        rng.gen_range(4..=max_dim),
        rng.gen_range(4..=max_dim),
    ];
    let spacing = [
        f64::from(rng.gen_range(0.5f32..2.0)),
        f64::from(rng.gen_range(0.5f32..2.0)),
        f64::from(rng.gen_range(0.5f32..2.0)),
    ];
    let n = dims[0] * dims[1] * dims[2];
    let data: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=max_label)).collect();
    LabelVolume::new(dims, spacing, data).unwrap()
}

/// Byte-swap every multi-byte field of a little-endian single-file NIfTI-1
/// stream (header and payload), producing its big-endian twin.
pub fn byte_swap_nifti(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let mut swap = |start: usize, width: usize, count: usize| {
        for i in 0..count {
            out[start + i * width..start + (i + 1) * width].reverse();
        }
    };
    swap(0, 4, 1); // sizeof_hdr
    swap(32, 4, 1); // extents
    swap(36, 2, 1); // session_error
    swap(40, 2, 8); // dim
    swap(56, 4, 3); // intent_p1..p3
    swap(68, 2, 3); // intent_code, datatype, bitpix
    swap(74, 2, 1); // slice_start
    swap(76, 4, 8); // pixdim
    swap(108, 4, 3); // vox_offset, scl_slope, scl_inter
    swap(120, 2, 1); // slice_end
    swap(124, 4, 6); // cal_max..glmin
    swap(252, 2, 2); // qform_code, sform_code
    swap(256, 4, 18); // quaterns, qoffsets, srows
    // magic at 344 is byte-oriented; payload elements follow vox_offset.
    let datatype = i16::from_le_bytes([bytes[70], bytes[71]]);
    let elem = match datatype {
        2 => 1usize,
        4 => 2,
        8 => 4,
        16 => 4,
        64 => 8,
        other => panic!("unsupported datatype {other} in fixture"),
    };
    let vox_offset = f32::from_le_bytes([bytes[108], bytes[109], bytes[110], bytes[111]]) as usize;
    if elem > 1 {
        let n = (bytes.len() - vox_offset) / elem;
        let mut swap_payload = |start: usize, width: usize, count: usize| {
            for i in 0..count {
                out[start + i * width..start + (i + 1) * width].reverse();
            }
        };
        swap_payload(vox_offset, elem, n);
    }
    out
}
