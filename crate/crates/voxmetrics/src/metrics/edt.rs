//! Exact Euclidean distance transform via the separable lower-envelope
//! (squared-distance parabola) method, one pass per axis with per-axis
//! spacing weights. O(n) per line, exact up to floating-point rounding.

use crate::scalar::Real;

/// 1D squared-distance transform over sample positions `i * spacing`.
///
/// `f[i]` holds the squared distance accumulated by earlier passes
/// (infinity where no seed exists); the output is
/// `min_j ((i - j)^2 * spacing^2 + f[j])`.
fn lower_envelope_1d<T: Real>(f: &[T], spacing: f64, out: &mut [T]) {
    let n = f.len();
    // Parabola sites with finite height; an all-infinite line stays infinite.
    let mut sites: Vec<usize> = Vec::with_capacity(n);
    for (i, v) in f.iter().enumerate() {
        if v.is_finite() {
            sites.push(i);
        }
    }
    if sites.is_empty() {
        out.copy_from_slice(f);
        return;
    }

    let pos = |i: usize| i as f64 * spacing;
    let height = |i: usize| f[i].to_f64_lossy();

    // v[k]: site of the k-th envelope parabola; z[k]: left boundary of the
    // interval where it is minimal (z[0] = -inf, right end implicit).
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len());
    v.push(sites[0]);
    z.push(f64::NEG_INFINITY);

    for &q in &sites[1..] {
        let pq = pos(q);
        let fq = height(q);
        loop {
            let k = v.len() - 1;
            let pr = pos(v[k]);
            let s = ((fq + pq * pq) - (height(v[k]) + pr * pr)) / (2.0 * pq - 2.0 * pr);
            // s is finite and z[0] = -inf, so the stack never empties.
            if s <= z[k] {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }

    let mut k = 0usize;
    for (i, slot) in out.iter_mut().enumerate() {
        let x = pos(i);
        while k + 1 < v.len() && z[k + 1] < x {
            k += 1;
        }
        let d = x - pos(v[k]);
        *slot = T::from_f64_lossy(d * d + height(v[k]));
    }
}

/// Squared Euclidean distance (mm^2) from every voxel to the nearest true
/// voxel center. Returns all-infinity when the mask is empty.
pub(crate) fn squared_distance_field<T: Real>(
    mask: &[bool],
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Vec<T> {
    let n = dims[0] * dims[1] * dims[2];
    debug_assert_eq!(mask.len(), n);
    let mut field: Vec<T> = mask
        .iter()
        .map(|&m| if m { T::zero() } else { T::infinity() })
        .collect();

    let strides = [1usize, dims[0], dims[0] * dims[1]];
    let mut line: Vec<T> = Vec::new();
    let mut dist: Vec<T> = Vec::new();

    for axis in 0..3 {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        line.resize(len, T::zero());
        dist.resize(len, T::zero());
        let stride = strides[axis];
        let (da, db) = match axis {
            0 => (dims[1], dims[2]),
            1 => (dims[0], dims[2]),
            _ => (dims[0], dims[1]),
        };
        let (sa, sb) = match axis {
            0 => (strides[1], strides[2]),
            1 => (strides[0], strides[2]),
            _ => (strides[0], strides[1]),
        };
        for b in 0..db {
            for a in 0..da {
                let base = a * sa + b * sb;
                for i in 0..len {
                    line[i] = field[base + i * stride];
                }
                lower_envelope_1d(&line, spacing[axis], &mut dist);
                for i in 0..len {
                    field[base + i * stride] = dist[i];
                }
            }
        }
    }
    field
}
