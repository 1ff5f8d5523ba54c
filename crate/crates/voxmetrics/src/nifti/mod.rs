//! NIfTI-1 file I/O for intensity and label volumes.
//!
//! Reading accepts plain `.nii` and gzip streams; gzip is detected from the
//! 0x1F 0x8B magic bytes, not the file extension. Writing emits single-file
//! NIfTI-1, little-endian, with intensity data as float32 (slope 1, inter 0)
//! and labels as uint8; a trailing `.gz` extension selects gzip output.

mod header;

pub use header::{encode_header, parse_header, Datatype, NiftiHeader, HEADER_SIZE};

use crate::scalar::Real;
use crate::volume::{LabelVolume, Volume, VolumeError, MAX_LABEL};
use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::{Compression, GzBuilder};
use header::ByteOrderKind;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum NiftiError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("header buffer must be 348 bytes, got {0}")]
    HeaderLength(usize),
    #[error("sizeof_hdr is not 348 under either byte order (read {0})")]
    BadHeaderSize(i32),
    #[error("magic is {0:?}, expected \"n+1\\0\"")]
    MagicMismatch([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("dim {0:?} is not reducible to a 3D grid")]
    BadDim([i16; 8]),
    #[error("spatial pixdim must be positive, got {0}")]
    NonPositiveSpacing(f32),
    #[error("vox_offset {0} is not a valid data offset")]
    BadVoxOffset(f32),
    #[error("file truncated: need {expected} data bytes, found {got}")]
    TruncatedData { expected: usize, got: usize },
    #[error("label file stores non-integral value {0}")]
    NonIntegerLabels(f64),
    #[error("label value {0} outside the tissue code range 0..={MAX_LABEL}")]
    BadLabelValue(f64),
    #[error("label file must not be intensity-scaled (slope {slope}, inter {inter})")]
    BadLabelScaling { slope: f32, inter: f32 },
    #[error("dim {0} too large for NIfTI-1 (max {max})", max = i16::MAX)]
    DimTooLarge(usize),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Whole file content with gzip transparently removed.
fn read_raw(path: &Path) -> Result<Vec<u8>, NiftiError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B {
        let mut out = Vec::new();
        MultiGzDecoder::new(&bytes[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Header plus the raw element bytes, bounds-checked against the header.
fn read_parts(path: &Path) -> Result<(NiftiHeader, ByteOrderKind, Vec<u8>), NiftiError> {
    let raw = read_raw(path)?;
    if raw.len() < HEADER_SIZE {
        return Err(NiftiError::HeaderLength(raw.len()));
    }
    let (hdr, order) = header::parse_header_order(&raw[..HEADER_SIZE])?;
    let offset = hdr.vox_offset as usize;
    let need = hdr.num_voxels() * hdr.datatype.byte_size();
    if raw.len() < offset + need {
        return Err(NiftiError::TruncatedData {
            expected: need,
            got: raw.len().saturating_sub(offset),
        });
    }
    let data = raw[offset..offset + need].to_vec();
    Ok((hdr, order, data))
}

fn decode_elements(bytes: &[u8], datatype: Datatype, order: ByteOrderKind) -> Vec<f64> {
    match order {
        ByteOrderKind::Little => decode_with::<LittleEndian>(bytes, datatype),
        ByteOrderKind::Big => decode_with::<BigEndian>(bytes, datatype),
    }
}

fn decode_with<E: ByteOrder>(bytes: &[u8], datatype: Datatype) -> Vec<f64> {
    match datatype {
        Datatype::Uint8 => bytes.iter().map(|&b| f64::from(b)).collect(),
        Datatype::Int16 => bytes
            .chunks_exact(2)
            .map(|c| f64::from(E::read_i16(c)))
            .collect(),
        Datatype::Int32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(E::read_i32(c)))
            .collect(),
        Datatype::Float32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(E::read_f32(c)))
            .collect(),
        Datatype::Float64 => bytes.chunks_exact(8).map(|c| E::read_f64(c)).collect(),
    }
}

/// Read an intensity volume. `scl_slope`/`scl_inter` are applied when the
/// slope is nonzero; voxel data arrives in the canonical x-fastest layout.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume<f64>, NiftiError> {
    let (hdr, order, bytes) = read_parts(path.as_ref())?;
    let mut values = decode_elements(&bytes, hdr.datatype, order);
    let slope = f64::from(hdr.scl_slope);
    let inter = f64::from(hdr.scl_inter);
    if hdr.scl_slope != 0.0 && (slope != 1.0 || inter != 0.0) {
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    Ok(Volume::with_affine(
        hdr.spatial_dims(),
        hdr.spacing(),
        hdr.affine(),
        values,
    )?)
}

/// Read a label volume. The file must carry unscaled integral values in the
/// tissue code range; float payloads are accepted only when every value is
/// integral.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume, NiftiError> {
    let (hdr, order, bytes) = read_parts(path.as_ref())?;
    if !(hdr.scl_slope == 0.0 || hdr.scl_slope == 1.0) || hdr.scl_inter != 0.0 {
        return Err(NiftiError::BadLabelScaling {
            slope: hdr.scl_slope,
            inter: hdr.scl_inter,
        });
    }
    let values = decode_elements(&bytes, hdr.datatype, order);
    let mut labels = Vec::with_capacity(values.len());
    for v in values {
        if !hdr.datatype.is_integer() && v.fract() != 0.0 {
            return Err(NiftiError::NonIntegerLabels(v));
        }
        if v < 0.0 || v > f64::from(MAX_LABEL) {
            return Err(NiftiError::BadLabelValue(v));
        }
        labels.push(v as u8);
    }
    Ok(LabelVolume::with_affine(
        hdr.spatial_dims(),
        hdr.spacing(),
        hdr.affine(),
        labels,
    )?)
}

fn build_header(
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: [[f64; 4]; 3],
    datatype: Datatype,
) -> Result<NiftiHeader, NiftiError> {
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for (a, &d) in dims.iter().enumerate() {
        if d > i16::MAX as usize {
            return Err(NiftiError::DimTooLarge(d));
        }
        dim[a + 1] = d as i16;
    }
    let mut pixdim = [0.0f32; 8];
    pixdim[0] = 1.0;
    for (a, &s) in spacing.iter().enumerate() {
        pixdim[a + 1] = s as f32;
    }
    let mut srow = [[0.0f32; 4]; 3];
    for (row, arow) in srow.iter_mut().zip(affine.iter()) {
        for (dst, &v) in row.iter_mut().zip(arow.iter()) {
            *dst = v as f32;
        }
    }
    Ok(NiftiHeader {
        sizeof_hdr: HEADER_SIZE as i32,
        dim,
        datatype,
        bitpix: (datatype.byte_size() * 8) as i16,
        pixdim,
        vox_offset: header::DEFAULT_VOX_OFFSET as f32,
        scl_slope: 1.0,
        scl_inter: 0.0,
        qform_code: 0,
        sform_code: 1,
        srow,
        magic: *b"n+1\0",
    })
}

fn write_file(path: &Path, header: &NiftiHeader, payload: &[u8]) -> Result<(), NiftiError> {
    let mut stream = Vec::with_capacity(header::DEFAULT_VOX_OFFSET as usize + payload.len());
    stream.extend_from_slice(&encode_header(header));
    stream.extend_from_slice(&[0u8; 4]); // no extensions
    stream.extend_from_slice(payload);

    let file = File::create(path)?;
    let gzip = path
        .file_name()
        .map(|n| n.to_string_lossy().ends_with(".gz"))
        .unwrap_or(false);
    if gzip {
        // mtime pinned to zero so reruns are byte-identical.
        let mut enc = GzBuilder::new().mtime(0).write(file, Compression::default());
        enc.write_all(&stream)?;
        enc.finish()?;
    } else {
        let mut file = file;
        file.write_all(&stream)?;
    }
    Ok(())
}

/// Write an intensity volume as float32 NIfTI-1 (slope 1, inter 0).
pub fn write_volume<T: Real>(vol: &Volume<T>, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let header = build_header(vol.dims(), vol.spacing(), vol.affine(), Datatype::Float32)?;
    let mut payload = Vec::with_capacity(vol.num_voxels() * 4);
    for &v in vol.data() {
        let mut buf = [0u8; 4];
        LittleEndian::write_f32(&mut buf, v.to_f64_lossy() as f32);
        payload.extend_from_slice(&buf);
    }
    write_file(path.as_ref(), &header, &payload)
}

/// Write a label volume as uint8 NIfTI-1.
pub fn write_labels(labels: &LabelVolume, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let header = build_header(
        labels.dims(),
        labels.spacing(),
        labels.affine(),
        Datatype::Uint8,
    )?;
    write_file(path.as_ref(), &header, labels.data())
}
