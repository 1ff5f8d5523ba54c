//! NIfTI-1 header layout, parsing, and encoding.
//!
//! Only the single-file NIfTI-1 variant (`magic == "n+1\0"`) is accepted;
//! paired-file, ANALYZE, and NIfTI-2 streams are rejected. Byte order is
//! detected from `sizeof_hdr` and all fields are normalized to native order.

use super::NiftiError;
use byteorder::{BigEndian, ByteOrder, LittleEndian};

/// NIfTI-1 header size in bytes.
pub const HEADER_SIZE: usize = 348;

/// Data offset written by this crate (header + 4-byte extension flag).
pub const DEFAULT_VOX_OFFSET: u32 = 352;

const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const SROW_X: usize = 280;
    pub const SROW_Y: usize = 296;
    pub const SROW_Z: usize = 312;
    pub const MAGIC: usize = 344;
}

/// Supported NIfTI-1 datatype codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        match code {
            2 => Ok(Self::Uint8),
            4 => Ok(Self::Int16),
            8 => Ok(Self::Int32),
            16 => Ok(Self::Float32),
            64 => Ok(Self::Float64),
            other => Err(NiftiError::UnsupportedDatatype(other)),
        }
    }

    pub const fn code(self) -> i16 {
        match self {
            Self::Uint8 => 2,
            Self::Int16 => 4,
            Self::Int32 => 8,
            Self::Float32 => 16,
            Self::Float64 => 64,
        }
    }

    pub const fn byte_size(self) -> usize {
        match self {
            Self::Uint8 => 1,
            Self::Int16 => 2,
            Self::Int32 => 4,
            Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }

    pub const fn is_integer(self) -> bool {
        matches!(self, Self::Uint8 | Self::Int16 | Self::Int32)
    }
}

/// Byte order of the source stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ByteOrderKind {
    Little,
    Big,
}

/// Validated NIfTI-1 header with fields normalized to native order.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: Datatype,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
}

impl NiftiHeader {
    /// Spatial extents after squeezing trailing singleton dimensions.
    pub fn spatial_dims(&self) -> [usize; 3] {
        [
            self.dim[1] as usize,
            self.dim[2] as usize,
            self.dim[3] as usize,
        ]
    }

    /// Spatial voxel spacing in mm.
    pub fn spacing(&self) -> [f64; 3] {
        [
            f64::from(self.pixdim[1]),
            f64::from(self.pixdim[2]),
            f64::from(self.pixdim[3]),
        ]
    }

    /// Total voxel count of the 3D grid.
    pub fn num_voxels(&self) -> usize {
        let d = self.spatial_dims();
        d[0] * d[1] * d[2]
    }

    /// Affine carried by the header: srow rows when the sform is set,
    /// otherwise a diagonal spacing matrix.
    pub fn affine(&self) -> [[f64; 4]; 3] {
        if self.sform_code > 0 {
            let mut out = [[0.0f64; 4]; 3];
            for (row, srow) in out.iter_mut().zip(self.srow.iter()) {
                for (dst, &v) in row.iter_mut().zip(srow.iter()) {
                    *dst = f64::from(v);
                }
            }
            out
        } else {
            let s = self.spacing();
            [
                [s[0], 0.0, 0.0, 0.0],
                [0.0, s[1], 0.0, 0.0],
                [0.0, 0.0, s[2], 0.0],
            ]
        }
    }
}

/// Parse and validate a 348-byte NIfTI-1 header.
pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    parse_header_order(bytes).map(|(h, _)| h)
}

pub(crate) fn parse_header_order(bytes: &[u8]) -> Result<(NiftiHeader, ByteOrderKind), NiftiError> {
    if bytes.len() != HEADER_SIZE {
        return Err(NiftiError::HeaderLength(bytes.len()));
    }
    let le = LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..offsets::SIZEOF_HDR + 4]);
    let be = BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..offsets::SIZEOF_HDR + 4]);
    let order = if le == HEADER_SIZE as i32 {
        ByteOrderKind::Little
    } else if be == HEADER_SIZE as i32 {
        ByteOrderKind::Big
    } else {
        return Err(NiftiError::BadHeaderSize(le));
    };
    let header = match order {
        ByteOrderKind::Little => parse_fields::<LittleEndian>(bytes)?,
        ByteOrderKind::Big => parse_fields::<BigEndian>(bytes)?,
    };
    Ok((header, order))
}

fn parse_fields<E: ByteOrder>(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[offsets::MAGIC..offsets::MAGIC + 4]);
    // Paired-file "ni1\0" headers are structurally valid but out of scope.
    if &magic != MAGIC_SINGLE {
        return Err(NiftiError::MagicMismatch(magic));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = E::read_i16(&bytes[offsets::DIM + 2 * i..offsets::DIM + 2 * i + 2]);
    }
    validate_dims(&dim)?;

    let datatype = Datatype::from_code(E::read_i16(&bytes[offsets::DATATYPE..offsets::DATATYPE + 2]))?;
    let bitpix = E::read_i16(&bytes[offsets::BITPIX..offsets::BITPIX + 2]);

    let mut pixdim = [0.0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = E::read_f32(&bytes[offsets::PIXDIM + 4 * i..offsets::PIXDIM + 4 * i + 4]);
    }
    for &spacing in &pixdim[1..=3] {
        if !spacing.is_finite() || spacing <= 0.0 {
            return Err(NiftiError::NonPositiveSpacing(spacing));
        }
    }

    let vox_offset = E::read_f32(&bytes[offsets::VOX_OFFSET..offsets::VOX_OFFSET + 4]);
    if !vox_offset.is_finite() || vox_offset.fract() != 0.0 || vox_offset < HEADER_SIZE as f32 {
        return Err(NiftiError::BadVoxOffset(vox_offset));
    }

    let srow = [
        read_row::<E>(&bytes[offsets::SROW_X..offsets::SROW_X + 16]),
        read_row::<E>(&bytes[offsets::SROW_Y..offsets::SROW_Y + 16]),
        read_row::<E>(&bytes[offsets::SROW_Z..offsets::SROW_Z + 16]),
    ];

    Ok(NiftiHeader {
        sizeof_hdr: HEADER_SIZE as i32,
        dim,
        datatype,
        bitpix,
        pixdim,
        vox_offset,
        scl_slope: E::read_f32(&bytes[offsets::SCL_SLOPE..offsets::SCL_SLOPE + 4]),
        scl_inter: E::read_f32(&bytes[offsets::SCL_INTER..offsets::SCL_INTER + 4]),
        qform_code: E::read_i16(&bytes[offsets::QFORM_CODE..offsets::QFORM_CODE + 2]),
        sform_code: E::read_i16(&bytes[offsets::SFORM_CODE..offsets::SFORM_CODE + 2]),
        srow,
        magic,
    })
}

fn read_row<E: ByteOrder>(bytes: &[u8]) -> [f32; 4] {
    let mut row = [0.0f32; 4];
    for (i, v) in row.iter_mut().enumerate() {
        *v = E::read_f32(&bytes[4 * i..4 * i + 4]);
    }
    row
}

/// Rank must reduce to exactly 3 after dropping trailing singleton dims.
fn validate_dims(dim: &[i16; 8]) -> Result<(), NiftiError> {
    let rank = dim[0];
    if !(1..=7).contains(&rank) {
        return Err(NiftiError::BadDim(*dim));
    }
    let mut rank = rank as usize;
    for axis in 1..=rank {
        if dim[axis] < 1 {
            return Err(NiftiError::BadDim(*dim));
        }
    }
    while rank > 3 && dim[rank] == 1 {
        rank -= 1;
    }
    if rank != 3 {
        return Err(NiftiError::BadDim(*dim));
    }
    Ok(())
}

/// Encode a header as 348 little-endian bytes.
pub fn encode_header(header: &NiftiHeader) -> [u8; HEADER_SIZE] {
    let mut buf = [0u8; HEADER_SIZE];
    LittleEndian::write_i32(
        &mut buf[offsets::SIZEOF_HDR..offsets::SIZEOF_HDR + 4],
        HEADER_SIZE as i32,
    );
    for (i, &d) in header.dim.iter().enumerate() {
        LittleEndian::write_i16(&mut buf[offsets::DIM + 2 * i..offsets::DIM + 2 * i + 2], d);
    }
    LittleEndian::write_i16(
        &mut buf[offsets::DATATYPE..offsets::DATATYPE + 2],
        header.datatype.code(),
    );
    LittleEndian::write_i16(&mut buf[offsets::BITPIX..offsets::BITPIX + 2], header.bitpix);
    for (i, &p) in header.pixdim.iter().enumerate() {
        LittleEndian::write_f32(
            &mut buf[offsets::PIXDIM + 4 * i..offsets::PIXDIM + 4 * i + 4],
            p,
        );
    }
    LittleEndian::write_f32(
        &mut buf[offsets::VOX_OFFSET..offsets::VOX_OFFSET + 4],
        header.vox_offset,
    );
    LittleEndian::write_f32(
        &mut buf[offsets::SCL_SLOPE..offsets::SCL_SLOPE + 4],
        header.scl_slope,
    );
    LittleEndian::write_f32(
        &mut buf[offsets::SCL_INTER..offsets::SCL_INTER + 4],
        header.scl_inter,
    );
    LittleEndian::write_i16(
        &mut buf[offsets::QFORM_CODE..offsets::QFORM_CODE + 2],
        header.qform_code,
    );
    LittleEndian::write_i16(
        &mut buf[offsets::SFORM_CODE..offsets::SFORM_CODE + 2],
        header.sform_code,
    );
    for (row, base) in [offsets::SROW_X, offsets::SROW_Y, offsets::SROW_Z]
        .into_iter()
        .enumerate()
    {
        for (i, &v) in header.srow[row].iter().enumerate() {
            LittleEndian::write_f32(&mut buf[base + 4 * i..base + 4 * i + 4], v);
        }
    }
    buf[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(&header.magic);
    buf
}
