//! Minimal NIfTI-1 reader: little-endian, uncompressed, float32 or uint8,
//! orientation ignored.

use std::fs;
use std::path::Path;

use super::{VolumeHeader, VolumeKind};
use crate::error::{Error, Result};
use crate::volume::{Dims, GridSpacing, VoxelVolume};

const HEADER_SIZE: usize = 348;
const DT_UINT8: i16 = 2;
const DT_FLOAT32: i16 = 16;

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<(VoxelVolume, VolumeHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(format!(
            "{}: expected at least {HEADER_SIZE} header bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let sizeof_hdr = i32_at(&bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == HEADER_SIZE as i32 {
            return Err(Error::Unsupported("big-endian NIfTI".into()));
        }
        return Err(Error::format(format!("{}: sizeof_hdr is {sizeof_hdr}, not 348", path.display())));
    }
    let magic = &bytes[344..348];
    let single_file = match magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => return Err(Error::format(format!("{}: NIfTI magic mismatch", path.display()))),
    };

    let ndim = i16_at(&bytes, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::format(format!("{}: dim[0] = {ndim}", path.display())));
    }
    let mut extent = [1usize; 3];
    for a in 0..ndim as usize {
        let n = i16_at(&bytes, 42 + 2 * a);
        if n < 1 {
            return Err(Error::format(format!("{}: dim[{}] = {n}", path.display(), a + 1)));
        }
        if a < 3 {
            extent[a] = n as usize;
        } else if n > 1 {
            return Err(Error::Unsupported(format!("NIfTI with dim[{}] = {n}", a + 1)));
        }
    }
    let dims = Dims::new(extent[0], extent[1], extent[2])?;
    let pix = [f32_at(&bytes, 80), f32_at(&bytes, 84), f32_at(&bytes, 88)];
    let spacing = GridSpacing::new(pix[0].abs() as f64, pix[1].abs() as f64, pix[2].abs() as f64)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;

    let datatype = i16_at(&bytes, 70);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_FLOAT32 => 4,
        other => return Err(Error::Unsupported(format!("NIfTI datatype {other}"))),
    };
    let (slope, inter) = (f32_at(&bytes, 112), f32_at(&bytes, 116));
    let vox_offset = f32_at(&bytes, 108);
    let (data_bytes, offset) = if single_file {
        if !(vox_offset >= HEADER_SIZE as f32) {
            return Err(Error::format(format!("{}: vox_offset {vox_offset}", path.display())));
        }
        (bytes, vox_offset as usize)
    } else {
        let img = path.with_extension("img");
        let b = fs::read(&img).map_err(|e| Error::format(format!("cannot read {}: {e}", img.display())))?;
        (b, vox_offset.max(0.0) as usize)
    };
    let expected = dims.len() * width;
    let available = data_bytes.len().saturating_sub(offset);
    if available < expected {
        return Err(Error::format(format!(
            "{}: expected {expected} data bytes, found {available}",
            path.display()
        )));
    }
    let body = &data_bytes[offset..offset + expected];
    let mut data: Vec<f64> = match datatype {
        DT_UINT8 => body.iter().map(|&b| b as f64).collect(),
        _ => body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect(),
    };
    if slope.is_finite() && slope != 0.0 && !(slope == 1.0 && inter == 0.0) {
        let (s, i) = (slope as f64, if inter.is_finite() { inter as f64 } else { 0.0 });
        data.iter_mut().for_each(|v| *v = *v * s + i);
    }
    let vol = VoxelVolume::from_data(dims, spacing, data)?;
    Ok((vol, VolumeHeader::new(dims, spacing, VolumeKind::Raw)))
}
