use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use super::VolumeHeader;
use crate::error::{Error, Result};
use crate::volume::VoxelVolume;

/// `(header, data)` paths for a raw volume given either file or the bare
/// basename.
pub fn volume_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s: OsString = base.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".json"), with(".raw"))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<(VoxelVolume, VolumeHeader)> {
    let (header_path, data_path) = volume_paths(path);
    let text = fs::read_to_string(&header_path)
        .map_err(|e| Error::format(format!("cannot read header {}: {e}", header_path.display())))?;
    let header: VolumeHeader = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("bad header {}: {e}", header_path.display())))?;
    let (dims, spacing) = header.grid().map_err(|e| Error::format(format!("{}: {e}", header_path.display())))?;
    let bytes = fs::read(&data_path)
        .map_err(|e| Error::format(format!("cannot read data {}: {e}", data_path.display())))?;
    let expected = dims.len() * 4;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "{}: expected {expected} bytes, found {}",
            data_path.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((VoxelVolume::from_data(dims, spacing, data)?, header))
}

/// Writes `<base>.raw` (little-endian f32, x-fastest) and `<base>.json`.
/// Samples are rounded to f32.
pub fn write_volume(vol: &VoxelVolume, header: &VolumeHeader, path: impl AsRef<Path>) -> Result<()> {
    let (dims, spacing) = header.grid()?;
    if dims != vol.dims() {
        return Err(Error::invalid(format!(
            "header dims {:?} do not match volume dims {:?}",
            header.dims,
            vol.dims().as_array()
        )));
    }
    if spacing != vol.spacing() {
        return Err(Error::invalid(format!(
            "header spacing {:?} does not match volume spacing {:?}",
            header.spacing,
            vol.spacing().as_array()
        )));
    }
    let (header_path, data_path) = volume_paths(path);
    let mut bytes = Vec::with_capacity(vol.len() * 4);
    for &v in vol.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut text = serde_json::to_string_pretty(header).map_err(|e| Error::format(e.to_string()))?;
    text.push('\n');
    fs::write(&data_path, bytes)?;
    fs::write(&header_path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::VolumeKind;
    use crate::volume::{Dims, GridSpacing};

    #[test]
    fn path_forms() {
        let (h, d) = volume_paths("a/b.json");
        assert_eq!((h.to_str().unwrap(), d.to_str().unwrap()), ("a/b.json", "a/b.raw"));
        let (h, d) = volume_paths("a/b.raw");
        assert_eq!((h.to_str().unwrap(), d.to_str().unwrap()), ("a/b.json", "a/b.raw"));
        let (h, _) = volume_paths("a/b.v1");
        assert_eq!(h.to_str().unwrap(), "a/b.v1.json");
    }

    #[test]
    fn round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dims::new(3, 2, 2).unwrap();
        let s = GridSpacing::new(0.5, 0.5, 2.0).unwrap();
        let vol = VoxelVolume::from_data(d, s, (0..12).map(|i| i as f64 - 5.5).collect()).unwrap();
        let h = VolumeHeader::for_volume(&vol, VolumeKind::Sdf);
        write_volume(&vol, &h, dir.path().join("v")).unwrap();
        let (back, hb) = read_raw(dir.path().join("v.json")).unwrap();
        assert_eq!(back, vol);
        assert_eq!(hb, h);
        let bad = VolumeHeader { dims: [2, 2, 2], ..h };
        assert!(matches!(write_volume(&vol, &bad, dir.path().join("w")), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn truncated_data_names_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let vol = VoxelVolume::new(Dims::cube(2).unwrap(), GridSpacing::unit(), 1.0);
        write_volume(&vol, &VolumeHeader::for_volume(&vol, VolumeKind::Raw), dir.path().join("v")).unwrap();
        fs::write(dir.path().join("v.raw"), [0u8; 20]).unwrap();
        let err = read_raw(dir.path().join("v")).unwrap_err().to_string();
        assert!(err.contains("expected 32 bytes, found 20"), "{err}");
    }

    #[test]
    fn missing_sidecar_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("v.raw"), [0u8; 4]).unwrap();
        assert!(matches!(read_raw(dir.path().join("v.raw")), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_header_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("v.json"),
            r#"{"dims":[1,1,1],"spacing":[1,1,1],"dtype":"f32","byte_order":"le","kind":"raw","extra":1}"#,
        )
        .unwrap();
        fs::write(dir.path().join("v.raw"), [0u8; 4]).unwrap();
        assert!(matches!(read_raw(dir.path().join("v")), Err(Error::Format(_))));
    }
}
