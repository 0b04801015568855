//! `<name>.hdr` text header plus `<name>.raw` band-sequential f32le payload.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, HsiCube};
use crate::kv::{format_list, parse_list, KeyValues};

/// Header and payload paths for a cube stem. A trailing `.hdr` or `.raw`
/// on `path` is ignored.
pub fn cube_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("hdr") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut hdr = stem.clone().into_os_string();
    hdr.push(".hdr");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (hdr.into(), raw.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_cube(cube: &HsiCube, path: &Path) -> Result<(), DataError> {
    if cube.data().iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonFinite);
    }
    let (hdr, raw) = cube_paths(path);
    let mut kv = KeyValues::new();
    kv.set("height", cube.height());
    kv.set("width", cube.width());
    kv.set("bands", cube.bands());
    kv.set("dtype", "f32le");
    kv.set("interleave", "bsq");
    kv.set("wavelengths", format_list(cube.wavelengths()));
    let mut bytes = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&hdr, kv.to_text()).map_err(io_err(&hdr))?;
    fs::write(&raw, bytes).map_err(io_err(&raw))?;
    Ok(())
}

pub fn load_cube(path: &Path) -> Result<HsiCube, DataError> {
    let (hdr, raw) = cube_paths(path);
    let text = fs::read_to_string(&hdr).map_err(io_err(&hdr))?;
    let kv = KeyValues::parse(&text).map_err(|e| DataError::Header(e.to_string()))?;
    let dim = |key: &str| kv.require_parsed::<usize>(key).map_err(|e| DataError::Header(e.to_string()));
    let (height, width, bands) = (dim("height")?, dim("width")?, dim("bands")?);
    if let Some(dtype) = kv.get("dtype") {
        if !dtype.eq_ignore_ascii_case("f32le") {
            return Err(DataError::Header(format!("unsupported dtype {dtype}")));
        }
    }
    if let Some(il) = kv.get("interleave") {
        if !il.eq_ignore_ascii_case("bsq") {
            return Err(DataError::Header(format!("unsupported interleave {il}")));
        }
    }
    let wavelengths: Vec<f64> = match kv.get("wavelengths") {
        Some(v) => parse_list(v).ok_or_else(|| DataError::Header(format!("bad wavelength list {v:?}")))?,
        None => super::default_wavelengths(bands),
    };
    let bytes = fs::read(&raw).map_err(io_err(&raw))?;
    let expected = height * width * bands * 4;
    if bytes.len() != expected {
        return Err(DataError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    HsiCube::new(height, width, bands, data, wavelengths)
}
