//! One archive per network: a text header (configuration in the cube
//! header grammar plus a tensor manifest) terminated by `end_header`, then
//! the raw little-endian payload.
//!
//! Tensors are stored as f64 so that a restored run continues bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use hsisr_tensor::Tensor;

use super::{ModelError, NetConfig, NetworkWeights, Param};
use crate::kv::{format_list, parse_list, KeyValues};

const END: &str = "end_header\n";

pub fn write_weights(w: &NetworkWeights) -> Vec<u8> {
    let mut kv = KeyValues::new();
    w.config.write_kv(&mut kv);
    kv.set("init_seed", w.init_seed);
    kv.set("dtype", "f64le");
    let mut header = kv.to_text();
    let mut offset = 0usize;
    for p in &w.params {
        let _ = writeln!(
            header,
            "tensor = {}; {}; {}; {}",
            p.name,
            format_list(p.tensor.shape()),
            offset,
            u8::from(p.trainable)
        );
        offset += p.tensor.len() * 8;
    }
    header.push_str(END);
    let mut bytes = header.into_bytes();
    for p in &w.params {
        for v in p.tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn read_weights(bytes: &[u8]) -> Result<NetworkWeights, ModelError> {
    let end = bytes
        .windows(END.len())
        .position(|w| w == END.as_bytes())
        .ok_or_else(|| corrupt("missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| corrupt("header is not UTF-8"))?;
    let payload = &bytes[end + END.len()..];
    let (manifest, rest): (Vec<&str>, Vec<&str>) = header.lines().partition(|l| l.trim_start().starts_with("tensor"));
    let kv = KeyValues::parse(&rest.join("\n")).map_err(|e| corrupt(e.to_string()))?;
    if kv.get("dtype") != Some("f64le") {
        return Err(corrupt("unsupported dtype"));
    }
    let config = NetConfig::read_kv(&kv)?;
    let init_seed = kv.require_parsed("init_seed").map_err(|e| corrupt(e.to_string()))?;
    let mut params = Vec::new();
    let mut expected_offset = 0usize;
    for line in manifest {
        let value = line.split_once('=').map(|(_, v)| v).ok_or_else(|| corrupt(line))?;
        let fields: Vec<&str> = value.split(';').map(str::trim).collect();
        let [name, shape, offset, trainable] = fields.as_slice() else {
            return Err(corrupt(format!("bad manifest line {line:?}")));
        };
        let shape: Vec<usize> = parse_list(shape).ok_or_else(|| corrupt(format!("bad shape in {line:?}")))?;
        let offset: usize = offset.parse().map_err(|_| corrupt(format!("bad offset in {line:?}")))?;
        if offset != expected_offset {
            return Err(corrupt(format!("{name}: offset {offset}, expected {expected_offset}")));
        }
        let len: usize = shape.iter().product();
        let chunk = payload
            .get(offset..offset + len * 8)
            .ok_or_else(|| corrupt(format!("{name}: payload truncated")))?;
        let data = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.push(Param {
            name: name.to_string(),
            tensor: Tensor::new(&shape, data)?,
            trainable: *trainable == "1",
        });
        expected_offset += len * 8;
    }
    if expected_offset != payload.len() {
        return Err(corrupt(format!(
            "payload holds {} bytes, manifest {}",
            payload.len(),
            expected_offset
        )));
    }
    let w = NetworkWeights { config, params, init_seed };
    w.check_layout()?;
    Ok(w)
}

pub fn save_weights(w: &NetworkWeights, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, write_weights(w)).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads an archive; with `expected`, the stored architecture must match.
pub fn load_weights(path: &Path, expected: Option<&NetConfig>) -> Result<NetworkWeights, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let w = read_weights(&bytes)?;
    if let Some(cfg) = expected {
        if *cfg != w.config {
            return Err(ModelError::Architecture(format!(
                "{} archive does not match the requested {} configuration",
                w.config.kind(),
                cfg.kind()
            )));
        }
    }
    Ok(w)
}
