use std::fs;
use std::path::Path;

use super::Network;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CFXW";
const VERSION: u32 = 1;

/// Serializes parameters and buffers as `CFXW | u32 version | u64 n_params |
/// u64 n_buffers | f64 LE...`. Round-trips bit-exactly.
pub fn encode_weights(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * (net.params().len() + net.buffers().len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
    out.extend_from_slice(&(net.buffers().len() as u64).to_le_bytes());
    for v in net.params().iter().chain(net.buffers()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_weights(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |d: &str| Error::format("weights file", d.to_string());
    if bytes.len() < 24 || &bytes[..4] != MAGIC {
        return Err(bad("missing CFXW header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n_params = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let n_buffers = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    if body.len() != 8 * (n_params + n_buffers) {
        return Err(bad("truncated payload"));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let params = values.by_ref().take(n_params).collect();
    let buffers = values.collect();
    Ok((params, buffers))
}

pub fn save_weights(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(net)).map_err(|e| Error::io(path, e))
}

/// Loads a weights file into an already-built network of the same architecture.
pub fn load_weights(net: &mut Network, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (params, buffers) = decode_weights(&bytes)?;
    net.load_state(params, buffers)
}
