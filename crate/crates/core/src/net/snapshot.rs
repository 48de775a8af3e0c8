//! Binary parameter-snapshot format.
//!
//! ```text
//!   magic   "RGNP" (4 bytes)
//!   version u16 LE (currently 1)
//!   layers  u32 LE layer count
//!   per layer: in_dim u32 LE, out_dim u32 LE
//!   values  little-endian f64 in layout order (weights then biases per layer)
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::mlp::{LayerLayout, ParamVector};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"RGNP";
pub const SNAPSHOT_VERSION: u16 = 1;

/// Refuse to allocate for absurd headers (corrupt/hostile input).
const MAX_LAYERS: u32 = 1024;
const MAX_DIM: u32 = 1 << 20;

#[derive(Error, Debug)]
pub enum SnapshotError {
    #[error("bad magic: expected \"RGNP\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("truncated snapshot while reading {reading}")]
    Truncated { reading: &'static str },
    #[error("snapshot io: {0}")]
    Io(#[from] io::Error),
}

/// Write `params` in snapshot format.
pub fn write_params<W: Write>(w: &mut W, params: &ParamVector) -> Result<(), SnapshotError> {
    params
        .validate()
        .map_err(|e| SnapshotError::Corrupt(format!("invalid params: {e}")))?;
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(params.layout.len() as u32).to_le_bytes())?;
    for layer in &params.layout {
        w.write_all(&(layer.in_dim as u32).to_le_bytes())?;
        w.write_all(&(layer.out_dim as u32).to_le_bytes())?;
    }
    for v in &params.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], reading: &'static str) -> Result<(), SnapshotError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            SnapshotError::Truncated { reading }
        } else {
            SnapshotError::Io(e)
        }
    })
}

/// Read parameters in snapshot format, validating layout invariants.
pub fn read_params<R: Read>(r: &mut R) -> Result<ParamVector, SnapshotError> {
    let mut magic = [0u8; 4];
    read_exact_or(r, &mut magic, "magic")?;
    if magic != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic { found: magic });
    }
    let mut u16buf = [0u8; 2];
    read_exact_or(r, &mut u16buf, "version")?;
    let version = u16::from_le_bytes(u16buf);
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let mut u32buf = [0u8; 4];
    read_exact_or(r, &mut u32buf, "layer count")?;
    let layer_count = u32::from_le_bytes(u32buf);
    if layer_count == 0 || layer_count > MAX_LAYERS {
        return Err(SnapshotError::Corrupt(format!("layer count {layer_count}")));
    }
    let mut layout = Vec::with_capacity(layer_count as usize);
    let mut offset = 0usize;
    for _ in 0..layer_count {
        read_exact_or(r, &mut u32buf, "layer shape")?;
        let in_dim = u32::from_le_bytes(u32buf);
        read_exact_or(r, &mut u32buf, "layer shape")?;
        let out_dim = u32::from_le_bytes(u32buf);
        if in_dim == 0 || out_dim == 0 || in_dim > MAX_DIM || out_dim > MAX_DIM {
            return Err(SnapshotError::Corrupt(format!("layer shape {in_dim}x{out_dim}")));
        }
        layout.push(LayerLayout {
            in_dim: in_dim as usize,
            out_dim: out_dim as usize,
            offset,
        });
        offset += (in_dim as usize) * (out_dim as usize) + out_dim as usize;
    }
    let mut values = vec![0.0f64; offset];
    let mut f64buf = [0u8; 8];
    for v in &mut values {
        read_exact_or(r, &mut f64buf, "values")?;
        *v = f64::from_le_bytes(f64buf);
    }
    let params = ParamVector { values, layout };
    params
        .validate()
        .map_err(|e| SnapshotError::Corrupt(format!("layout invariant: {e}")))?;
    Ok(params)
}

pub fn params_to_bytes(params: &ParamVector) -> Result<Vec<u8>, SnapshotError> {
    let mut buf = Vec::new();
    write_params(&mut buf, params)?;
    Ok(buf)
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<ParamVector, SnapshotError> {
    let mut cursor = io::Cursor::new(bytes);
    let params = read_params(&mut cursor)?;
    if (cursor.position() as usize) != bytes.len() {
        return Err(SnapshotError::Corrupt(format!(
            "{} trailing bytes after values",
            bytes.len() - cursor.position() as usize
        )));
    }
    Ok(params)
}
