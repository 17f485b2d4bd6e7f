//! Binary checkpoint format for trained parameters.
//!
//! Layout (all little-endian): magic `WMLP`, `u32` format version, `u32`
//! input, hidden and output dimensions, then `w1`, `b1`, `w2`, `b2` as
//! row-major `f64`.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::io_util::write_atomic;
use crate::neuralnet::MlpParams;
use crate::Scalar;

pub const MAGIC: [u8; 4] = *b"WMLP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

pub fn encode<T: Scalar>(p: &MlpParams<T>) -> Vec<u8> {
    let n = p.w1.len() + p.b1.len() + p.w2.len() + p.b2.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        p.input_dim() as u32,
        p.hidden_dim() as u32,
        p.output_dim() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    // standard layout iteration is row-major
    for v in p.w1.iter().chain(&p.b1).chain(&p.w2).chain(&p.b2) {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<MlpParams<f64>> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Corrupt(format!(
            "{} bytes is shorter than the magic",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Corrupt("truncated header".into()));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let (input, hidden, output) = (
        read_u32(bytes, 8) as usize,
        read_u32(bytes, 12) as usize,
        read_u32(bytes, 16) as usize,
    );
    if input == 0 || hidden == 0 || output == 0 {
        return Err(CheckpointError::Corrupt(format!(
            "zero dimension in {input}/{hidden}/{output}"
        )));
    }
    let count = hidden
        .checked_mul(input)
        .and_then(|w1| w1.checked_add(hidden))
        .and_then(|n| n.checked_add(output * hidden + output))
        .ok_or_else(|| CheckpointError::Corrupt("dimension overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 8 {
        return Err(CheckpointError::Corrupt(format!(
            "payload is {} bytes, dimensions {input}/{hidden}/{output} need {}",
            payload.len(),
            count * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let w1 = Array2::from_shape_vec((hidden, input), take(hidden * input)).expect("w1 shape");
    let b1 = Array1::from(take(hidden));
    let w2 = Array2::from_shape_vec((output, hidden), take(output * hidden)).expect("w2 shape");
    let b2 = Array1::from(take(output));
    Ok(MlpParams { w1, b1, w2, b2 })
}

pub fn save_checkpoint<T: Scalar>(p: &MlpParams<T>, path: &Path) -> Result<()> {
    write_atomic(path, &encode(p)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams<f64>> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}
