//! Flat binary container for dense matrices.
//!
//! Dataset samples (TMP sequences, ECG sequences) and other dense blocks are
//! stored on disk in a deliberately boring format: a 16-byte header followed
//! by the row-major payload as little-endian `f64`. The header is
//!
//! | offset | size | field                     |
//! |--------|------|---------------------------|
//! | 0      | 4    | magic bytes `"TMPD"`      |
//! | 4      | 2    | format version (u16 LE)   |
//! | 6      | 4    | rows (u32 LE)             |
//! | 10     | 4    | cols (u32 LE)             |
//! | 14     | 2    | reserved, must be zero    |
//!
//! and the payload length must equal exactly `rows * cols * 8` bytes. There
//! is no compression and no checksum; byte-for-byte reproducibility of
//! generated datasets is part of the contract, and a transparent format makes
//! that property easy to audit with a hex dump.

use std::convert::TryFrom;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Magic bytes identifying a matrix container file.
pub const MAGIC: [u8; 4] = *b"TMPD";

/// Version written by this crate; the only version it can read.
pub const FORMAT_VERSION: u16 = 1;

/// Header length in bytes.
const HEADER_LEN: usize = 16;

/// Writes a rank-2 tensor to `path` in container format.
///
/// The file is written in one call, so a crash mid-write leaves either the
/// old file or a short file that [`read_matrix`] rejects, never a silently
/// corrupt matrix of the right length.
///
/// # Errors
///
/// Rejects tensors that are not rank 2 or whose dimensions overflow `u32`,
/// and propagates I/O failures.
pub fn write_matrix(path: &Path, matrix: &Tensor) -> Result<()> {
    if matrix.shape().len() != 2 {
        return Err(Error::shape(format!(
            "container stores rank-2 tensors, got rank {}",
            matrix.shape().len()
        )));
    }
    let rows = u32::try_from(matrix.rows())
        .map_err(|_| Error::invalid(format!("row count {} exceeds u32", matrix.rows())))?;
    let cols = u32::try_from(matrix.cols())
        .map_err(|_| Error::invalid(format!("column count {} exceeds u32", matrix.cols())))?;

    let mut bytes = Vec::with_capacity(HEADER_LEN + matrix.as_slice().len() * 8);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    bytes.extend_from_slice(&0u16.to_le_bytes());
    for value in matrix.as_slice() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a matrix container from `path`.
///
/// # Errors
///
/// Returns [`Error::Format`] when the header or payload is malformed
/// (wrong magic, unsupported version, nonzero reserved field, truncated or
/// overlong payload, zero dimensions, non-finite entries) and [`Error::Io`]
/// when the file cannot be read at all.
pub fn read_matrix(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    decode_matrix(&path.display().to_string(), &bytes)
}

/// Decodes container bytes; split out from [`read_matrix`] so tests can probe
/// malformed inputs without touching the filesystem.
fn decode_matrix(path: &str, bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            format!("file is {} bytes, shorter than the 16-byte header", bytes.len()),
        ));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic bytes {:02x?}, expected \"TMPD\"", &bytes[0..4]),
        ));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let rows = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let cols = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]) as usize;
    let reserved = u16::from_le_bytes([bytes[14], bytes[15]]);
    if reserved != 0 {
        return Err(Error::format(
            path,
            format!("reserved header field is {reserved}, expected 0"),
        ));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(path, "rows*cols*8 overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes, expected {expected} for a {rows}x{cols} matrix",
                payload.len()
            ),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|chunk| {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(chunk);
            f64::from_le_bytes(buf)
        })
        .collect();
    Tensor::new(vec![rows, cols], data)
        .map_err(|err| Error::format(path, format!("invalid matrix contents: {err}")))
}
