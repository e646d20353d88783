//! The F32M container: a 24-byte little-endian header followed by row-major
//! `f32` values.
//!
//! ```text
//! 0..4    b"F32M"
//! 4..6    version (u16) = 1
//! 6..8    reserved (u16) = 0
//! 8..16   rows (u64)
//! 16..24  cols (u64)
//! 24..    rows * cols binary32 values, row-major
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"F32M";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

/// A matrix exactly as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl MatrixFile {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix files need at least one row and column, got {rows}x{cols}"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Length(format!("{rows}x{cols} overflows")))?;
        if expected != data.len() {
            return Err(Error::Length(format!(
                "{rows}x{cols} matrix needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Rounds to `f32`. Values that overflow `f32` are rejected.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            return Err(Error::Data(format!(
                "non-finite value at row {}, col {}",
                pos % m.nrows(),
                pos / m.nrows()
            )));
        }
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)] as f32);
            }
        }
        Self::new(m.nrows(), m.ncols(), data)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&v| v as f64))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Length(format!(
                "file has {} bytes, header needs {HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"F32M\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let rows = usize::try_from(rows).map_err(|_| Error::Length(format!("rows {rows} too large")))?;
        let cols = usize::try_from(cols).map_err(|_| Error::Length(format!("cols {cols} too large")))?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Length(format!("{rows}x{cols} overflows")))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != count.saturating_mul(4) {
            return Err(Error::Length(format!(
                "header declares {rows}x{cols} ({count} floats) but payload holds {} bytes",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(rows, cols, data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

/// Writes `m` as an F32M file. Non-finite entries are rejected before anything
/// touches the filesystem.
pub fn write_matrix(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    MatrixFile::from_matrix(m)?.write(path)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    Ok(MatrixFile::read(path)?.to_matrix())
}
