//! Tensor files.
//!
//! Binary variant: one ASCII header line
//! `TNSR v1 <rows> <cols> dtype=f32 order=row-major` followed by
//! `rows * cols` little-endian `f32` values. Text variant: one matrix row
//! per line, values separated by spaces. [`read_tensor`] accepts either.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::{MatrixError, RealMatrix};

pub const MAGIC: &str = "TNSR";

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("bad tensor header: {0}")]
    BadHeader(String),
    #[error("tensor payload has {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
    #[error("bad text tensor at line {line}: {msg}")]
    BadText { line: usize, msg: String },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TensorIoError + '_ {
    move |source| TensorIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Encodes a matrix in the binary format. Values are narrowed to `f32`.
pub fn encode_binary(m: &RealMatrix) -> Vec<u8> {
    let header = format!(
        "{MAGIC} v1 {} {} dtype=f32 order=row-major\n",
        m.rows(),
        m.cols()
    );
    let mut out = Vec::with_capacity(header.len() + 4 * m.as_slice().len());
    out.extend_from_slice(header.as_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<RealMatrix, TensorIoError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| TensorIoError::BadHeader("missing header newline".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| TensorIoError::BadHeader("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6
        || fields[0] != MAGIC
        || fields[1] != "v1"
        || fields[4] != "dtype=f32"
        || fields[5] != "order=row-major"
    {
        return Err(TensorIoError::BadHeader(header.to_string()));
    }
    let rows: usize = fields[2]
        .parse()
        .map_err(|_| TensorIoError::BadHeader(format!("bad rows {:?}", fields[2])))?;
    let cols: usize = fields[3]
        .parse()
        .map_err(|_| TensorIoError::BadHeader(format!("bad cols {:?}", fields[3])))?;
    let payload = &bytes[nl + 1..];
    let expected = rows * cols * 4;
    if payload.len() != expected {
        return Err(TensorIoError::Truncated {
            got: payload.len(),
            expected,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(RealMatrix::from_vec(rows, cols, data)?)
}

pub fn encode_text(m: &RealMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn decode_text(text: &str) -> Result<RealMatrix, TensorIoError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| TensorIoError::BadText {
            line: i + 1,
            msg: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(RealMatrix::from_rows(&rows)?)
}

pub fn read_tensor(path: &Path) -> Result<RealMatrix, TensorIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(MAGIC.as_bytes()) {
        decode_binary(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| TensorIoError::BadText {
            line: 0,
            msg: "neither a TNSR header nor UTF-8 text".into(),
        })?;
        decode_text(text)
    }
}

pub fn write_tensor(path: &Path, m: &RealMatrix) -> Result<(), TensorIoError> {
    write_atomic(path, &encode_binary(m)).map_err(io_err(path))
}

/// Writes `bytes` to a temporary sibling file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
