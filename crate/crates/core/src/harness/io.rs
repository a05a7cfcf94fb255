//! Matrix files.
//!
//! `SKLB1` layout: the 5 magic bytes, `rows` and `cols` as little-endian
//! `u64`, then `rows·cols` little-endian binary64 values in row-major order.
//! Files ending in `.csv` are read as headerless comma-separated rows.

use std::fs;
use std::path::{Path, PathBuf};

use crate::densela::DenseMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"SKLB1";
const HEADER_LEN: u64 = 5 + 16;

pub fn encode(a: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 8 * a.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(a.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.cols() as u64).to_le_bytes());
    for v in a.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let found = bytes.len() as u64;
    if found < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, found });
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
    let (rows, cols) = (word(5), word(13));
    let overflow = Error::DimensionOverflow { rows, cols };
    let count = rows.checked_mul(cols).ok_or(overflow.clone())?;
    let expected = count.checked_mul(8).and_then(|b| b.checked_add(HEADER_LEN)).ok_or(overflow.clone())?;
    if usize::try_from(expected).is_err() {
        return Err(overflow);
    }
    if found != expected {
        if found > expected {
            return Err(Error::Format(format!("{} trailing bytes after the payload", found - expected)));
        }
        return Err(Error::Truncated { expected, found });
    }
    let data = bytes[HEADER_LEN as usize..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseMatrix::from_vec(rows as usize, cols as usize, data)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("csv row {i}: {e}")))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Format(format!("csv row {i}: `{f}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    DenseMatrix::from_rows(&rows)
}

/// Read an `SKLB1` file, or a CSV file when the extension is `.csv`.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        parse_csv(&text)
    } else {
        decode(&bytes)
    }
}

pub fn write_matrix(path: &Path, a: &DenseMatrix) -> Result<()> {
    fs::write(path, encode(a)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Matrix files (`.sklb` or `.csv`) directly inside `dir`, sorted by name.
pub fn matrix_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("sklb" | "csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_matrix_dir(dir: &Path) -> Result<Vec<DenseMatrix>> {
    matrix_files(dir)?.iter().map(|p| read_matrix(p)).collect()
}
