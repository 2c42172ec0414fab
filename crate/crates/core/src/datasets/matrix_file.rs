//! `ZSMX` binary matrices.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "ZSMX"
//!      4     1  version (1)
//!      5     1  dtype (0 = f32, 1 = u32)
//!      6     8  rows (u64)
//!     14     8  cols (u64)
//!     22     …  payload, row-major, rows·cols·4 bytes
//! ```

use std::fs;
use std::path::Path;

use crate::ndcore::Matrix;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ZSMX";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 0,
    U32 = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct U32Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

fn header(dtype: Dtype, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    out
}

fn parse_header(bytes: &[u8], dtype: Dtype) -> Result<(usize, usize, &[u8])> {
    if bytes.len() < HEADER_LEN {
        let mut magic = [0u8; 4];
        let n = bytes.len().min(4);
        magic[..n].copy_from_slice(&bytes[..n]);
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != dtype as u8 {
        return Err(Error::Dtype {
            expected: dtype as u8,
            found: bytes[5],
        });
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[14..22].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER_LEN..];
    let expected = rows.checked_mul(cols).and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len() as u64) {
        return Err(Error::Truncated {
            expected: expected.unwrap_or(u64::MAX),
            found: payload.len() as u64,
        });
    }
    Ok((rows as usize, cols as usize, payload))
}

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = header(Dtype::F32, m.rows(), m.cols());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let (rows, cols, payload) = parse_header(bytes, Dtype::F32)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn encode_u32(m: &U32Matrix) -> Vec<u8> {
    let mut out = header(Dtype::U32, m.rows, m.cols);
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_u32(bytes: &[u8]) -> Result<U32Matrix> {
    let (rows, cols, payload) = parse_header(bytes, Dtype::U32)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(U32Matrix { rows, cols, data })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write_bytes(path.as_ref(), &encode_matrix(m))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    decode_matrix(&read_bytes(path.as_ref())?)
}

/// Labels are stored as an `N × 1` u32 matrix.
pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let data = labels
        .iter()
        .map(|&l| u32::try_from(l).map_err(|_| Error::Config(format!("label {l} exceeds u32"))))
        .collect::<Result<Vec<_>>>()?;
    let m = U32Matrix {
        rows: labels.len(),
        cols: 1,
        data,
    };
    write_bytes(path.as_ref(), &encode_u32(&m))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let m = decode_u32(&read_bytes(path.as_ref())?)?;
    if m.cols != 1 && m.rows != 0 {
        return Err(Error::shape("label file columns", 1, m.cols));
    }
    Ok(m.data.into_iter().map(|v| v as usize).collect())
}

/// Reads a header-less numeric CSV into a matrix.
pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut m = Matrix::zeros(0, 0);
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f32>().map_err(|_| Error::Dataset {
                    field: path.display().to_string(),
                    message: format!("row {i}: `{s}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        m.push_row(&row)?;
    }
    Ok(m)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a `ZSMX` file, or a CSV when the extension says so.
pub fn read_any_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    if is_csv(path) {
        read_csv_matrix(path)
    } else {
        read_matrix(path)
    }
}

pub fn read_any_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    if is_csv(path) {
        let m = read_csv_matrix(path)?;
        m.as_slice()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Dataset {
                        field: path.display().to_string(),
                        message: format!("label {v} is not a non-negative integer"),
                    })
                }
            })
            .collect()
    } else {
        read_labels(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_is_bit_identical() {
        let m = Matrix::from_rows(&[[1.5, -0.0, f32::MIN_POSITIVE], [3.0, 1e30, -7.25]]).unwrap();
        let bytes = encode_matrix(&m);
        let back = decode_matrix(&bytes).unwrap();
        assert_eq!(encode_matrix(&back), bytes);
        assert_eq!(back.as_slice()[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let bytes = encode_matrix(&Matrix::zeros(0, 0));
        assert_eq!(bytes.len(), 4 + 1 + 1 + 8 + 8);
        assert_eq!(decode_matrix(&bytes).unwrap().shape(), (0, 0));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = encode_matrix(&Matrix::zeros(2, 3));
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(decode_matrix(&bytes), Err(Error::Truncated { expected: 24, found: 20 })));
    }

    #[test]
    fn bad_magic_and_version_are_distinct() {
        let mut bytes = encode_matrix(&Matrix::zeros(1, 1));
        bytes[0] = b'X';
        assert!(matches!(decode_matrix(&bytes), Err(Error::BadMagic(_))));
        let mut bytes = encode_matrix(&Matrix::zeros(1, 1));
        bytes[4] = 2;
        assert!(matches!(decode_matrix(&bytes), Err(Error::UnsupportedVersion(2))));
        let labels = encode_u32(&U32Matrix { rows: 1, cols: 1, data: vec![3] });
        assert!(matches!(decode_matrix(&labels), Err(Error::Dtype { expected: 0, found: 1 })));
    }

    #[test]
    fn files_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.5]]).unwrap();
        write_matrix(dir.path().join("m.zsmx"), &m).unwrap();
        assert_eq!(read_any_matrix(dir.path().join("m.zsmx")).unwrap(), m);
        write_labels(dir.path().join("y.zsmx"), &[0, 4, 2]).unwrap();
        assert_eq!(read_any_labels(dir.path().join("y.zsmx")).unwrap(), vec![0, 4, 2]);
        std::fs::write(dir.path().join("m.csv"), "1, 2\n3,4.5\n").unwrap();
        assert_eq!(read_any_matrix(dir.path().join("m.csv")).unwrap(), m);
        std::fs::write(dir.path().join("y.csv"), "0\n1.5\n").unwrap();
        assert!(read_any_labels(dir.path().join("y.csv")).is_err());
    }

    proptest! {
        #[test]
        fn any_matrix_round_trips(rows in 0usize..6, cols in 0usize..6, seed in any::<u32>()) {
            let data: Vec<f32> = (0..rows * cols)
                .map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32 * 97)))
                .collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let bytes = encode_matrix(&m);
            prop_assert_eq!(bytes.len(), HEADER_LEN + rows * cols * 4);
            prop_assert_eq!(encode_matrix(&decode_matrix(&bytes).unwrap()), bytes);
        }

        #[test]
        fn any_u32_matrix_round_trips(data in proptest::collection::vec(any::<u32>(), 0..20)) {
            let m = U32Matrix { rows: data.len(), cols: 1, data };
            prop_assert_eq!(decode_u32(&encode_u32(&m)).unwrap(), m);
        }
    }
}
