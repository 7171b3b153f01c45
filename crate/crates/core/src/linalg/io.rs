//! Matrix containers: plain-text CSV (one row per line) and a binary form.
//!
//! The binary layout is `rows: u64 LE`, `cols: u64 LE`, then `rows * cols`
//! row-major `f64` values, little-endian. Round trips are bit-exact.

use std::fs;
use std::path::Path;

use super::matrix::RealMatrix;
use crate::error::{Error, Result};

const HEADER_LEN: usize = 16;

pub fn to_binary(m: &RealMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_binary(bytes: &[u8]) -> Result<RealMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Parse("binary matrix shorter than its header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let rows = usize::try_from(word(0)).map_err(|_| Error::Parse("row count overflows".into()))?;
    let cols = usize::try_from(word(8)).map_err(|_| Error::Parse("column count overflows".into()))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Parse("matrix size overflows".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::Parse(format!(
            "binary matrix {rows}x{cols} needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    RealMatrix::new(rows, cols, data)
}

pub fn to_csv(m: &RealMatrix) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn from_csv(text: &str) -> Result<RealMatrix> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}: {tok:?}", i + 1)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    RealMatrix::from_rows(&rows)
}

pub fn write_binary(path: &Path, m: &RealMatrix) -> Result<()> {
    fs::write(path, to_binary(m)).map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<RealMatrix> {
    from_binary(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_csv(path: &Path, m: &RealMatrix) -> Result<()> {
    fs::write(path, to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<RealMatrix> {
    from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(r in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..r * c)
                .map(|k| f64::from_bits(seed.wrapping_mul(k as u64 + 1)) )
                .map(|v| if v.is_finite() { v } else { 0.5 })
                .collect();
            let m = RealMatrix::new(r, c, data).unwrap();
            let back = from_binary(&to_binary(&m)).unwrap();
            let same = m.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
            prop_assert_eq!(back.shape(), m.shape());
        }

        #[test]
        fn csv_round_trip(r in 1usize..5, c in 1usize..5, vals in prop::collection::vec(-1e6f64..1e6, 25)) {
            let m = RealMatrix::new(r, c, vals[..r * c].to_vec()).unwrap();
            prop_assert_eq!(from_csv(&to_csv(&m)).unwrap(), m);
        }
    }

    #[test]
    fn truncated_binary_rejected() {
        let m = RealMatrix::identity(2);
        let b = to_binary(&m);
        assert!(from_binary(&b[..b.len() - 1]).is_err());
        assert!(from_binary(&b[..4]).is_err());
    }

    #[test]
    fn bad_csv_rejected() {
        assert!(from_csv("1,2\n3\n").is_err());
        assert!(from_csv("1,x\n").is_err());
        assert!(from_csv("").is_err());
    }
}
