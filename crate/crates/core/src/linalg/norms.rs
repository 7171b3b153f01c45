//! Matrix norms used throughout recovery and certificate checks.

use super::matrix::{norm2, RealMatrix};

/// Sum of row Euclidean norms.
pub fn norm_l21(m: &RealMatrix) -> f64 {
    (0..m.rows()).map(|r| norm2(m.row(r))).sum()
}

/// Largest row Euclidean norm.
pub fn norm_l2inf(m: &RealMatrix) -> f64 {
    (0..m.rows()).map(|r| norm2(m.row(r))).fold(0.0, f64::max)
}

/// Entrywise absolute sum.
pub fn norm_l1(m: &RealMatrix) -> f64 {
    m.as_slice().iter().map(|v| v.abs()).sum()
}

/// Largest absolute entry.
pub fn norm_linf(m: &RealMatrix) -> f64 {
    m.as_slice().iter().fold(0.0, |acc, v| f64::max(acc, v.abs()))
}

pub fn norm_fro(m: &RealMatrix) -> f64 {
    norm2(m.as_slice())
}
