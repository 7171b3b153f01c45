//! Supports, sign maps and the coordinate projections built from them.
//!
//! Indices are 0-based. Row supports index rows of the n x L signal matrix;
//! entry supports index (row, column) cells of the m x L error matrix.

use serde::{Deserialize, Serialize};

use super::matrix::{check_index, RealMatrix};
use crate::error::{Error, Result};

/// Magnitudes at or below this are treated as zero when extracting signs and supports.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Row support of the signal and entry support of the corruption.
///
/// `omega_star[i]` is the maximal non-corrupted set of column `i`: the
/// `m - k_max` smallest indices outside that column's corruption support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPattern {
    n: usize,
    m: usize,
    row_support: Vec<usize>,
    column_supports: Vec<Vec<usize>>,
    omega_star: Vec<Vec<usize>>,
}

impl SupportPattern {
    pub fn new(
        n: usize,
        m: usize,
        mut row_support: Vec<usize>,
        mut column_supports: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if n == 0 || m == 0 || column_supports.is_empty() {
            return Err(Error::InvalidInput(
                "support pattern needs n >= 1, m >= 1 and at least one column".into(),
            ));
        }
        sort_unique(&mut row_support, n, "row support")?;
        for col in &mut column_supports {
            sort_unique(col, m, "corruption support")?;
        }
        let k_max = column_supports.iter().map(Vec::len).max().unwrap_or(0);
        let omega_star = column_supports
            .iter()
            .map(|omega_i| {
                let mut mask = vec![false; m];
                for &r in omega_i {
                    mask[r] = true;
                }
                (0..m).filter(|&r| !mask[r]).take(m - k_max).collect()
            })
            .collect();
        Ok(SupportPattern {
            n,
            m,
            row_support,
            column_supports,
            omega_star,
        })
    }

    /// Reads supports off a signal/error pair: nonzero rows of `y` and nonzero entries of `s`.
    pub fn from_matrices(y: &RealMatrix, s: &RealMatrix, zero_tol: f64) -> Result<Self> {
        if y.cols() != s.cols() {
            return Err(Error::ShapeMismatch {
                context: "SupportPattern::from_matrices",
                expected: format!("{} columns", y.cols()),
                actual: format!("{}", s.cols()),
            });
        }
        let rows = (0..y.rows())
            .filter(|&r| y.row(r).iter().any(|v| v.abs() > zero_tol))
            .collect();
        let cols = (0..s.cols())
            .map(|c| (0..s.rows()).filter(|&r| s.get(r, c).abs() > zero_tol).collect())
            .collect();
        Self::new(y.rows(), s.rows(), rows, cols)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn columns(&self) -> usize {
        self.column_supports.len()
    }

    pub fn row_support(&self) -> &[usize] {
        &self.row_support
    }

    pub fn column_support(&self, i: usize) -> &[usize] {
        &self.column_supports[i]
    }

    pub fn column_supports(&self) -> &[Vec<usize>] {
        &self.column_supports
    }

    pub fn omega_star(&self, i: usize) -> &[usize] {
        &self.omega_star[i]
    }

    pub fn k_t(&self) -> usize {
        self.row_support.len()
    }

    pub fn k_omega(&self) -> usize {
        self.column_supports.iter().map(Vec::len).sum()
    }

    pub fn k_max(&self) -> usize {
        self.column_supports.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Ω as (row, column) pairs in column-major order.
    pub fn entry_support(&self) -> Vec<(usize, usize)> {
        self.column_supports
            .iter()
            .enumerate()
            .flat_map(|(c, rows)| rows.iter().map(move |&r| (r, c)))
            .collect()
    }

    pub fn row_complement(&self) -> Vec<usize> {
        let mask = self.row_mask();
        (0..self.n).filter(|&r| !mask[r]).collect()
    }

    pub fn row_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &r in &self.row_support {
            mask[r] = true;
        }
        mask
    }

    /// `corrupted[i][r]` is true iff `(r, i)` is in Ω.
    pub fn entry_mask(&self) -> Vec<Vec<bool>> {
        self.column_supports
            .iter()
            .map(|rows| {
                let mut mask = vec![false; self.m];
                for &r in rows {
                    mask[r] = true;
                }
                mask
            })
            .collect()
    }

    /// P_Ω applied to an m x L matrix.
    pub fn project_omega(&self, u: &RealMatrix) -> Result<RealMatrix> {
        self.check_error_shape(u)?;
        project_entries(u, &self.entry_support())
    }

    /// P_{Ω^c} applied to an m x L matrix.
    pub fn project_omega_complement(&self, u: &RealMatrix) -> Result<RealMatrix> {
        self.check_error_shape(u)?;
        let on = project_entries(u, &self.entry_support())?;
        u.sub(&on)
    }

    /// P_T applied to an n x L matrix.
    pub fn project_t(&self, v: &RealMatrix) -> Result<RealMatrix> {
        self.check_signal_shape(v)?;
        project_rows(v, &self.row_support)
    }

    /// P_{T^c} applied to an n x L matrix.
    pub fn project_t_complement(&self, v: &RealMatrix) -> Result<RealMatrix> {
        self.check_signal_shape(v)?;
        project_rows(v, &self.row_complement())
    }

    pub(crate) fn check_signal_shape(&self, v: &RealMatrix) -> Result<()> {
        if v.shape() != (self.n, self.columns()) {
            return Err(Error::ShapeMismatch {
                context: "signal-shaped matrix",
                expected: format!("{}x{}", self.n, self.columns()),
                actual: format!("{}x{}", v.rows(), v.cols()),
            });
        }
        Ok(())
    }

    pub(crate) fn check_error_shape(&self, u: &RealMatrix) -> Result<()> {
        if u.shape() != (self.m, self.columns()) {
            return Err(Error::ShapeMismatch {
                context: "error-shaped matrix",
                expected: format!("{}x{}", self.m, self.columns()),
                actual: format!("{}x{}", u.rows(), u.cols()),
            });
        }
        Ok(())
    }
}

fn sort_unique(indices: &mut Vec<usize>, bound: usize, what: &str) -> Result<()> {
    indices.sort_unstable();
    let before = indices.len();
    indices.dedup();
    if indices.len() != before {
        return Err(Error::InvalidInput(format!("duplicate index in {what}")));
    }
    if let Some(&last) = indices.last() {
        check_index(last, bound)?;
    }
    Ok(())
}

/// P_T: keeps the listed rows, zeroes the rest.
pub fn project_rows(m: &RealMatrix, rows: &[usize]) -> Result<RealMatrix> {
    let mut keep = vec![false; m.rows()];
    for &r in rows {
        check_index(r, m.rows())?;
        keep[r] = true;
    }
    let mut out = RealMatrix::zeros(m.rows(), m.cols());
    for (r, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
        for c in 0..m.cols() {
            out.set(r, c, m.get(r, c));
        }
    }
    Ok(out)
}

/// P_Ω: keeps the listed (row, column) entries, zeroes the rest.
pub fn project_entries(m: &RealMatrix, entries: &[(usize, usize)]) -> Result<RealMatrix> {
    let mut out = RealMatrix::zeros(m.rows(), m.cols());
    for &(r, c) in entries {
        check_index(r, m.rows())?;
        check_index(c, m.cols())?;
        out.set(r, c, m.get(r, c));
    }
    Ok(out)
}

/// Entrywise sign with a dead zone: 0 iff `|m_ij| <= zero_tol`.
pub fn sign_matrix(m: &RealMatrix, zero_tol: f64) -> RealMatrix {
    m.map(|v| sign_with_tol(v, zero_tol))
}

#[inline]
pub fn sign_with_tol(v: f64, zero_tol: f64) -> f64 {
    if v.abs() <= zero_tol {
        0.0
    } else {
        v.signum()
    }
}
