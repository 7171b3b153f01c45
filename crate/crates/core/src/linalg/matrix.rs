use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix stored row-major.
///
/// Every constructor rejects empty shapes and non-finite entries, so a
/// `RealMatrix` in hand is always at least 1x1 and finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for RealMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        RealMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<RealMatrix> for RawMatrix {
    fn from(m: RealMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

fn check_finite(rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::NonFinite {
            row: p / cols.max(1),
            col: p % cols.max(1),
        }),
        None => {
            debug_assert_eq!(data.len(), rows * cols);
            Ok(())
        }
    }
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "RealMatrix::new",
                expected: format!("{} entries", rows * cols),
                actual: format!("{} entries", data.len()),
            });
        }
        check_finite(rows, cols, &data)?;
        Ok(RealMatrix { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(k: usize) -> Self {
        let mut m = Self::zeros(k, k);
        for i in 0..k {
            m.data[i * k + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let k = values.len();
        let mut data = vec![0.0; k * k];
        for (i, v) in values.iter().enumerate() {
            data[i * k + i] = *v;
        }
        Self::new(k, k, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidInput("ragged columns".into()));
        }
        let mut data = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * cols + j] = *v;
            }
        }
        Self::new(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        RealMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `self' * x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension");
        let mut out = vec![0.0; self.cols];
        for (row, xi) in self.data.chunks_exact(self.cols).zip(x) {
            if *xi != 0.0 {
                axpy(*xi, row, &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                expected: format!("{} rows on the right", self.cols),
                actual: format!("{}", other.rows),
            });
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for r in 0..self.rows {
            let out = &mut data[r * other.cols..(r + 1) * other.cols];
            for (k, a) in self.row(r).iter().enumerate() {
                if *a != 0.0 {
                    axpy(*a, other.row(k), out);
                }
            }
        }
        RealMatrix::new(self.rows, other.cols, data)
    }

    /// `self' * self`.
    pub fn gram(&self) -> RealMatrix {
        let n = self.cols;
        let mut data = vec![0.0; n * n];
        for row in self.data.chunks_exact(n) {
            for (i, ri) in row.iter().enumerate() {
                if *ri != 0.0 {
                    axpy(*ri, row, &mut data[i * n..(i + 1) * n]);
                }
            }
        }
        RealMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn add(&self, other: &RealMatrix) -> Result<RealMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &RealMatrix) -> Result<RealMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> RealMatrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &RealMatrix) -> Result<f64> {
        self.require_same_shape(other, "inner")?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn require_same_shape(&self, other: &RealMatrix, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }

    /// Copies out the sub-matrix on the given rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<RealMatrix> {
        for &r in rows {
            check_index(r, self.rows)?;
        }
        for &c in cols {
            check_index(c, self.cols)?;
        }
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        RealMatrix::new(rows.len(), cols.len(), data)
    }

    /// Applies `f` to each column and rebuilds the matrix from the results.
    pub fn map_columns(&self, mut f: impl FnMut(usize, Vec<f64>) -> Vec<f64>) -> Result<RealMatrix> {
        let cols: Vec<Vec<f64>> = (0..self.cols).map(|c| f(c, self.column(c))).collect();
        RealMatrix::from_columns(&cols)
    }

    pub fn max_abs_diff(&self, other: &RealMatrix) -> Result<f64> {
        self.require_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| f64::max(acc, (a - b).abs())))
    }

    fn zip_with(
        &self,
        other: &RealMatrix,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<RealMatrix> {
        self.require_same_shape(other, context)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        RealMatrix::new(self.rows, self.cols, data)
    }
}

pub(crate) fn check_index(index: usize, bound: usize) -> Result<()> {
    if index >= bound {
        Err(Error::IndexOutOfRange { index, bound })
    } else {
        Ok(())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Sum that does not depend on the order of `values`.
///
/// Terms are sorted by value before accumulation, so any permutation of the
/// input gives a bit-identical result.
pub fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}
