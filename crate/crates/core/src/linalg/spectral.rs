//! Spectral norm, Cholesky factorization and a symmetric eigensolver.

use super::matrix::{dot, norm2, RealMatrix};
use crate::error::{Error, Result};

/// Iteration cap for [`induced_22`].
pub const POWER_ITERATION_CAP: usize = 10_000;

/// Default relative tolerance for spectral norms.
pub const SPECTRAL_TOL: f64 = 1e-10;

/// Largest singular value of `m` by power iteration on `m'm`.
///
/// The iteration starts from the normalized all-ones vector and stops when
/// the singular value estimate changes by at most `tol` relative. If the
/// start vector lies in the null space of `m'm` the iteration is restarted
/// from a fixed non-symmetric vector.
pub fn induced_22(m: &RealMatrix, tol: f64) -> Result<f64> {
    induced_22_capped(m, tol, POWER_ITERATION_CAP)
}

pub fn induced_22_capped(m: &RealMatrix, tol: f64, cap: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let n = m.cols();
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    match power_iterate(m, ones, tol, cap)? {
        Some(sigma) => Ok(sigma),
        None => {
            let mut alt: Vec<f64> = (0..n).map(|k| 1.0 + 0.5 * ((k + 1) as f64).sin()).collect();
            let nrm = norm2(&alt);
            alt.iter_mut().for_each(|v| *v /= nrm);
            Ok(power_iterate(m, alt, tol, cap)?.unwrap_or(0.0))
        }
    }
}

/// Returns `Ok(None)` when the iterate collapses to zero.
fn power_iterate(m: &RealMatrix, mut v: Vec<f64>, tol: f64, cap: usize) -> Result<Option<f64>> {
    let mut estimate = 0.0f64;
    for _ in 0..cap {
        let mv = m.matvec(&v);
        let w = m.tr_matvec(&mv);
        let wn = norm2(&w);
        // Rayleigh quotient of m'm at unit v is |mv|^2.
        let next = norm2(&mv);
        if wn == 0.0 || next == 0.0 {
            return Ok(None);
        }
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / wn);
        if (next - estimate).abs() <= tol * next {
            return Ok(Some(next.max(estimate)));
        }
        estimate = next;
    }
    Err(Error::NonConvergence {
        iterations: cap,
        estimate,
    })
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &RealMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::ShapeMismatch {
                context: "Cholesky::new",
                expected: "square matrix".into(),
                actual: format!("{}x{}", a.rows(), a.cols()),
            });
        }
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j) - dot(&l[j * n..j * n + j], &l[j * n..j * n + j]);
            if !(d > 1e-14 * scale) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let s = a.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        let l = &self.lower;
        for i in 0..n {
            let s = x[i] - dot(&l[i * n..i * n + i], &x[..i]);
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
    }

    /// `L z` for the lower factor; maps white noise to noise with covariance `A`.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| dot(&self.lower[i * n..i * n + i + 1], &z[..=i])).collect()
    }

    pub fn inverse(&self) -> RealMatrix {
        let n = self.n;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            cols.push(self.solve(&e));
        }
        let mut inv = RealMatrix::from_columns(&cols).expect("finite inverse of a PD factor");
        // symmetrize round-off
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (inv.get(i, j) + inv.get(j, i));
                inv.set(i, j, avg);
                inv.set(j, i, avg);
            }
        }
        inv
    }
}

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
pub fn symmetric_eigenvalues(a: &RealMatrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::ShapeMismatch {
            context: "symmetric_eigenvalues",
            expected: "square matrix".into(),
            actual: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let fro = norm2(a.as_slice()).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in i + 1..n {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-10 * fro {
                return Err(Error::InvalidInput("matrix is not symmetric".into()));
            }
        }
    }
    let mut w = a.as_slice().to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[idx(i, j)] * w[idx(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * fro {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[idx(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (w[idx(q, q)] - w[idx(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = w[idx(k, p)];
                    let akq = w[idx(k, q)];
                    w[idx(k, p)] = c * akp - s * akq;
                    w[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = w[idx(p, k)];
                    let aqk = w[idx(q, k)];
                    w[idx(p, k)] = c * apk - s * aqk;
                    w[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| w[idx(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RealMatrix {
        RealMatrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn oracle_sigma_max(m: &RealMatrix) -> f64 {
        let na = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
        na.singular_values().iter().cloned().fold(0.0, f64::max)
    }

    #[test]
    fn identity_and_diagonal() {
        for k in 1..6 {
            let s = induced_22(&RealMatrix::identity(k), SPECTRAL_TOL).unwrap();
            assert!((s - 1.0).abs() <= SPECTRAL_TOL);
        }
        let d = RealMatrix::diag(&[3.0, 1.0]).unwrap();
        assert!((induced_22(&d, SPECTRAL_TOL).unwrap() - 3.0).abs() <= 3.0 * SPECTRAL_TOL);
    }

    #[test]
    fn start_vector_in_null_space_restarts() {
        let m = RealMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let s = induced_22(&m, SPECTRAL_TOL).unwrap();
        assert!((s - 2.0).abs() < 1e-9, "{s}");
        assert_eq!(induced_22(&RealMatrix::zeros(3, 3), SPECTRAL_TOL).unwrap(), 0.0);
    }

    #[test]
    fn matches_svd_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r = rng.gen_range(1..=8);
            let c = rng.gen_range(1..=8);
            let m = random_matrix(&mut rng, r, c);
            let got = induced_22(&m, SPECTRAL_TOL).unwrap();
            let want = oracle_sigma_max(&m);
            assert!((got - want).abs() <= 1e-8, "{got} vs {want} on {m:?}");
        }
    }

    #[test]
    fn tiny_cap_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 6, 6);
        assert!(matches!(
            induced_22_capped(&m, 1e-15, 2),
            Err(Error::NonConvergence { iterations: 2, .. })
        ));
        assert!(induced_22(&m, 0.0).is_err());
    }

    #[test]
    fn cholesky_solves_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_matrix(&mut rng, 7, 5);
        let mut a = b.gram();
        for i in 0..5 {
            a.set(i, i, a.get(i, i) + 0.5);
        }
        let ch = Cholesky::new(&a).unwrap();
        let x = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let rhs = a.matvec(&x);
        let sol = ch.solve(&rhs);
        for (u, v) in sol.iter().zip(&x) {
            assert!((u - v).abs() < 1e-10);
        }
        let prod = a.matmul(&ch.inverse()).unwrap();
        assert!(prod.max_abs_diff(&RealMatrix::identity(5)).unwrap() < 1e-10);
        // L L' = A
        let l_cols: Vec<Vec<f64>> = (0..5)
            .map(|j| {
                let mut e = vec![0.0; 5];
                e[j] = 1.0;
                ch.lower_mul(&e)
            })
            .collect();
        let l = RealMatrix::from_columns(&l_cols).unwrap();
        assert!(l.matmul(&l.transpose()).unwrap().max_abs_diff(&a).unwrap() < 1e-10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::new(&a), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn jacobi_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let k = rng.gen_range(1..=7);
            let b = random_matrix(&mut rng, k, k);
            let s = b.add(&b.transpose()).unwrap();
            let got = symmetric_eigenvalues(&s).unwrap();
            let na = nalgebra::DMatrix::from_row_slice(k, k, s.as_slice());
            let mut want: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().cloned().collect();
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{got:?} vs {want:?}");
            }
        }
    }
}
