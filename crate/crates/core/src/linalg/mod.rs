//! Dense matrices, norms, supports and projections.

pub mod io;
mod matrix;
mod norms;
mod spectral;
mod support;

pub use matrix::{axpy, dot, norm2, order_free_sum, RealMatrix};
pub use norms::{norm_fro, norm_l1, norm_l21, norm_l2inf, norm_linf};
pub use spectral::{
    induced_22, induced_22_capped, symmetric_eigenvalues, Cholesky, POWER_ITERATION_CAP,
    SPECTRAL_TOL,
};
pub use support::{
    project_entries, project_rows, sign_matrix, sign_with_tol, SupportPattern, DEFAULT_ZERO_TOL,
};

pub(crate) use matrix::check_index;
