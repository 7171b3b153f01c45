//! Convex recovery programs solved by over-relaxed ADMM in graph form.
//!
//! Each column carries `x_i = (y_i, s_i)` constrained to the affine set
//! `A_i y_i + s_i = m_i`, and a consensus copy `z_i` that takes the proximal
//! step of the objective. The projection onto the affine set does not depend
//! on the penalty `rho`, so its factorization is computed once per solve and
//! `rho` can adapt freely.

use serde::{Deserialize, Serialize};

use crate::ensemble::SensingEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{
    norm_fro, norm_l1, norm_l21, order_free_sum, sign_matrix, Cholesky, RealMatrix,
    DEFAULT_ZERO_TOL,
};

/// `max(0, 1 - t / ||row||) * row`.
///
/// # Panics
/// If `t` is negative or NaN.
pub fn prox_group_soft(row: &[f64], t: f64) -> Vec<f64> {
    assert!(t >= 0.0, "threshold must be nonnegative");
    let mut out = row.to_vec();
    let mut sq: Vec<f64> = row.iter().map(|v| v * v).collect();
    group_shrink(&mut out, order_free_sum(&mut sq).sqrt(), t);
    out
}

fn group_shrink(row: &mut [f64], norm: f64, t: f64) {
    let scale = if norm <= t { 0.0 } else { 1.0 - t / norm };
    for v in row {
        *v *= scale;
    }
}

/// `sign(x) * max(0, |x| - t)`.
///
/// # Panics
/// If `t` is negative or NaN.
pub fn prox_soft(x: f64, t: f64) -> f64 {
    assert!(t >= 0.0, "threshold must be nonnegative");
    soft(x, t)
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Initial augmented-Lagrangian penalty.
    pub rho: f64,
    pub max_iters: usize,
    /// Absolute, on Frobenius norms.
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// In `[1, 1.8]`.
    pub over_relaxation: f64,
    /// Residual balancing: `rho` doubles or halves when one residual exceeds the other tenfold.
    pub adaptive_rho: bool,
    /// Balancing is only applied during the first this-many iterations.
    pub adapt_until: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rho: 1.0,
            max_iters: 50_000,
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            over_relaxation: 1.5,
            adaptive_rho: true,
            adapt_until: 10_000,
        }
    }
}

const BALANCE_RATIO: f64 = 10.0;
const BALANCE_FACTOR: f64 = 2.0;
const BALANCE_EVERY: usize = 10;

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho.is_finite()
            && self.max_iters >= 1
            && self.tol_primal > 0.0
            && self.tol_dual > 0.0
            && (1.0..=1.8).contains(&self.over_relaxation);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver options {self:?}")))
        }
    }
}

/// The convex programs this module solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Program {
    /// `min ||Y||_{2,1} + lambda ||S||_1  s.t.  M = [A y] + S`.
    Rgl { lambda: f64 },
    /// `min ||Y||_{2,1}  s.t.  M = [A y]`.
    L21Equality,
    /// `min ||Y||_{2,1} + gamma ||M - [A y]||_F^2`.
    GroupLasso { gamma: f64 },
}

impl Program {
    pub fn name(&self) -> &'static str {
        match self {
            Program::Rgl { .. } => "rgl",
            Program::L21Equality => "l21_equality",
            Program::GroupLasso { .. } => "group_lasso",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Program::Rgl { lambda: w } | Program::GroupLasso { gamma: w } if !(w > 0.0 && w.is_finite()) => {
                Err(Error::InvalidInput(format!("{} weight must be positive, got {w}", self.name())))
            }
            _ => Ok(()),
        }
    }

    /// Objective value at `(y, s)` where `s` is the error block.
    pub fn objective(&self, y: &RealMatrix, s: &RealMatrix) -> f64 {
        let group = norm_l21(y);
        match *self {
            Program::Rgl { lambda } => group + lambda * norm_l1(s),
            Program::L21Equality => group,
            Program::GroupLasso { gamma } => group + gamma * norm_fro(s).powi(2),
        }
    }

    fn prox_error(&self, v: f64, rho: f64) -> f64 {
        match *self {
            Program::Rgl { lambda } => soft(v, lambda / rho),
            Program::L21Equality => 0.0,
            Program::GroupLasso { gamma } => v / (1.0 + 2.0 * gamma / rho),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub program: Program,
    pub y_hat: RealMatrix,
    /// Error block; for the group lasso this is the fitted residual `M - [A y_hat]`.
    pub s_hat: RealMatrix,
    pub iterations: usize,
    /// `max(||x - z||_F, ||M - [A y_hat] - s_hat||_F)`.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub converged: bool,
    pub rho_final: f64,
    /// `max(primal, dual)` of the ADMM iterates, one entry per iteration.
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

impl SolverReport {
    /// Combined residual after the last iteration.
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Projection onto `{(y, r) : A y + r = b}` for one column.
enum ColumnProjector {
    /// `(I_m + A A')` factor, used when `m <= n`.
    Wide(Cholesky),
    /// `(I_n + A' A)` factor, via the Woodbury identity.
    Tall(Cholesky),
}

impl ColumnProjector {
    fn new(a: &RealMatrix) -> Result<Self> {
        let (m, n) = a.shape();
        if m <= n {
            let mut g = a.matmul(&a.transpose())?;
            for k in 0..m {
                g.set(k, k, g.get(k, k) + 1.0);
            }
            Ok(ColumnProjector::Wide(Cholesky::new(&g)?))
        } else {
            let mut g = a.gram();
            for k in 0..n {
                g.set(k, k, g.get(k, k) + 1.0);
            }
            Ok(ColumnProjector::Tall(Cholesky::new(&g)?))
        }
    }

    /// Overwrites `(y, r)` with its projection.
    fn project(&self, a: &RealMatrix, b: &[f64], y: &mut [f64], r: &mut [f64]) {
        let ay = a.matvec(y);
        let mut nu: Vec<f64> = b.iter().zip(&ay).zip(r.iter()).map(|((b, ay), r)| b - ay - r).collect();
        match self {
            ColumnProjector::Wide(chol) => chol.solve_in_place(&mut nu),
            ColumnProjector::Tall(chol) => {
                let mut w = a.tr_matvec(&nu);
                chol.solve_in_place(&mut w);
                for (v, aw) in nu.iter_mut().zip(a.matvec(&w)) {
                    *v -= aw;
                }
            }
        }
        for (yk, d) in y.iter_mut().zip(a.tr_matvec(&nu)) {
            *yk += d;
        }
        for (rk, d) in r.iter_mut().zip(&nu) {
            *rk += d;
        }
    }
}

/// Factorizations for one ensemble; reusable across programs and right-hand sides.
pub struct Projector<'a> {
    ensemble: &'a SensingEnsemble,
    columns: Vec<ColumnProjector>,
}

impl<'a> Projector<'a> {
    pub fn new(ensemble: &'a SensingEnsemble) -> Result<Self> {
        let columns = ensemble
            .matrices()
            .iter()
            .map(ColumnProjector::new)
            .collect::<Result<_>>()?;
        Ok(Projector { ensemble, columns })
    }
}

/// Frobenius norm of column blocks; permutation-invariant in the column index.
fn block_norm(blocks: &[Vec<f64>]) -> f64 {
    let mut partial: Vec<f64> = blocks.iter().map(|b| b.iter().map(|v| v * v).sum()).collect();
    order_free_sum(&mut partial).sqrt()
}

fn diff_norm(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let diffs: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect();
    block_norm(&diffs)
}

/// Solves `program` for data `m` with a prebuilt projector.
pub fn solve_with(projector: &Projector<'_>, program: Program, m: &RealMatrix, opts: &SolverOptions) -> Result<SolverReport> {
    opts.validate()?;
    program.validate()?;
    let ens = projector.ensemble;
    let (rows, l, n) = (ens.m(), ens.columns(), ens.n());
    if m.shape() != (rows, l) {
        return Err(Error::ShapeMismatch {
            context: "solve",
            expected: format!("{rows}x{l} measurements"),
            actual: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    let b: Vec<Vec<f64>> = m.columns();
    let alpha = opts.over_relaxation;
    let mut rho = opts.rho;

    let mut zy = vec![vec![0.0; n]; l];
    let mut zs = vec![vec![0.0; rows]; l];
    let mut uy = vec![vec![0.0; n]; l];
    let mut us = vec![vec![0.0; rows]; l];
    let mut xy = vec![vec![0.0; n]; l];
    let mut xs = vec![vec![0.0; rows]; l];
    let mut history = Vec::new();
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut feasibility = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=opts.max_iters {
        iterations = k;
        for i in 0..l {
            for j in 0..n {
                xy[i][j] = zy[i][j] - uy[i][j];
            }
            for j in 0..rows {
                xs[i][j] = zs[i][j] - us[i][j];
            }
            projector.columns[i].project(ens.matrix(i), &b[i], &mut xy[i], &mut xs[i]);
        }
        let zy_old = zy.clone();
        let zs_old = zs.clone();
        // over-relaxed point shifted by the scaled dual, stored in z
        for i in 0..l {
            for j in 0..n {
                zy[i][j] = alpha * xy[i][j] + (1.0 - alpha) * zy_old[i][j] + uy[i][j];
            }
            for j in 0..rows {
                zs[i][j] = alpha * xs[i][j] + (1.0 - alpha) * zs_old[i][j] + us[i][j];
            }
        }
        let mut row = vec![0.0; l];
        for j in 0..n {
            for i in 0..l {
                row[i] = zy[i][j] * zy[i][j];
            }
            let norm = order_free_sum(&mut row).sqrt();
            let scale = if norm <= 1.0 / rho { 0.0 } else { 1.0 - 1.0 / (rho * norm) };
            for col in zy.iter_mut() {
                col[j] *= scale;
            }
        }
        for col in zs.iter_mut() {
            for v in col.iter_mut() {
                *v = program.prox_error(*v, rho);
            }
        }
        for i in 0..l {
            for j in 0..n {
                let relaxed = alpha * xy[i][j] + (1.0 - alpha) * zy_old[i][j];
                uy[i][j] += relaxed - zy[i][j];
            }
            for j in 0..rows {
                let relaxed = alpha * xs[i][j] + (1.0 - alpha) * zs_old[i][j];
                us[i][j] += relaxed - zs[i][j];
            }
        }

        primal = diff_norm(&xy, &zy).hypot(diff_norm(&xs, &zs));
        dual = rho * diff_norm(&zy, &zy_old).hypot(diff_norm(&zs, &zs_old));
        let combined = primal.max(dual);
        history.push(combined);
        if !combined.is_finite() {
            break;
        }
        if primal <= opts.tol_primal && dual <= opts.tol_dual {
            feasibility = feasibility_gap(ens, &b, &zy, &zs);
            if feasibility <= opts.tol_primal {
                converged = true;
                break;
            }
        }
        if opts.adaptive_rho && k <= opts.adapt_until && k % BALANCE_EVERY == 0 {
            let factor = if primal > BALANCE_RATIO * dual {
                BALANCE_FACTOR
            } else if dual > BALANCE_RATIO * primal {
                1.0 / BALANCE_FACTOR
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                for u in uy.iter_mut().chain(us.iter_mut()) {
                    for v in u.iter_mut() {
                        *v /= factor;
                    }
                }
            }
        }
    }
    if !converged {
        feasibility = feasibility_gap(ens, &b, &zy, &zs);
    }

    let y_hat = RealMatrix::from_columns(&zy)?;
    let s_hat = match program {
        Program::GroupLasso { .. } => m.sub(&ens.forward(&y_hat)?)?,
        _ => RealMatrix::from_columns(&zs)?,
    };
    let objective = program.objective(&y_hat, &s_hat);
    Ok(SolverReport {
        program,
        y_hat,
        s_hat,
        iterations,
        primal_residual: primal.max(feasibility),
        dual_residual: dual,
        objective,
        converged,
        rho_final: rho,
        residual_history: history,
    })
}

fn feasibility_gap(ens: &SensingEnsemble, b: &[Vec<f64>], zy: &[Vec<f64>], zs: &[Vec<f64>]) -> f64 {
    let gaps: Vec<Vec<f64>> = (0..ens.columns())
        .map(|i| {
            let ay = ens.matrix(i).matvec(&zy[i]);
            b[i].iter().zip(&ay).zip(&zs[i]).map(|((b, a), s)| b - a - s).collect()
        })
        .collect();
    block_norm(&gaps)
}

pub fn solve(ensemble: &SensingEnsemble, program: Program, m: &RealMatrix, opts: &SolverOptions) -> Result<SolverReport> {
    solve_with(&Projector::new(ensemble)?, program, m, opts)
}

pub fn solve_rgl(m: &RealMatrix, ensemble: &SensingEnsemble, lambda: f64, opts: &SolverOptions) -> Result<SolverReport> {
    solve(ensemble, Program::Rgl { lambda }, m, opts)
}

pub fn solve_l21_equality(m: &RealMatrix, ensemble: &SensingEnsemble, opts: &SolverOptions) -> Result<SolverReport> {
    solve(ensemble, Program::L21Equality, m, opts)
}

pub fn solve_group_lasso(m: &RealMatrix, ensemble: &SensingEnsemble, gamma: f64, opts: &SolverOptions) -> Result<SolverReport> {
    solve(ensemble, Program::GroupLasso { gamma }, m, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCheck {
    pub success: bool,
    /// `||Y_hat - Y||_F / max(1, ||Y||_F)`.
    pub rel_err_y: f64,
    pub rel_err_s: f64,
    /// Sign patterns of both blocks agree at the default zero tolerance.
    pub support_match: bool,
}

pub const DEFAULT_RECOVERY_TOL: f64 = 1e-3;

pub fn check_exact_recovery(
    y_hat: &RealMatrix,
    s_hat: &RealMatrix,
    y_true: &RealMatrix,
    s_true: &RealMatrix,
    rel_tol: f64,
) -> Result<RecoveryCheck> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidInput(format!("rel_tol must be positive, got {rel_tol}")));
    }
    y_hat.require_same_shape(y_true, "check_exact_recovery")?;
    s_hat.require_same_shape(s_true, "check_exact_recovery")?;
    let rel = |hat: &RealMatrix, truth: &RealMatrix| -> Result<f64> {
        Ok(norm_fro(&hat.sub(truth)?) / norm_fro(truth).max(1.0))
    };
    let rel_err_y = rel(y_hat, y_true)?;
    let rel_err_s = rel(s_hat, s_true)?;
    let support_match = sign_matrix(y_hat, DEFAULT_ZERO_TOL) == sign_matrix(y_true, DEFAULT_ZERO_TOL)
        && sign_matrix(s_hat, DEFAULT_ZERO_TOL) == sign_matrix(s_true, DEFAULT_ZERO_TOL);
    Ok(RecoveryCheck {
        success: rel_err_y <= rel_tol && rel_err_s <= rel_tol,
        rel_err_y,
        rel_err_s,
        support_match,
    })
}

impl SolverReport {
    pub fn check_recovery(&self, y_true: &RealMatrix, s_true: &RealMatrix, rel_tol: f64) -> Result<RecoveryCheck> {
        check_exact_recovery(&self.y_hat, &self.s_hat, y_true, s_true, rel_tol)
    }
}
