//! Golfing-scheme dual certificates and numerical checks of the duality conditions.
//!
//! Notation: `Ã_(i) = Σ_i⁻¹ A_i' P_{Ω_i*} A_i` and, for a batch `K_ij ⊆ Ω_i*`,
//! `Ã_(i,j) = Σ_i⁻¹ A_i' P_{K_ij} A_i`.

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Correlation, SensingEnsemble};
use crate::error::{Error, Result};
use crate::instance::log_n;
use crate::linalg::{
    axpy, dot, induced_22, norm2, norm_fro, norm_l2inf, norm_linf, sign_matrix, Cholesky, RealMatrix,
    SupportPattern, DEFAULT_ZERO_TOL, SPECTRAL_TOL,
};

/// Strict inequalities `lhs < rhs` are tested as `lhs <= rhs - STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-9;
/// Equalities are tested as `|lhs - rhs| <= EQUALITY_TOL`.
pub const EQUALITY_TOL: f64 = 1e-9;

/// One named inequality with its measured left side and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub strict: bool,
    pub passed: bool,
    /// `threshold - measured`.
    pub slack: f64,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Check::build(name, measured, threshold, false)
    }

    pub fn below(name: &str, measured: f64, threshold: f64) -> Self {
        Check::build(name, measured, threshold, true)
    }

    fn build(name: &str, measured: f64, threshold: f64, strict: bool) -> Self {
        let limit = if strict { threshold - STRICT_MARGIN } else { threshold };
        Check {
            name: name.to_string(),
            measured,
            threshold,
            strict,
            passed: measured <= limit,
            slack: threshold - measured,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Disjoint measurement batches inside each column's maximal uncorrupted set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GolfingPlan {
    pub m: usize,
    pub log_n: f64,
    /// Batch sizes `m_1, ..., m_l`.
    pub sizes: Vec<usize>,
    /// Contraction targets `c_1, ..., c_l`.
    pub targets: Vec<f64>,
    /// `batches[i][j]` is `K_{i,j+1}`, sorted.
    pub batches: Vec<Vec<Vec<usize>>>,
    pub seed: u64,
}

/// Batch count, sizes and contraction targets for `m` measurements.
///
/// `l = floor(log n + 1)`; `m_1 = m_2 = floor(m / 4)`, later batches
/// `floor(m / (4 log n))`; `c_1 = c_2 = 1 / (2 sqrt(log n))`, later `1/2`.
pub fn golfing_schedule(m: usize, log_n: f64) -> (Vec<usize>, Vec<f64>) {
    let l = (log_n + 1.0).floor().max(1.0) as usize;
    let early = m / 4;
    let late = (m as f64 / (4.0 * log_n)).floor() as usize;
    let c_early = 1.0 / (2.0 * log_n.sqrt());
    (0..l)
        .map(|j| if j < 2 { (early, c_early) } else { (late, 0.5) })
        .unzip()
}

impl GolfingPlan {
    /// Plan with `log n` taken from the support dimension.
    pub fn new(supports: &SupportPattern, seed: u64) -> Result<Self> {
        Self::with_log_n(supports, log_n(supports.n()), seed)
    }

    pub fn with_log_n(supports: &SupportPattern, log_n: f64, seed: u64) -> Result<Self> {
        if !(log_n > 0.0 && log_n.is_finite()) {
            return Err(Error::InvalidInput(format!("log n must be positive, got {log_n}")));
        }
        let m = supports.m();
        let (sizes, targets) = golfing_schedule(m, log_n);
        if let Some(j) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InfeasiblePlan(format!("batch {} is empty (m = {m}, log n = {log_n:.4})", j + 1)));
        }
        let total: usize = sizes.iter().sum();
        let capacity = m - supports.k_max();
        if total > capacity {
            return Err(Error::InfeasiblePlan(format!(
                "batches need {total} rows but m - k_max = {capacity}"
            )));
        }
        let batches = (0..supports.columns())
            .map(|i| {
                let mut pool = supports.omega_star(i).to_vec();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                pool.shuffle(&mut rng);
                let mut start = 0;
                sizes
                    .iter()
                    .map(|&s| {
                        let mut b = pool[start..start + s].to_vec();
                        start += s;
                        b.sort_unstable();
                        b
                    })
                    .collect()
            })
            .collect();
        Ok(GolfingPlan {
            m,
            log_n,
            sizes,
            targets,
            batches,
            seed,
        })
    }

    pub fn l(&self) -> usize {
        self.sizes.len()
    }

    pub fn batch(&self, i: usize, j: usize) -> &[usize] {
        &self.batches[i][j - 1]
    }

    /// Index audit: equal sizes across columns, disjoint batches, all inside `Ω_i*`.
    pub fn audit(&self, supports: &SupportPattern) -> Result<()> {
        for (i, col) in self.batches.iter().enumerate() {
            let mut owner = vec![usize::MAX; self.m];
            for &r in supports.omega_star(i) {
                owner[r] = 0;
            }
            for (j, batch) in col.iter().enumerate() {
                if batch.len() != self.sizes[j] {
                    return Err(Error::InfeasiblePlan(format!("K_{i},{} has the wrong size", j + 1)));
                }
                for &r in batch {
                    match owner.get(r) {
                        Some(0) => owner[r] = j + 1,
                        Some(&usize::MAX) | None => {
                            return Err(Error::InfeasiblePlan(format!("row {r} of K_{i},{} is outside Ω*", j + 1)))
                        }
                        Some(_) => return Err(Error::InfeasiblePlan(format!("row {r} is in two batches of column {i}"))),
                    }
                }
            }
        }
        Ok(())
    }
}

/// Row-normalized truth: `ȳ^r / ||ȳ^r||` on `T`, zero elsewhere.
pub fn v_bar(y_true: &RealMatrix, supports: &SupportPattern) -> Result<RealMatrix> {
    supports.check_signal_shape(y_true)?;
    let mut v = RealMatrix::zeros(y_true.rows(), y_true.cols());
    for &r in supports.row_support() {
        let norm = norm2(y_true.row(r));
        if norm == 0.0 {
            return Err(Error::DegenerateTruth { row: r });
        }
        for c in 0..y_true.cols() {
            v.set(r, c, y_true.get(r, c) / norm);
        }
    }
    Ok(v)
}

/// `sgn(S̄)` restricted to the corruption support.
pub fn error_signs(s_true: &RealMatrix, supports: &SupportPattern) -> Result<RealMatrix> {
    supports.check_error_shape(s_true)?;
    supports.project_omega(&sign_matrix(s_true, DEFAULT_ZERO_TOL))
}

/// `Q_0 = V̄ - λ P_T [A_i' sgn(s̄_i)]`.
pub fn q_initial(
    v_bar: &RealMatrix,
    ensemble: &SensingEnsemble,
    sgn_s: &RealMatrix,
    lambda: f64,
    supports: &SupportPattern,
) -> Result<RealMatrix> {
    let back = supports.project_t(&ensemble.adjoint(sgn_s)?)?;
    v_bar.sub(&back.scale(lambda))
}

/// `Σ⁻¹ A_K' A_{K,T} q_T` as a full n-vector.
fn batch_operator(a: &RealMatrix, corr: &Correlation, rows: &[usize], t: &[usize], q: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; a.cols()];
    for &r in rows {
        let row = a.row(r);
        let coef: f64 = t.iter().map(|&k| row[k] * q[k]).sum();
        if coef != 0.0 {
            axpy(coef, row, &mut u);
        }
    }
    corr.apply_inv(&u)
}

/// `Q_j = P_T (I - (m/m_j) Ã_(i,j)) P_T q_{j-1}` column by column.
pub fn golfing_step(
    q_prev: &RealMatrix,
    ensemble: &SensingEnsemble,
    plan: &GolfingPlan,
    supports: &SupportPattern,
    j: usize,
) -> Result<RealMatrix> {
    if j == 0 || j > plan.l() {
        return Err(Error::IndexOutOfRange { index: j, bound: plan.l() + 1 });
    }
    let t = supports.row_support();
    let scale = plan.m as f64 / plan.sizes[j - 1] as f64;
    q_prev.map_columns(|i, q| {
        let d = batch_operator(ensemble.matrix(i), ensemble.correlation(i), plan.batch(i, j), t, &q);
        let mut out = vec![0.0; q.len()];
        for &k in t {
            out[k] = q[k] - scale * d[k];
        }
        out
    })
}

/// `W` column i `= Σ_j (m/m_j) P_{K_ij} A_i P_T q_{j-1,i}`.
pub fn assemble_w(q: &[RealMatrix], ensemble: &SensingEnsemble, plan: &GolfingPlan, supports: &SupportPattern) -> Result<RealMatrix> {
    check_sequence(q, plan)?;
    let t = supports.row_support();
    let cols = (0..ensemble.columns())
        .map(|i| {
            let a = ensemble.matrix(i);
            let mut w = vec![0.0; plan.m];
            for j in 1..=plan.l() {
                let scale = plan.m as f64 / plan.sizes[j - 1] as f64;
                let qc = q[j - 1].column(i);
                for &r in plan.batch(i, j) {
                    let row = a.row(r);
                    w[r] += scale * t.iter().map(|&k| row[k] * qc[k]).sum::<f64>();
                }
            }
            w
        })
        .collect::<Vec<_>>();
    RealMatrix::from_columns(&cols)
}

/// `U` column i `= Σ_j (m/m_j) Ã_(i,j) P_T q_{j-1,i}`.
pub fn assemble_u(q: &[RealMatrix], ensemble: &SensingEnsemble, plan: &GolfingPlan, supports: &SupportPattern) -> Result<RealMatrix> {
    check_sequence(q, plan)?;
    let t = supports.row_support();
    let cols = (0..ensemble.columns())
        .map(|i| {
            let mut u = vec![0.0; ensemble.n()];
            for j in 1..=plan.l() {
                let scale = plan.m as f64 / plan.sizes[j - 1] as f64;
                let d = batch_operator(ensemble.matrix(i), ensemble.correlation(i), plan.batch(i, j), t, &q[j - 1].column(i));
                axpy(scale, &d, &mut u);
            }
            u
        })
        .collect::<Vec<_>>();
    RealMatrix::from_columns(&cols)
}

fn check_sequence(q: &[RealMatrix], plan: &GolfingPlan) -> Result<()> {
    if q.len() < plan.l() {
        return Err(Error::Precondition(format!("need Q_0..Q_{}, have {} terms", plan.l(), q.len())));
    }
    Ok(())
}

/// The golfing construction for one instance.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub plan: GolfingPlan,
    pub v_bar: RealMatrix,
    pub sgn_s: RealMatrix,
    pub lambda: f64,
    /// `Q_0, ..., Q_l`.
    pub q: Vec<RealMatrix>,
    pub w: RealMatrix,
    pub u: RealMatrix,
}

impl DualCertificate {
    pub fn build(
        ensemble: &SensingEnsemble,
        y_true: &RealMatrix,
        s_true: &RealMatrix,
        supports: &SupportPattern,
        lambda: f64,
        plan: GolfingPlan,
    ) -> Result<Self> {
        plan.audit(supports)?;
        let v_bar = v_bar(y_true, supports)?;
        let sgn_s = error_signs(s_true, supports)?;
        let mut q = vec![q_initial(&v_bar, ensemble, &sgn_s, lambda, supports)?];
        for j in 1..=plan.l() {
            let next = golfing_step(&q[j - 1], ensemble, &plan, supports, j)?;
            q.push(next);
        }
        let w = assemble_w(&q, ensemble, &plan, supports)?;
        let u = assemble_u(&q, ensemble, &plan, supports)?;
        Ok(DualCertificate {
            plan,
            v_bar,
            sgn_s,
            lambda,
            q,
            w,
            u,
        })
    }

    pub fn q_last(&self) -> &RealMatrix {
        self.q.last().expect("Q_0 always present")
    }

    /// `||Q_j||_F / ||Q_{j-1}||_F` for `j = 1..l`; zero when `Q_{j-1} = 0`.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.q
            .windows(2)
            .map(|p| {
                let prev = norm_fro(&p[0]);
                if prev == 0.0 {
                    0.0
                } else {
                    norm_fro(&p[1]) / prev
                }
            })
            .collect()
    }

    /// `||(Q_0 - Q_l) - P_T U||_F`.
    pub fn identity_residual(&self, supports: &SupportPattern) -> Result<f64> {
        let lhs = self.q[0].sub(self.q_last())?;
        Ok(norm_fro(&lhs.sub(&supports.project_t(&self.u)?)?))
    }
}

/// Exact-dual conditions for a candidate `W`.
///
/// The row-norm and sup-norm inequalities are evaluated off the supports
/// (`T^c` and `Ω^c`); on the supports they are fixed by the equalities.
pub fn verify_exact_dual(
    w: &RealMatrix,
    ensemble: &SensingEnsemble,
    supports: &SupportPattern,
    v_bar: &RealMatrix,
    sgn_s: &RealMatrix,
    lambda: f64,
) -> Result<Vec<Check>> {
    let atw = ensemble.adjoint(w)?;
    let on_t = norm_fro(&supports.project_t(&atw)?.sub(v_bar)?);
    let off_t = norm_l2inf(&supports.project_t_complement(&atw)?);
    let on_omega = norm_linf(&supports.project_omega(w)?.sub(&sgn_s.scale(lambda))?);
    let off_omega = norm_linf(&supports.project_omega_complement(w)?);
    Ok(vec![
        Check::at_most("exact_row_support_equals_vbar", on_t, EQUALITY_TOL),
        Check::below("exact_off_support_row_norm", off_t, 1.0),
        Check::at_most("exact_corruption_equals_signs", on_omega, EQUALITY_TOL),
        Check::below("exact_off_corruption_sup", off_omega, lambda),
    ])
}

/// `V = [A_i' P_{Ω_i^c} w_i] + λ [A_i' sgn(s̄_i)]`.
pub fn inexact_v(w: &RealMatrix, ensemble: &SensingEnsemble, supports: &SupportPattern, sgn_s: &RealMatrix, lambda: f64) -> Result<RealMatrix> {
    let free = ensemble.adjoint(&supports.project_omega_complement(w)?)?;
    free.add(&ensemble.adjoint(sgn_s)?.scale(lambda))
}

/// Inexact-dual inequalities for an explicit `V`.
pub fn inexact_dual_checks(
    v: &RealMatrix,
    w: &RealMatrix,
    supports: &SupportPattern,
    v_bar: &RealMatrix,
    lambda: f64,
    kappa_max: f64,
) -> Result<Vec<Check>> {
    if !(lambda < 1.0) {
        return Err(Error::Precondition(format!("inexact duality needs lambda < 1, got {lambda}")));
    }
    let on_t = norm_fro(&supports.project_t(v)?.sub(v_bar)?);
    let off_t = norm_l2inf(&supports.project_t_complement(v)?);
    let off_omega = norm_linf(&supports.project_omega_complement(w)?);
    Ok(vec![
        Check::at_most("inexact_row_support_residual", on_t, lambda / (4.0 * kappa_max.sqrt())),
        Check::at_most("inexact_off_support_row_norm", off_t, 0.25),
        Check::at_most("inexact_off_corruption_sup", off_omega, lambda / 4.0),
    ])
}

pub fn verify_inexact_dual(
    w: &RealMatrix,
    ensemble: &SensingEnsemble,
    supports: &SupportPattern,
    v_bar: &RealMatrix,
    sgn_s: &RealMatrix,
    lambda: f64,
    kappa_max: f64,
) -> Result<Vec<Check>> {
    if !(lambda < 1.0) {
        return Err(Error::Precondition(format!("inexact duality needs lambda < 1, got {lambda}")));
    }
    let v = inexact_v(w, ensemble, supports, sgn_s, lambda)?;
    inexact_dual_checks(&v, w, supports, v_bar, lambda, kappa_max)
}

/// The four certificate bounds, in order: initial value, row-support residual,
/// off-support row norm of `U`, off-corruption sup norm of `W`.
pub fn verify_certificate_bounds(
    cert: &DualCertificate,
    ensemble: &SensingEnsemble,
    supports: &SupportPattern,
    kappa_max: f64,
) -> Result<Vec<Check>> {
    let lambda = cert.lambda;
    let back = ensemble.adjoint(&cert.sgn_s)?.scale(lambda);
    let initial = norm_l2inf(&supports.project_t_complement(&back)?);
    let middle = supports.project_t(&cert.u)?.add(&supports.project_t(&back)?)?.sub(&cert.v_bar)?;
    let off_u = norm_l2inf(&supports.project_t_complement(&cert.u)?);
    let off_w = norm_linf(&supports.project_omega_complement(&cert.w)?);
    Ok(vec![
        Check::at_most("bound_initial_value", initial, 0.125),
        Check::at_most("bound_row_support_residual", norm_fro(&middle), lambda / (4.0 * kappa_max.sqrt())),
        Check::at_most("bound_off_support_u", off_u, 0.125),
        Check::at_most("bound_off_corruption_w", off_w, lambda / 4.0),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IsometryMode {
    /// `||P_T((m/(m-k_max)) Ã_(i) - I)P_T|| < 1/2`.
    Identity,
    /// Same operator against `1 / (2 sqrt(log n))`.
    IdentityTight,
    /// `||P_T((m/(m-k_max)) Ã_(i) Σ⁻¹ - Σ⁻¹)P_T|| < κ_max / 2`.
    SigmaInverse,
    /// `||P_T((m/m_j) Ã_(i,j) - I)P_T|| < c_j`; `j` is 1-based.
    Batch { j: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryResult {
    pub mode: IsometryMode,
    pub per_column: Vec<f64>,
    pub max: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// `(Σ⁻¹)_{T,:} A_K' A_{K,T}` as a `k_T x k_T` matrix.
fn restricted_gram(a: &RealMatrix, corr: &Correlation, rows: &[usize], t: &[usize]) -> Result<RealMatrix> {
    let cols = t
        .iter()
        .map(|&c| {
            let mut u = vec![0.0; a.cols()];
            for &r in rows {
                axpy(a.get(r, c), a.row(r), &mut u);
            }
            corr.apply_inv_rows(t, &u)
        })
        .collect::<Vec<_>>();
    RealMatrix::from_columns(&cols)
}

/// `(Σ⁻¹ A_K' A_K Σ⁻¹)_{T,T}`.
fn restricted_sandwich(a: &RealMatrix, corr: &Correlation, rows: &[usize], t: &[usize]) -> Result<RealMatrix> {
    let sinv = corr.sigma_inv();
    // B = A_K (Σ⁻¹)_{:,T}, |K| x k_T
    let b: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| t.iter().map(|&c| dot(a.row(r), &sinv.column(c))).collect())
        .collect();
    let k = t.len();
    let mut g = RealMatrix::zeros(k, k);
    for p in 0..k {
        for q in 0..k {
            g.set(p, q, b.iter().map(|row| row[p] * row[q]).sum());
        }
    }
    Ok(g)
}

pub fn near_isometry_check(
    ensemble: &SensingEnsemble,
    supports: &SupportPattern,
    mode: IsometryMode,
    plan: Option<&GolfingPlan>,
) -> Result<IsometryResult> {
    let t = supports.row_support();
    let m = ensemble.m();
    let k_max = supports.k_max();
    let threshold = match mode {
        IsometryMode::Identity => 0.5,
        IsometryMode::IdentityTight => 1.0 / (2.0 * log_n(ensemble.n()).sqrt()),
        IsometryMode::SigmaInverse => ensemble.kappa_max() / 2.0,
        IsometryMode::Batch { j } => {
            let plan = plan.ok_or_else(|| Error::Precondition("batch isometry needs a golfing plan".into()))?;
            if j == 0 || j > plan.l() {
                return Err(Error::IndexOutOfRange { index: j, bound: plan.l() + 1 });
            }
            plan.targets[j - 1]
        }
    };
    let mut per_column = Vec::with_capacity(ensemble.columns());
    for i in 0..ensemble.columns() {
        if t.is_empty() {
            per_column.push(0.0);
            continue;
        }
        let (a, corr) = (ensemble.matrix(i), ensemble.correlation(i));
        let (rows, scale) = match mode {
            IsometryMode::Batch { j } => {
                let plan = plan.expect("checked above");
                (plan.batch(i, j), m as f64 / plan.sizes[j - 1] as f64)
            }
            _ => (supports.omega_star(i), m as f64 / (m - k_max) as f64),
        };
        let (gram, reference) = if mode == IsometryMode::SigmaInverse {
            let sinv = corr.sigma_inv();
            (restricted_sandwich(a, corr, rows, t)?, sinv.select(t, t)?)
        } else {
            (restricted_gram(a, corr, rows, t)?, RealMatrix::identity(t.len()))
        };
        let dev = gram.scale(scale).sub(&reference)?;
        per_column.push(induced_22(&dev, SPECTRAL_TOL)?);
    }
    let max = per_column.iter().copied().fold(0.0, f64::max);
    Ok(IsometryResult {
        mode,
        per_column,
        max,
        threshold,
        passed: max < threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffSupportResult {
    pub max: f64,
    pub passed: bool,
}

/// `max_{i, k ∈ T^c} ||P_T Ã_(i) e_k||`, passing when at most 1.
pub fn off_support_check(ensemble: &SensingEnsemble, supports: &SupportPattern) -> Result<OffSupportResult> {
    let t = supports.row_support();
    let off = supports.row_complement();
    let mut max: f64 = 0.0;
    if !t.is_empty() {
        for i in 0..ensemble.columns() {
            let (a, corr) = (ensemble.matrix(i), ensemble.correlation(i));
            let rows = supports.omega_star(i);
            for &k in &off {
                let mut u = vec![0.0; a.cols()];
                for &r in rows {
                    axpy(a.get(r, k), a.row(r), &mut u);
                }
                max = max.max(norm2(&corr.apply_inv_rows(t, &u)));
            }
        }
    }
    Ok(OffSupportResult { max, passed: max <= 1.0 })
}

/// Least-norm candidate for the exact dual.
///
/// Fixes `P_Ω W = λ sgn(S̄)` and, per column, takes the minimum-norm `z` on
/// `Ω_i^c` with `A_{Ω_i^c,T}' z = v̄_{i,T} - λ A_{Ω_i,T}' sgn(s̄_i)`.
/// Fails when some `A_{Ω_i^c,T}` is not injective.
pub fn least_norm_dual(
    ensemble: &SensingEnsemble,
    supports: &SupportPattern,
    v_bar: &RealMatrix,
    sgn_s: &RealMatrix,
    lambda: f64,
) -> Result<RealMatrix> {
    let t = supports.row_support();
    let m = ensemble.m();
    let mut w = sgn_s.scale(lambda);
    for i in 0..ensemble.columns() {
        if t.is_empty() {
            continue;
        }
        let a = ensemble.matrix(i);
        let omega = supports.column_support(i);
        let mut in_omega = vec![false; m];
        for &r in omega {
            in_omega[r] = true;
        }
        let free: Vec<usize> = (0..m).filter(|&r| !in_omega[r]).collect();
        let mut rhs: Vec<f64> = t.iter().map(|&k| v_bar.get(k, i)).collect();
        for &r in omega {
            let s = lambda * sgn_s.get(r, i);
            for (idx, &k) in t.iter().enumerate() {
                rhs[idx] -= s * a.get(r, k);
            }
        }
        let b = a.select(&free, t)?;
        let gram = b.gram();
        let chol = Cholesky::new(&gram).map_err(|_| {
            Error::Precondition(format!("A restricted to uncorrupted rows and T is not injective in column {i}"))
        })?;
        let coef = chol.solve(&rhs);
        let z = b.matvec(&coef);
        for (idx, &r) in free.iter().enumerate() {
            w.set(r, i, z[idx]);
        }
    }
    Ok(w)
}

/// Everything measured for one certificate trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub q_norms: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub batch_isometry: Vec<IsometryResult>,
    /// `||Q_j|| <= c_j ||Q_{j-1}||` for every `j`.
    pub contraction_holds: bool,
    pub bound_checks: Vec<Check>,
    /// On the least-norm candidate; empty when it does not exist.
    pub exact_dual: Vec<Check>,
    pub inexact_dual: Vec<Check>,
    pub identity_residual: f64,
    /// `|| P_T U + λ P_T[A' sgn S̄] - V̄ ||_F - ||Q_l||_F`.
    pub middle_bound_gap: f64,
    /// All four certificate bounds hold.
    pub all_pass: bool,
}

impl CertificateReport {
    pub fn batch_isometry_holds(&self) -> bool {
        self.batch_isometry.iter().all(|r| r.passed)
    }
}

pub fn certificate_report(
    ensemble: &SensingEnsemble,
    y_true: &RealMatrix,
    s_true: &RealMatrix,
    supports: &SupportPattern,
    lambda: f64,
    plan_seed: u64,
) -> Result<(DualCertificate, CertificateReport)> {
    let plan = GolfingPlan::new(supports, plan_seed)?;
    let cert = DualCertificate::build(ensemble, y_true, s_true, supports, lambda, plan)?;
    let kappa = ensemble.kappa_max();
    let bound_checks = verify_certificate_bounds(&cert, ensemble, supports, kappa)?;
    let inexact_dual = if lambda < 1.0 {
        verify_inexact_dual(&cert.w, ensemble, supports, &cert.v_bar, &cert.sgn_s, lambda, kappa)?
    } else {
        Vec::new()
    };
    let exact_dual = match least_norm_dual(ensemble, supports, &cert.v_bar, &cert.sgn_s, lambda) {
        Ok(w) => verify_exact_dual(&w, ensemble, supports, &cert.v_bar, &cert.sgn_s, lambda)?,
        Err(_) => Vec::new(),
    };
    let batch_isometry = (1..=cert.plan.l())
        .map(|j| near_isometry_check(ensemble, supports, IsometryMode::Batch { j }, Some(&cert.plan)))
        .collect::<Result<Vec<_>>>()?;
    let q_norms: Vec<f64> = cert.q.iter().map(norm_fro).collect();
    let contraction_holds = q_norms
        .windows(2)
        .zip(&cert.plan.targets)
        .all(|(p, c)| p[1] <= c * p[0]);
    let identity_residual = cert.identity_residual(supports)?;
    let middle_bound_gap = bound_checks[1].measured - q_norms[q_norms.len() - 1];
    let all_pass = all_passed(&bound_checks);
    let report = CertificateReport {
        contraction_ratios: cert.contraction_ratios(),
        q_norms,
        batch_isometry,
        contraction_holds,
        bound_checks,
        exact_dual,
        inexact_dual,
        identity_residual,
        middle_bound_gap,
        all_pass,
    };
    Ok((cert, report))
}
