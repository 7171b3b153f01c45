//! Random sensing ensembles and their population parameters.
//!
//! Column `i` of the problem is sensed by `A_i = (1/sqrt(m)) [a_1'; ...; a_m']`
//! where the `a_r` are i.i.d. draws from the column's distribution. Draws for
//! column `i` come from a ChaCha8 stream keyed by `(seed, i)`, so columns can
//! be generated independently and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Cholesky, RealMatrix};
use crate::parallel;

/// Identifier recorded in metadata for the generator behind every draw.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3), seed_from_u64(seed), stream = column index";

/// Tolerance on `lambda_max * lambda_min = 1` for normalized correlation matrices.
pub const SCALING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthonormalTransform {
    /// Sylvester-Hadamard; rows are `+-1` vectors, `n` must be a power of two.
    Hadamard,
}

/// Distribution of a single sensing vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    IsotropicGaussian { n: usize },
    /// Zero-mean Gaussian with the given correlation matrix.
    CorrelatedGaussian { sigma: RealMatrix },
    /// i.i.d. `+-1` entries.
    RademacherRows { n: usize },
    /// Uniformly chosen rows of an orthogonal transform, scaled to `+-1` entries.
    SubsampledOrthonormal { n: usize, transform: OrthonormalTransform },
}

impl DistributionSpec {
    /// Correlated Gaussian with `sigma` rescaled so that `lambda_max = 1 / lambda_min`.
    pub fn correlated_gaussian(sigma: RealMatrix) -> Result<Self> {
        Ok(DistributionSpec::CorrelatedGaussian {
            sigma: normalize_correlation(&sigma)?,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::IsotropicGaussian { n }
            | DistributionSpec::RademacherRows { n }
            | DistributionSpec::SubsampledOrthonormal { n, .. } => *n,
            DistributionSpec::CorrelatedGaussian { sigma } => sigma.rows(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistributionSpec::IsotropicGaussian { .. } => "isotropic_gaussian",
            DistributionSpec::CorrelatedGaussian { .. } => "correlated_gaussian",
            DistributionSpec::RademacherRows { .. } => "rademacher_rows",
            DistributionSpec::SubsampledOrthonormal { .. } => "subsampled_orthonormal",
        }
    }

    /// True for families whose incoherence bound holds almost surely.
    pub fn is_bounded(&self) -> bool {
        matches!(
            self,
            DistributionSpec::RademacherRows { .. } | DistributionSpec::SubsampledOrthonormal { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidInput("distribution dimension must be positive".into()));
        }
        match self {
            DistributionSpec::CorrelatedGaussian { sigma } => {
                condition_number(sigma)?;
            }
            DistributionSpec::SubsampledOrthonormal { n, .. } if !n.is_power_of_two() => {
                return Err(Error::InvalidInput(format!(
                    "Hadamard rows need n to be a power of two, got {n}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    fn correlation(&self) -> Result<Correlation> {
        match self {
            DistributionSpec::CorrelatedGaussian { sigma } => Correlation::dense(sigma.clone()),
            other => Ok(Correlation::Identity(other.dim())),
        }
    }
}

/// Population correlation matrix of a sensing distribution with its inverse cached.
#[derive(Debug, Clone)]
pub enum Correlation {
    Identity(usize),
    Dense {
        sigma: RealMatrix,
        sigma_inv: RealMatrix,
        factor: Cholesky,
    },
}

impl Correlation {
    pub fn dense(sigma: RealMatrix) -> Result<Self> {
        let factor = Cholesky::new(&sigma)?;
        let sigma_inv = factor.inverse();
        Ok(Correlation::Dense {
            sigma,
            sigma_inv,
            factor,
        })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Correlation::Identity(_))
    }

    pub fn sigma(&self) -> RealMatrix {
        match self {
            Correlation::Identity(n) => RealMatrix::identity(*n),
            Correlation::Dense { sigma, .. } => sigma.clone(),
        }
    }

    pub fn sigma_inv(&self) -> RealMatrix {
        match self {
            Correlation::Identity(n) => RealMatrix::identity(*n),
            Correlation::Dense { sigma_inv, .. } => sigma_inv.clone(),
        }
    }

    /// `Sigma^{-1} v`.
    pub fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Correlation::Identity(_) => v.to_vec(),
            Correlation::Dense { factor, .. } => factor.solve(v),
        }
    }

    /// Rows `rows` of `Sigma^{-1}` times `v`.
    pub fn apply_inv_rows(&self, rows: &[usize], v: &[f64]) -> Vec<f64> {
        match self {
            Correlation::Identity(_) => rows.iter().map(|&r| v[r]).collect(),
            Correlation::Dense { sigma_inv, .. } => rows
                .iter()
                .map(|&r| crate::linalg::dot(sigma_inv.row(r), v))
                .collect(),
        }
    }

    pub fn kappa(&self) -> Result<f64> {
        match self {
            Correlation::Identity(_) => Ok(1.0),
            Correlation::Dense { sigma, .. } => condition_number(sigma),
        }
    }
}

/// `sqrt(lambda_max / lambda_min)` of a symmetric positive definite matrix.
pub fn condition_number(sigma: &RealMatrix) -> Result<f64> {
    let eig = symmetric_eigenvalues(sigma)?;
    let lo = eig[0];
    let hi = *eig.last().unwrap();
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { pivot: 0, value: lo });
    }
    Ok((hi / lo).sqrt().max(1.0))
}

/// Rescales a correlation matrix so that `lambda_max * lambda_min = 1`.
pub fn normalize_correlation(sigma: &RealMatrix) -> Result<RealMatrix> {
    let eig = symmetric_eigenvalues(sigma)?;
    let lo = eig[0];
    let hi = *eig.last().unwrap();
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { pivot: 0, value: lo });
    }
    let mut out = sigma.scale(1.0 / (lo * hi).sqrt());
    let n = out.rows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (out.get(i, j) + out.get(j, i));
            out.set(i, j, avg);
            out.set(j, i, avg);
        }
    }
    Ok(out)
}

/// Entry `(row, col)` of the unnormalized Sylvester-Hadamard matrix.
#[inline]
pub fn hadamard_entry(row: usize, col: usize) -> f64 {
    if (row & col).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

struct VectorSampler<'a> {
    spec: &'a DistributionSpec,
    factor: Option<Cholesky>,
}

impl<'a> VectorSampler<'a> {
    fn new(spec: &'a DistributionSpec) -> Result<Self> {
        let factor = match spec {
            DistributionSpec::CorrelatedGaussian { sigma } => Some(Cholesky::new(sigma)?),
            _ => None,
        };
        Ok(VectorSampler { spec, factor })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.spec.dim();
        match self.spec {
            DistributionSpec::IsotropicGaussian { .. } => {
                (0..n).map(|_| rng.sample(StandardNormal)).collect()
            }
            DistributionSpec::CorrelatedGaussian { .. } => {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                self.factor.as_ref().unwrap().lower_mul(&z)
            }
            DistributionSpec::RademacherRows { .. } => (0..n)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect(),
            DistributionSpec::SubsampledOrthonormal { transform, .. } => {
                let row = rng.gen_range(0..n);
                match transform {
                    OrthonormalTransform::Hadamard => {
                        (0..n).map(|k| hadamard_entry(row, k)).collect()
                    }
                }
            }
        }
    }
}

fn column_rng(seed: u64, column: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(column as u64);
    rng
}

fn vector_incoherence(a: &[f64], correlation: &Correlation) -> f64 {
    let plain = a.iter().fold(0.0, |acc, v| f64::max(acc, v * v));
    let whitened = correlation
        .apply_inv(a)
        .iter()
        .fold(0.0, |acc, v| f64::max(acc, v * v));
    plain.max(whitened)
}

/// Incoherence estimate for a distribution.
///
/// Bounded families are evaluated exactly: Rademacher rows give 1 without
/// sampling, Hadamard rows are maximized over every row of the transform.
/// Gaussian families return the largest coordinate energy of `a` and of
/// `Sigma^{-1} a` over `samples` sequential draws, floored at 1. Draws are
/// nested: a larger `samples` with the same seed sees a superset.
pub fn estimate_incoherence(spec: &DistributionSpec, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    spec.validate()?;
    let n = spec.dim();
    match spec {
        DistributionSpec::RademacherRows { .. } => Ok(1.0),
        DistributionSpec::SubsampledOrthonormal { transform, .. } => {
            let corr = Correlation::Identity(n);
            let mu = (0..n)
                .map(|row| match transform {
                    OrthonormalTransform::Hadamard => {
                        let a: Vec<f64> = (0..n).map(|k| hadamard_entry(row, k)).collect();
                        vector_incoherence(&a, &corr)
                    }
                })
                .fold(0.0, f64::max);
            Ok(mu.max(1.0))
        }
        _ => {
            let corr = spec.correlation()?;
            let sampler = VectorSampler::new(spec)?;
            let mut rng = column_rng(seed, 0);
            let mu = (0..samples)
                .map(|_| vector_incoherence(&sampler.draw(&mut rng), &corr))
                .fold(0.0, f64::max);
            Ok(mu.max(1.0))
        }
    }
}

/// Serializable description of an ensemble; the matrices travel separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetadata {
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub specs: Vec<DistributionSpec>,
    pub kappa: Vec<f64>,
    pub mu: Vec<f64>,
    pub kappa_max: f64,
    pub mu_max: f64,
    pub rng: String,
}

/// The L sensing matrices with their population parameters.
#[derive(Debug, Clone)]
pub struct SensingEnsemble {
    seed: u64,
    m: usize,
    n: usize,
    specs: Vec<DistributionSpec>,
    matrices: Vec<RealMatrix>,
    correlations: Vec<Correlation>,
    kappa: Vec<f64>,
    mu: Vec<f64>,
}

/// Draws one sensing matrix per spec, each with `m` rows scaled by `1/sqrt(m)`.
///
/// Deterministic in `seed`; columns are generated independently.
pub fn sample_ensemble(specs: &[DistributionSpec], m: usize, seed: u64) -> Result<SensingEnsemble> {
    if m == 0 || specs.is_empty() {
        return Err(Error::InvalidInput("ensemble needs m >= 1 and at least one column".into()));
    }
    let n = specs[0].dim();
    if specs.iter().any(|s| s.dim() != n) {
        return Err(Error::InvalidInput("all column distributions must share n".into()));
    }
    let specs: Vec<DistributionSpec> = specs
        .iter()
        .map(|s| match s {
            DistributionSpec::CorrelatedGaussian { sigma } => DistributionSpec::correlated_gaussian(sigma.clone()),
            other => Ok(other.clone()),
        })
        .collect::<Result<_>>()?;
    for s in &specs {
        s.validate()?;
    }
    let scale = 1.0 / (m as f64).sqrt();
    let columns: Vec<Result<(RealMatrix, Correlation, f64, f64)>> =
        parallel::map_indices(specs.len(), |i| {
            let spec = &specs[i];
            let corr = spec.correlation()?;
            let sampler = VectorSampler::new(spec)?;
            let mut rng = column_rng(seed, i);
            let mut data = Vec::with_capacity(m * n);
            let mut mu = 1.0f64;
            for _ in 0..m {
                let a = sampler.draw(&mut rng);
                if !spec.is_bounded() {
                    mu = mu.max(vector_incoherence(&a, &corr));
                }
                data.extend(a.iter().map(|v| v * scale));
            }
            let kappa = corr.kappa()?;
            Ok((RealMatrix::new(m, n, data)?, corr, kappa, mu))
        });
    let mut matrices = Vec::with_capacity(specs.len());
    let mut correlations = Vec::with_capacity(specs.len());
    let mut kappa = Vec::with_capacity(specs.len());
    let mut mu = Vec::with_capacity(specs.len());
    for col in columns {
        let (a, c, k, u) = col?;
        matrices.push(a);
        correlations.push(c);
        kappa.push(k);
        mu.push(u);
    }
    Ok(SensingEnsemble {
        seed,
        m,
        n,
        specs,
        matrices,
        correlations,
        kappa,
        mu,
    })
}

impl SensingEnsemble {
    /// Rebuilds an ensemble from saved metadata and matrices.
    pub fn from_parts(meta: EnsembleMetadata, matrices: Vec<RealMatrix>) -> Result<Self> {
        if matrices.len() != meta.specs.len()
            || matrices.iter().any(|a| a.shape() != (meta.m, meta.n))
        {
            return Err(Error::ShapeMismatch {
                context: "SensingEnsemble::from_parts",
                expected: format!("{} matrices of {}x{}", meta.specs.len(), meta.m, meta.n),
                actual: format!("{} matrices", matrices.len()),
            });
        }
        let correlations = meta
            .specs
            .iter()
            .map(DistributionSpec::correlation)
            .collect::<Result<_>>()?;
        Ok(SensingEnsemble {
            seed: meta.seed,
            m: meta.m,
            n: meta.n,
            specs: meta.specs,
            matrices,
            correlations,
            kappa: meta.kappa,
            mu: meta.mu,
        })
    }

    /// Ensemble built from explicit matrices, for hand-made instances.
    ///
    /// `kappa` and `mu` are computed from the given correlations and the rows.
    pub fn from_matrices(matrices: Vec<RealMatrix>, correlations: Vec<Correlation>) -> Result<Self> {
        let (m, n) = matrices
            .first()
            .map(RealMatrix::shape)
            .ok_or_else(|| Error::InvalidInput("need at least one matrix".into()))?;
        if matrices.iter().any(|a| a.shape() != (m, n)) || correlations.len() != matrices.len() {
            return Err(Error::InvalidInput("inconsistent ensemble matrices".into()));
        }
        let root_m = (m as f64).sqrt();
        let mut kappa = Vec::new();
        let mut mu = Vec::new();
        let mut specs = Vec::new();
        for (a, c) in matrices.iter().zip(&correlations) {
            kappa.push(c.kappa()?);
            let u = (0..m)
                .map(|r| {
                    let row: Vec<f64> = a.row(r).iter().map(|v| v * root_m).collect();
                    vector_incoherence(&row, c)
                })
                .fold(1.0, f64::max);
            mu.push(u);
            specs.push(match c {
                Correlation::Identity(n) => DistributionSpec::IsotropicGaussian { n: *n },
                Correlation::Dense { sigma, .. } => DistributionSpec::CorrelatedGaussian { sigma: sigma.clone() },
            });
        }
        Ok(SensingEnsemble {
            seed: 0,
            m,
            n,
            specs,
            matrices,
            correlations,
            kappa,
            mu,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> usize {
        self.matrices.len()
    }

    pub fn specs(&self) -> &[DistributionSpec] {
        &self.specs
    }

    pub fn matrix(&self, i: usize) -> &RealMatrix {
        &self.matrices[i]
    }

    pub fn matrices(&self) -> &[RealMatrix] {
        &self.matrices
    }

    pub fn correlation(&self, i: usize) -> &Correlation {
        &self.correlations[i]
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa.iter().cloned().fold(1.0, f64::max)
    }

    pub fn mu_max(&self) -> f64 {
        self.mu.iter().cloned().fold(1.0, f64::max)
    }

    pub fn metadata(&self) -> EnsembleMetadata {
        EnsembleMetadata {
            seed: self.seed,
            m: self.m,
            n: self.n,
            specs: self.specs.clone(),
            kappa: self.kappa.clone(),
            mu: self.mu.clone(),
            kappa_max: self.kappa_max(),
            mu_max: self.mu_max(),
            rng: RNG_ALGORITHM.to_string(),
        }
    }

    /// `[A_1' w_1, ..., A_L' w_L]` for an m x L matrix `w`.
    pub fn adjoint(&self, w: &RealMatrix) -> Result<RealMatrix> {
        if w.shape() != (self.m, self.columns()) {
            return Err(Error::ShapeMismatch {
                context: "SensingEnsemble::adjoint",
                expected: format!("{}x{}", self.m, self.columns()),
                actual: format!("{}x{}", w.rows(), w.cols()),
            });
        }
        let cols: Vec<Vec<f64>> = (0..self.columns())
            .map(|i| self.matrices[i].tr_matvec(&w.column(i)))
            .collect();
        RealMatrix::from_columns(&cols)
    }

    /// `[A_1 y_1, ..., A_L y_L]` for an n x L matrix `y`.
    pub fn forward(&self, y: &RealMatrix) -> Result<RealMatrix> {
        if y.shape() != (self.n, self.columns()) {
            return Err(Error::ShapeMismatch {
                context: "SensingEnsemble::forward",
                expected: format!("{}x{}", self.n, self.columns()),
                actual: format!("{}x{}", y.rows(), y.cols()),
            });
        }
        y.map_columns(|i, col| self.matrices[i].matvec(&col))
    }

    /// Reorders columns: column `k` of the result is column `perm[k]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.columns()];
        for &p in perm {
            crate::linalg::check_index(p, self.columns())?;
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidInput("permutation repeats an index".into()));
            }
        }
        if perm.len() != self.columns() {
            return Err(Error::InvalidInput("permutation has the wrong length".into()));
        }
        Ok(SensingEnsemble {
            seed: self.seed,
            m: self.m,
            n: self.n,
            specs: perm.iter().map(|&p| self.specs[p].clone()).collect(),
            matrices: perm.iter().map(|&p| self.matrices[p].clone()).collect(),
            correlations: perm.iter().map(|&p| self.correlations[p].clone()).collect(),
            kappa: perm.iter().map(|&p| self.kappa[p]).collect(),
            mu: perm.iter().map(|&p| self.mu[p]).collect(),
        })
    }

    /// Same ensemble with every sensing vector multiplied by `c`.
    ///
    /// Population metadata is carried over unchanged; only the matrices move.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.matrices = self.matrices.iter().map(|a| a.scale(c)).collect();
        out
    }
}

/// Spectral distance between the empirical second moment of `samples`
/// draws and the population correlation matrix.
pub fn second_moment_deviation(spec: &DistributionSpec, samples: usize, seed: u64) -> Result<f64> {
    let ens = sample_ensemble(std::slice::from_ref(spec), samples, seed)?;
    // rows carry 1/sqrt(samples), so A'A is the empirical mean of a a'.
    let emp = ens.matrix(0).gram();
    let diff = emp.sub(&ens.correlation(0).sigma())?;
    crate::linalg::induced_22(&diff, crate::linalg::SPECTRAL_TOL)
}
