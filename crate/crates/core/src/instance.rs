//! Ground truth generation, the measurement map and sparsity budgets.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{sample_ensemble, DistributionSpec, EnsembleMetadata, SensingEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{io, RealMatrix, SupportPattern};

/// Upper limits on the constants in the sparsity budgets.
pub const ALPHA: f64 = 1.0 / 9600.0;
pub const BETA: f64 = 1.0 / 3136.0;
pub const GAMMA: f64 = 1.0 / 4.0;

const ALPHA_INV: f64 = 9600.0;
const BETA_INV: f64 = 3136.0;
const GAMMA_INV: f64 = 4.0;

/// Natural logarithm of the signal dimension; the `log n` used everywhere.
pub fn log_n(n: usize) -> f64 {
    (n as f64).ln()
}

/// Default regularization weight `1 / sqrt(log n)`.
pub fn default_lambda(n: usize) -> f64 {
    1.0 / log_n(n).sqrt()
}

/// SplitMix64 finalizer; used to derive independent seeds from a base seed.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityBudget {
    pub k_t_max: usize,
    pub k_omega_max: usize,
    pub k_max_max: usize,
    /// Row supports must also satisfy `k_T * L <= n`.
    pub k_t_columns_cap: usize,
    pub lambda: f64,
}

/// Largest sparsities admitted by the recovery guarantee, with the constants at their limits.
pub fn sparsity_budget(n: usize, m: usize, columns: usize, mu_max: f64, kappa_max: f64) -> SparsityBudget {
    let ln = log_n(n);
    let m = m as f64;
    SparsityBudget {
        k_t_max: (m / (ALPHA_INV * mu_max * kappa_max * ln * ln)).floor() as usize,
        k_omega_max: (m / (BETA_INV * mu_max)).floor() as usize,
        k_max_max: (m / (GAMMA_INV * kappa_max)).floor() as usize,
        k_t_columns_cap: n / columns.max(1),
        lambda: 1.0 / ln.sqrt(),
    }
}

impl SparsityBudget {
    pub fn admits(&self, supports: &SupportPattern) -> std::result::Result<(), String> {
        let checks = [
            (supports.k_t(), self.k_t_max, "k_T"),
            (supports.k_t(), self.k_t_columns_cap, "k_T (k_T * L <= n)"),
            (supports.k_omega(), self.k_omega_max, "k_Omega"),
            (supports.k_max(), self.k_max_max, "k_max"),
        ];
        for (have, cap, what) in checks {
            if have > cap {
                return Err(format!("{what} = {have} exceeds {cap}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MagnitudeModel {
    Unit,
    /// `exp(U(ln lo, ln hi))`.
    LogUniform { lo: f64, hi: f64 },
}

impl Default for MagnitudeModel {
    fn default() -> Self {
        MagnitudeModel::Unit
    }
}

impl MagnitudeModel {
    fn validate(&self) -> Result<()> {
        match *self {
            MagnitudeModel::Unit => Ok(()),
            MagnitudeModel::LogUniform { lo, hi } if lo > 0.0 && hi >= lo && hi.is_finite() => Ok(()),
            MagnitudeModel::LogUniform { lo, hi } => Err(Error::InvalidInput(format!(
                "log-uniform magnitudes need 0 < lo <= hi, got ({lo}, {hi})"
            ))),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            MagnitudeModel::Unit => 1.0,
            MagnitudeModel::LogUniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.gen_range(lo.ln()..hi.ln()).exp()
                }
            }
        }
    }
}

/// Shape and sparsity of a ground-truth pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub n: usize,
    pub m: usize,
    pub k_t: usize,
    /// Corrupted entries per column; its length is L.
    pub corruptions: Vec<usize>,
    #[serde(default)]
    pub signal: MagnitudeModel,
    #[serde(default)]
    pub error: MagnitudeModel,
    /// Multiplies every corruption magnitude.
    #[serde(default = "one")]
    pub error_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl TruthSpec {
    pub fn new(n: usize, m: usize, k_t: usize, corruptions: Vec<usize>) -> Self {
        TruthSpec {
            n,
            m,
            k_t,
            corruptions,
            signal: MagnitudeModel::Unit,
            error: MagnitudeModel::Unit,
            error_scale: 1.0,
        }
    }

    pub fn columns(&self) -> usize {
        self.corruptions.len()
    }
}

/// Splits `k_omega` corruptions as evenly as possible over `columns`, earlier columns first.
pub fn spread_evenly(k_omega: usize, columns: usize) -> Vec<usize> {
    (0..columns)
        .map(|i| k_omega / columns + usize::from(i < k_omega % columns))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Truth {
    pub y: RealMatrix,
    pub s: RealMatrix,
    pub supports: SupportPattern,
}

/// First `k` entries of a seeded Fisher-Yates shuffle of `0..len`, sorted.
///
/// For a fixed rng state the result for `k` is a prefix-superset of the result for `k - 1`.
fn uniform_subset(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let j = rng.gen_range(i..len);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_ROWS: u64 = 0;
const STREAM_SIGNAL: u64 = 1 << 40;
const STREAM_ERROR: u64 = 2 << 40;
const STREAM_OMEGA: u64 = 3 << 40;

/// Draws a group-sparse signal and a sparse corruption.
///
/// The row support and each column's corruption support are uniform subsets;
/// every supported entry is an independent fair sign times a magnitude.
/// Signs and magnitudes are drawn for the full grid and then masked, so two
/// specs differing only in sparsity share values on their common support.
pub fn generate_truth(spec: &TruthSpec, seed: u64) -> Result<Truth> {
    let TruthSpec { n, m, k_t, .. } = *spec;
    let l = spec.columns();
    if n == 0 || m == 0 || l == 0 {
        return Err(Error::InvalidInput("truth needs n, m and L all positive".into()));
    }
    if k_t > n {
        return Err(Error::InvalidInput(format!("k_T = {k_t} exceeds n = {n}")));
    }
    if let Some(k) = spec.corruptions.iter().find(|&&k| k > m) {
        return Err(Error::InvalidInput(format!("{k} corruptions exceed m = {m}")));
    }
    if !(spec.error_scale > 0.0 && spec.error_scale.is_finite()) {
        return Err(Error::InvalidInput("error_scale must be positive".into()));
    }
    spec.signal.validate()?;
    spec.error.validate()?;

    let rows = uniform_subset(&mut stream_rng(seed, STREAM_ROWS), n, k_t);
    let omegas: Vec<Vec<usize>> = spec
        .corruptions
        .iter()
        .enumerate()
        .map(|(i, &k)| uniform_subset(&mut stream_rng(seed, STREAM_OMEGA + i as u64), m, k))
        .collect();
    let supports = SupportPattern::new(n, m, rows, omegas)?;

    let signal = signed_grid(&mut stream_rng(seed, STREAM_SIGNAL), n, l, &spec.signal, 1.0);
    let error = signed_grid(&mut stream_rng(seed, STREAM_ERROR), m, l, &spec.error, spec.error_scale);

    let mut y = RealMatrix::zeros(n, l);
    for &r in supports.row_support() {
        for c in 0..l {
            y.set(r, c, signal[r * l + c]);
        }
    }
    let mut s = RealMatrix::zeros(m, l);
    for (r, c) in supports.entry_support() {
        s.set(r, c, error[r * l + c]);
    }
    Ok(Truth { y, s, supports })
}

fn signed_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, model: &MagnitudeModel, scale: f64) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * model.draw(rng) * scale
        })
        .collect()
}

/// `M = [A_1 y_1, ..., A_L y_L] + S`.
pub fn measure(ensemble: &SensingEnsemble, y: &RealMatrix, s: &RealMatrix) -> Result<RealMatrix> {
    if s.shape() != (ensemble.m(), ensemble.columns()) {
        return Err(Error::ShapeMismatch {
            context: "measure",
            expected: format!("{}x{} error matrix", ensemble.m(), ensemble.columns()),
            actual: format!("{}x{}", s.rows(), s.cols()),
        });
    }
    ensemble.forward(y)?.add(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceMode {
    /// Sparsities must respect the recovery-guarantee budgets and `k_T * L <= n`.
    TheoremRegime,
    /// Any feasible sparsity; used for phase-transition sweeps.
    Free,
}

/// Everything needed to draw one problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// One spec per column, all of dimension `truth.n`.
    pub specs: Vec<DistributionSpec>,
    pub truth: TruthSpec,
    /// Defaults to `1 / sqrt(ln n)`.
    pub lambda: Option<f64>,
    pub mode: InstanceMode,
}

impl InstanceConfig {
    pub fn uniform(spec: DistributionSpec, truth: TruthSpec, mode: InstanceMode) -> Self {
        InstanceConfig {
            specs: vec![spec; truth.columns()],
            truth,
            lambda: None,
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSeeds {
    pub ensemble: u64,
    pub truth: u64,
}

impl InstanceSeeds {
    pub fn from_base(seed: u64) -> Self {
        InstanceSeeds {
            ensemble: mix_seed(seed, 1),
            truth: mix_seed(seed, 2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub ensemble: SensingEnsemble,
    pub y_true: RealMatrix,
    pub s_true: RealMatrix,
    pub m: RealMatrix,
    pub supports: SupportPattern,
    pub lambda: f64,
    pub mode: InstanceMode,
    pub seeds: InstanceSeeds,
}

impl ProblemInstance {
    pub fn generate(config: &InstanceConfig, seeds: InstanceSeeds) -> Result<Self> {
        let t = &config.truth;
        if config.specs.len() != t.columns() {
            return Err(Error::InvalidInput(format!(
                "{} column distributions for {} columns",
                config.specs.len(),
                t.columns()
            )));
        }
        if config.specs.iter().any(|s| s.dim() != t.n) {
            return Err(Error::InvalidInput("distribution dimension differs from n".into()));
        }
        let lambda = config.lambda.unwrap_or_else(|| default_lambda(t.n));
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        let ensemble = sample_ensemble(&config.specs, t.m, seeds.ensemble)?;
        let truth = generate_truth(t, seeds.truth)?;
        if config.mode == InstanceMode::TheoremRegime {
            let budget = sparsity_budget(t.n, t.m, t.columns(), ensemble.mu_max(), ensemble.kappa_max());
            budget.admits(&truth.supports).map_err(Error::BudgetViolation)?;
        }
        let mut inst = Self::from_parts(ensemble, truth.y, truth.s, lambda, config.mode, seeds)?;
        inst.supports = truth.supports;
        Ok(inst)
    }

    pub fn from_parts(
        ensemble: SensingEnsemble,
        y_true: RealMatrix,
        s_true: RealMatrix,
        lambda: f64,
        mode: InstanceMode,
        seeds: InstanceSeeds,
    ) -> Result<Self> {
        let m = measure(&ensemble, &y_true, &s_true)?;
        let supports = SupportPattern::from_matrices(&y_true, &s_true, 0.0)?;
        Ok(ProblemInstance {
            ensemble,
            y_true,
            s_true,
            m,
            supports,
            lambda,
            mode,
            seeds,
        })
    }

    pub fn n(&self) -> usize {
        self.ensemble.n()
    }

    pub fn columns(&self) -> usize {
        self.ensemble.columns()
    }

    /// Writes `manifest.json`, `ensemble.json`, `A_<i>.bin`, `y_true.bin`, `s_true.bin` and `m.bin`.
    pub fn save_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = BundleManifest {
            n: self.n(),
            m: self.ensemble.m(),
            columns: self.columns(),
            lambda: self.lambda,
            mode: self.mode,
            seeds: self.seeds,
            supports: self.supports.clone(),
        };
        write_json(&dir.join(MANIFEST), &manifest)?;
        write_json(&dir.join(ENSEMBLE), &self.ensemble.metadata())?;
        for (i, a) in self.ensemble.matrices().iter().enumerate() {
            io::write_binary(&dir.join(format!("A_{i}.bin")), a)?;
        }
        io::write_binary(&dir.join("y_true.bin"), &self.y_true)?;
        io::write_binary(&dir.join("s_true.bin"), &self.s_true)?;
        io::write_binary(&dir.join("m.bin"), &self.m)
    }

    /// Reads a bundle written by [`ProblemInstance::save_bundle`] and checks its consistency.
    pub fn load_bundle(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = read_json(&dir.join(MANIFEST))?;
        let meta: EnsembleMetadata = read_json(&dir.join(ENSEMBLE))?;
        let matrices = (0..manifest.columns)
            .map(|i| io::read_binary(&dir.join(format!("A_{i}.bin"))))
            .collect::<Result<Vec<_>>>()?;
        let ensemble = SensingEnsemble::from_parts(meta, matrices)?;
        let y = io::read_binary(&dir.join("y_true.bin"))?;
        let s = io::read_binary(&dir.join("s_true.bin"))?;
        let m = io::read_binary(&dir.join("m.bin"))?;
        let mut inst = Self::from_parts(ensemble, y, s, manifest.lambda, manifest.mode, manifest.seeds)?;
        if inst.m != m {
            return Err(Error::Parse("stored measurements disagree with A, Y and S".into()));
        }
        if inst.supports.k_t() > manifest.supports.k_t()
            || inst.supports.entry_support().len() > manifest.supports.entry_support().len()
        {
            return Err(Error::Parse("stored supports do not cover the stored truth".into()));
        }
        inst.supports = manifest.supports;
        Ok(inst)
    }
}

const MANIFEST: &str = "manifest.json";
const ENSEMBLE: &str = "ensemble.json";

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    n: usize,
    m: usize,
    columns: usize,
    lambda: f64,
    mode: InstanceMode,
    seeds: InstanceSeeds,
    supports: SupportPattern,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
