//! Acceptance suite. Run with `cargo test -p rgl-core --test acceptance`.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any counted
//! criterion fails. Lines tagged `info` are reported but not counted.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgl_core::certificate::{error_signs, least_norm_dual, v_bar, verify_exact_dual, DualCertificate, GolfingPlan};
use rgl_core::ensemble::{DistributionSpec, SensingEnsemble};
use rgl_core::experiments::{
    run_cell, run_certificate_study, run_experiment, run_phase_transition, CertificateCellResult, ExperimentConfig,
};
use rgl_core::instance::{InstanceConfig, InstanceMode, InstanceSeeds, ProblemInstance, TruthSpec};
use rgl_core::linalg::{norm_fro, RealMatrix};
use rgl_core::solver::{check_exact_recovery, prox_group_soft, prox_soft, solve_rgl, Program, SolverOptions};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Cell shared by the recovery, separation and concentration criteria.
fn main_cell_config(mode: &str, corruptions: usize, trials: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
mode = "{mode}"
[problem]
n = 256
m = 128
columns = 4
ensemble = {{ kind = "rademacher_rows" }}
[grid]
k_t = [4]
corruptions_per_column = [{corruptions}]
[run]
trials = {trials}
base_seed = 2024
rel_tol = 1e-3
"#
    ))
    .unwrap()
}

// ---------------------------------------------------------------- criterion 1

/// Sign change of a non-decreasing function on `[lo, hi]`, by bisection.
///
/// For a convex objective pass its (right) derivative; the result is the
/// minimizer, including at a kink where the derivative jumps across zero.
fn bisect_root(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn prox_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=6);
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let t = rng.gen_range(0.0..2.0) * scale;

        // minimizer of t|x| + (x - v)^2 / 2, coordinatewise
        for &vi in &v {
            let x = prox_soft(vi, t);
            let oracle = bisect_root(|x| x - vi + t * sign(x), -vi.abs() - 1.0, vi.abs() + 1.0);
            worst = worst.max((x - oracle).abs());
        }

        // minimizer lies on the ray through v; search its length
        let group = prox_group_soft(&v, t);
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = bisect_root(|s| s - nv + t * sign(s), -1.0, nv + 1.0).max(0.0);
        for (x, &vi) in group.iter().zip(&v) {
            let oracle = if nv > 0.0 { radius * vi / nv } else { 0.0 };
            worst = worst.max((x - oracle).abs());
        }
        // no random perturbation does better
        let obj = |x: &[f64]| t * x.iter().map(|a| a * a).sum::<f64>().sqrt() + 0.5 * x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let base = obj(&group);
        for _ in 0..5 {
            let probe: Vec<f64> = group.iter().map(|x| x + rng.gen_range(-1e-3..1e-3) * scale).collect();
            if obj(&probe) < base - 1e-12 * scale * scale {
                worst = f64::INFINITY;
            }
        }
    }
    verdict(worst <= 1e-8, format!("1000 inputs, max deviation {worst:.2e} (tol 1e-8)"))
}

// ---------------------------------------------------------------- criterion 2

/// Subgradient descent on `||Y||_{2,1} + lambda ||M - A Y||_1` over flat buffers.
fn subgradient_oracle(ens: &SensingEnsemble, b: &RealMatrix, lambda: f64) -> f64 {
    let (n, m, l) = (ens.n(), ens.m(), ens.columns());
    let a: Vec<&[f64]> = ens.matrices().iter().map(|a| a.as_slice()).collect();
    let bv = b.as_slice();
    let mut y = vec![0.0; n * l];
    let mut g = vec![0.0; n * l];
    let mut sgn = vec![0.0; m * l];
    let mut best = f64::INFINITY;
    for start in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(start);
        y.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        for k in 0..1_000_000usize {
            let mut f = 0.0;
            for c in 0..l {
                for r in 0..m {
                    let row = &a[c][r * n..(r + 1) * n];
                    let ay: f64 = (0..n).map(|j| row[j] * y[j * l + c]).sum();
                    let res = bv[r * l + c] - ay;
                    f += lambda * res.abs();
                    sgn[r * l + c] = if res > 0.0 { 1.0 } else if res < 0.0 { -1.0 } else { 0.0 };
                }
            }
            for j in 0..n {
                let row = &y[j * l..(j + 1) * l];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                f += norm;
                for c in 0..l {
                    let atg: f64 = (0..m).map(|r| a[c][r * n + j] * sgn[r * l + c]).sum();
                    g[j * l + c] = -lambda * atg + if norm > 0.0 { row[c] / norm } else { 0.0 };
                }
            }
            best = best.min(f);
            let step = 0.05 / ((k + 1) as f64).sqrt();
            y.iter_mut().zip(&g).for_each(|(v, gv)| *v -= step * gv);
        }
    }
    best
}

fn solver_optimality() -> Verdict {
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_feas: f64 = 0.0;
    let mut failures = 0;
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
        let n = rng.gen_range(3..=8);
        let m = rng.gen_range(3..=6);
        let l = rng.gen_range(1..=2);
        let k_t = rng.gen_range(1..=n.min(3));
        let k = rng.gen_range(0..=1);
        let cfg = InstanceConfig::uniform(DistributionSpec::IsotropicGaussian { n }, TruthSpec::new(n, m, k_t, vec![k; l]), InstanceMode::Free);
        let inst = ProblemInstance::generate(&cfg, InstanceSeeds::from_base(i)).unwrap();
        let rep = solve_rgl(&inst.m, &inst.ensemble, inst.lambda, &SolverOptions::default()).unwrap();
        let feas = norm_fro(&inst.m.sub(&inst.ensemble.forward(&rep.y_hat).unwrap()).unwrap().sub(&rep.s_hat).unwrap());
        let oracle = subgradient_oracle(&inst.ensemble, &inst.m, inst.lambda);
        let gap = rep.objective - oracle;
        worst_gap = worst_gap.max(gap);
        worst_feas = worst_feas.max(feas);
        if gap > 1e-6 || feas > 1e-7 || !rep.converged {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!("50 instances, {failures} failing; max objective excess {worst_gap:.2e} (tol 1e-6), max feasibility {worst_feas:.2e} (tol 1e-7)"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn exact_recovery() -> Verdict {
    let cfg = main_cell_config("phase_transition", 2, 100);
    let cell = &run_phase_transition(&cfg).unwrap().cells[0];
    let rate = cell.success_rate();
    verdict(
        rate >= 0.95,
        format!("n=256 L=4 m=128 k_T=4 k=2/column: {}/{} recovered (need >= 0.95), mean {:.0} iterations", cell.successes, cell.trials, cell.mean_iters),
    )
}

fn main_cell_certificate(cert: &CertificateCellResult) -> Verdict {
    verdict(
        cert.all_pass_rate() >= 0.9,
        format!(
            "same cell, golfing certificate all-pass {}/{} (need >= 0.9); per-bound passes {:?}",
            cert.all_pass, cert.trials, cert.bound_pass
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn robustness_separation() -> Verdict {
    // 5% of m = 128 rows per column, at ten times the signal scale
    let mut cfg = main_cell_config("baseline_compare", 6, 100);
    cfg.problem.error_scale = 10.0;
    let cell = cfg.cells()[0];
    let runs = run_cell(&cfg, &cell, &[Program::Rgl { lambda: cell.lambda }, Program::L21Equality]).unwrap();
    let count = |k: usize| runs[k].iter().filter(|o| o.success).count();
    let (rgl, l21) = (count(0), count(1));
    verdict(
        rgl > 0 && l21 as f64 <= 0.5 * rgl as f64,
        format!("6 corruptions/column x10: rgl {rgl}/100, l21 equality {l21}/100 (need l21 <= 0.5 rgl)"),
    )
}

// ---------------------------------------------------------------- criterion 5

fn golfing_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut built = 0;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + i);
        let n = [16, 32, 64][rng.gen_range(0..3)];
        let l = rng.gen_range(1..=4);
        let m = rng.gen_range(80..=240);
        let k_t = rng.gen_range(1..=4);
        let k = rng.gen_range(0..=3);
        let spec = match i % 3 {
            0 => DistributionSpec::RademacherRows { n },
            1 => DistributionSpec::IsotropicGaussian { n },
            _ => {
                let sigma = RealMatrix::new(n, n, (0..n * n).map(|p| 0.4f64.powi((p / n).abs_diff(p % n) as i32)).collect()).unwrap();
                DistributionSpec::correlated_gaussian(sigma).unwrap()
            }
        };
        let cfg = InstanceConfig::uniform(spec, TruthSpec::new(n, m, k_t, vec![k; l]), InstanceMode::Free);
        let inst = ProblemInstance::generate(&cfg, InstanceSeeds::from_base(i)).unwrap();
        let plan = GolfingPlan::new(&inst.supports, i).unwrap();
        let cert = DualCertificate::build(&inst.ensemble, &inst.y_true, &inst.s_true, &inst.supports, inst.lambda, plan).unwrap();
        worst = worst.max(cert.identity_residual(&inst.supports).unwrap());
        built += 1;
    }
    verdict(worst <= 1e-10, format!("{built} instances, max ||(Q0 - Ql) - P_T U||_F = {worst:.2e} (tol 1e-10)"))
}

// ---------------------------------------------------------------- criterion 6

fn certificate_pass_rates() -> Verdict {
    let cells = [(4096, 2, 1), (4096, 2, 2), (2048, 1, 1)];
    let mut pass = true;
    let mut parts = Vec::new();
    let (mut iso, mut contracted) = (0, 0);
    for (m, k_t, k) in cells {
        let cfg = ExperimentConfig::from_toml_str(&format!(
            "mode = \"certificate_study\"\n[problem]\nn = 256\nm = {m}\ncolumns = 4\nensemble = {{ kind = \"rademacher_rows\" }}\n\
             [grid]\nk_t = [{k_t}]\ncorruptions_per_column = [{k}]\n[run]\ntrials = 20\nbase_seed = 77\n\
             [certificate]\nconcentration_checks = false\n"
        ))
        .unwrap();
        let c = &run_certificate_study(&cfg).unwrap()[0];
        pass &= !c.infeasible && c.all_pass_rate() >= 0.9;
        iso += c.batch_isometry_trials;
        contracted += c.contraction_given_isometry;
        parts.push(format!("m={m} k_T={k_t} k={k}: {}/{}", c.all_pass, c.trials));
    }
    pass &= iso > 0 && contracted == iso;
    verdict(
        pass,
        format!("all-pass {} (need >= 0.9 each); contraction held in {contracted}/{iso} isometric trials (need all)", parts.join(", ")),
    )
}

// ---------------------------------------------------------------- criterion 7

fn concentration(cert: &CertificateCellResult) -> Verdict {
    verdict(
        cert.identity_isometry_pass >= 95 && cert.off_support_pass >= 95,
        format!(
            "n=256 L=4 m=128 k_T=4 k=2: isometry < 1/2 in {}/100, off-support <= 1 in {}/100 (need >= 95 each)",
            cert.identity_isometry_pass, cert.off_support_pass
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn determinism() -> Verdict {
    let body = "mode = \"phase_transition\"\n[problem]\nn = 64\nm = 48\ncolumns = 3\nensemble = { kind = \"rademacher_rows\" }\n\
                [grid]\nk_t = [2, 6, 10]\ncorruptions_per_column = [0, 3]\n[run]\ntrials = 8\nbase_seed = 31\n";
    let mut cfg = ExperimentConfig::from_toml_str(body).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for (run, threads) in [(0, 1), (1, 1), (2, 3)] {
        cfg.run.threads = threads;
        let out = dir.path().join(format!("run{run}"));
        run_experiment(&cfg, &out, false).unwrap();
        csvs.push(std::fs::read(out.join("phase.csv")).unwrap());
    }
    let repeat = csvs[0] == csvs[1];
    let threaded = csvs[0] == csvs[2];
    verdict(
        repeat && threaded,
        format!("single-threaded repeat byte-identical: {repeat}; 3-thread aggregates identical: {threaded}"),
    )
}

// ---------------------------------------------------------------- criterion 9

fn duality_cross_check() -> Verdict {
    let opts = SolverOptions { tol_primal: 1e-10, tol_dual: 1e-10, max_iters: 200_000, ..Default::default() };
    let (mut certified, mut recovered) = (0, 0);
    let mut worst: f64 = 0.0;
    for i in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + i);
        let n = rng.gen_range(8..=16);
        let l = rng.gen_range(1..=2);
        let m = rng.gen_range(n..=2 * n);
        let k_t = rng.gen_range(1..=2);
        let k = rng.gen_range(0..=1);
        let cfg = InstanceConfig::uniform(DistributionSpec::RademacherRows { n }, TruthSpec::new(n, m, k_t, vec![k; l]), InstanceMode::Free);
        let inst = ProblemInstance::generate(&cfg, InstanceSeeds::from_base(i)).unwrap();
        let (vb, sgn) = (v_bar(&inst.y_true, &inst.supports).unwrap(), error_signs(&inst.s_true, &inst.supports).unwrap());
        let Ok(w) = least_norm_dual(&inst.ensemble, &inst.supports, &vb, &sgn, inst.lambda) else { continue };
        let checks = verify_exact_dual(&w, &inst.ensemble, &inst.supports, &vb, &sgn, inst.lambda).unwrap();
        if !checks.iter().all(|c| c.passed) {
            continue;
        }
        certified += 1;
        let rep = solve_rgl(&inst.m, &inst.ensemble, inst.lambda, &opts).unwrap();
        let check = check_exact_recovery(&rep.y_hat, &rep.s_hat, &inst.y_true, &inst.s_true, 1e-5).unwrap();
        worst = worst.max(check.rel_err_y.max(check.rel_err_s));
        recovered += check.success as usize;
    }
    verdict(
        certified >= 20 && recovered == certified,
        format!("{certified}/200 tiny instances certified, {recovered} recovered to 1e-5 (need all); max rel error {worst:.2e}"),
    )
}

fn report(id: &str, name: &str, counted: bool, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let scope = if counted { "" } else { " [info]" };
    println!("{tag} {id:<3} {name}{scope}: {} ({:.1} s)", v.detail, start.elapsed().as_secs_f64());
    v.pass || !counted
}

fn main() {
    let mut ok = true;
    ok &= report("1", "prox correctness", true, prox_correctness);
    ok &= report("2", "solver optimality", true, solver_optimality);
    ok &= report("3", "exact recovery", true, exact_recovery);

    let start = Instant::now();
    let cfg = main_cell_config("certificate_study", 2, 100);
    let cert = run_certificate_study(&cfg).unwrap().remove(0);
    let shared = start.elapsed().as_secs_f64();
    // The golfing bounds need far more measurements than this cell offers;
    // reported for completeness, see the README.
    ok &= report("3c", "exact recovery, certificate at the same cell", false, || main_cell_certificate(&cert));

    ok &= report("4", "robustness separation", true, robustness_separation);
    ok &= report("5", "golfing identity", true, golfing_identity);
    ok &= report("6", "certificate pass rates", true, certificate_pass_rates);
    ok &= report("7", "concentration", true, || concentration(&cert));
    println!("    (certificate study at the recovery cell took {shared:.1} s)");
    ok &= report("8", "determinism", true, determinism);
    ok &= report("9", "duality cross-check", true, duality_cross_check);

    if !ok {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all counted criteria passed");
}
