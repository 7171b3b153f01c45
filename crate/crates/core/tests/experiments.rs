use rgl_core::experiments::*;
use rgl_core::instance::ProblemInstance;
use rgl_core::solver::{solve_rgl, SolverOptions};

fn config(mode: &str, body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!("mode = \"{mode}\"\n{body}")).unwrap()
}

const DESK: &str = r#"
[problem]
n = 64
m = 48
columns = 3
ensemble = { kind = "rademacher_rows" }
"#;

#[test]
fn clean_deep_in_budget_cell_always_recovers() {
    let cfg = config("phase_transition", &format!("{DESK}[grid]\nk_t = [1]\ncorruptions_per_column = [0]\n[run]\ntrials = 50\nbase_seed = 3\n"));
    let res = run_phase_transition(&cfg).unwrap();
    assert_eq!(res.cells.len(), 1);
    assert_eq!(res.cells[0].successes, 50);
}

#[test]
fn dense_heavily_corrupted_cell_never_recovers() {
    let cfg = config(
        "phase_transition",
        "[problem]\nn = 16\nm = 12\ncolumns = 2\nensemble = { kind = \"rademacher_rows\" }\n[grid]\nk_t = [16]\ncorruption_fraction = [0.5]\n[run]\ntrials = 10\n",
    );
    let res = run_phase_transition(&cfg).unwrap();
    assert_eq!(res.cells[0].successes, 0);
    assert_eq!(res.cells[0].k_max, 6);
}

#[test]
fn success_rate_non_increasing_in_row_sparsity() {
    let cfg = config(
        "phase_transition",
        "[problem]\nn = 32\nm = 24\ncolumns = 2\nensemble = { kind = \"rademacher_rows\" }\n[grid]\nk_t = [1, 2, 4, 6, 8, 10]\ncorruptions_per_column = [1]\n[run]\ntrials = 50\nbase_seed = 11\n",
    );
    let res = run_phase_transition(&cfg).unwrap();
    let rates: Vec<usize> = res.cells.iter().map(|c| c.successes).collect();
    for w in rates.windows(2) {
        assert!(w[1] <= w[0] + 1, "{rates:?}");
    }
    assert!(rates[0] > rates[rates.len() - 1], "{rates:?}");
}

#[test]
fn csv_is_byte_identical_and_thread_invariant() {
    let body = format!("{DESK}[grid]\nk_t = [2, 6]\ncorruptions_per_column = [0, 3]\n[run]\ntrials = 6\nbase_seed = 42\n");
    let cfg = config("phase_transition", &body);
    let a = cells_csv(&run_phase_transition(&cfg).unwrap().cells);
    let b = cells_csv(&run_phase_transition(&cfg).unwrap().cells);
    assert_eq!(a, b);
    assert!(a.starts_with(CSV_HEADER));
    let mut threaded = cfg.clone();
    threaded.run.threads = 3;
    assert_eq!(cells_csv(&run_phase_transition(&threaded).unwrap().cells), a);
}

#[test]
fn worst_seed_regenerates_a_failing_instance() {
    let cfg = config("phase_transition", &format!("{DESK}[grid]\nk_t = [10]\ncorruptions_per_column = [6]\n[run]\ntrials = 8\nbase_seed = 9\n"));
    let res = run_phase_transition(&cfg).unwrap();
    let cell = &res.cells[0];
    assert!(cell.successes < cell.trials);
    let grid_cell = cfg.cells()[0];
    let inst: ProblemInstance = cfg.instance(&grid_cell, cell.worst_trial_seed).unwrap();
    let rep = solve_rgl(&inst.m, &inst.ensemble, inst.lambda, &cfg.solver).unwrap();
    let check = rep.check_recovery(&inst.y_true, &inst.s_true, cfg.run.rel_tol).unwrap();
    assert!(!check.success);
}

#[test]
fn non_convergence_is_tallied_as_failure() {
    let mut cfg = config("phase_transition", &format!("{DESK}[grid]\nk_t = [2]\ncorruptions_per_column = [2]\n[run]\ntrials = 4\n"));
    cfg.solver = SolverOptions { max_iters: 2, ..Default::default() };
    let cell = &run_phase_transition(&cfg).unwrap().cells[0];
    assert_eq!(cell.solver_failures, 4);
    assert_eq!(cell.successes, 0);
    assert_eq!(cell.mean_iters, 2.0);
}

#[test]
fn clean_certificate_cells_have_zero_initial_bound() {
    let cfg = config(
        "certificate_study",
        "[problem]\nn = 64\nm = 1200\ncolumns = 2\nensemble = { kind = \"rademacher_rows\" }\n[grid]\nk_t = [2]\ncorruptions_per_column = [0, 2]\n[run]\ntrials = 10\n[certificate]\nconcentration_checks = false\n",
    );
    let cells = run_certificate_study(&cfg).unwrap();
    assert_eq!(cells[0].max_bound_initial, 0.0);
    assert_eq!(cells[0].bound_pass[0], 10);
    assert!(cells[1].max_bound_initial > 0.0);
    for c in &cells {
        assert_eq!(c.contraction_given_isometry, c.batch_isometry_trials);
        assert!(c.max_identity_residual <= 1e-10);
        assert!(!c.infeasible);
    }
    assert!(certificate_csv(&cells).starts_with(CERT_CSV_HEADER));
}

#[test]
fn infeasible_plans_mark_the_cell() {
    let cfg = config(
        "certificate_study",
        "[problem]\nn = 64\nm = 20\ncolumns = 2\nensemble = { kind = \"rademacher_rows\" }\n[grid]\nk_t = [1]\ncorruptions_per_column = [8]\n[run]\ntrials = 3\n",
    );
    assert!(run_certificate_study(&cfg).unwrap()[0].infeasible);
}

#[test]
fn robust_program_dominates_under_gross_corruption() {
    let mut cfg = config(
        "baseline_compare",
        &format!("{DESK}[grid]\nk_t = [1, 2]\ncorruption_fraction = [0.05]\n[run]\ntrials = 20\nbase_seed = 4\n"),
    );
    cfg.problem.error_scale = 10.0;
    let res = run_baseline_compare(&cfg).unwrap();
    for chunk in res.cells.chunks(3) {
        assert!(chunk[0].successes >= chunk[1].successes, "{chunk:?}");
        assert!(chunk[0].successes >= chunk[2].successes, "{chunk:?}");
    }
}

#[test]
fn all_programs_recover_clean_in_budget_cells() {
    let cfg = config(
        "baseline_compare",
        &format!("{DESK}[grid]\nk_t = [1, 2]\ncorruptions_per_column = [0]\n[run]\ntrials = 10\nbase_seed = 6\n"),
    );
    let res = run_baseline_compare(&cfg).unwrap();
    for c in &res.cells {
        assert_eq!(c.successes, c.trials, "{c:?}");
    }
    let pairs = pairs_csv(&res, &["rgl", "l21_equality", "group_lasso"]);
    assert_eq!(pairs.lines().count(), 1 + 2 * 10);
}

#[test]
fn default_lambda_sits_on_the_plateau() {
    let mut cfg = config(
        "phase_transition",
        &format!("{DESK}[grid]\nk_t = [2]\ncorruptions_per_column = [2]\n[run]\ntrials = 30\nbase_seed = 8\n"),
    );
    cfg.problem.lambda_multipliers = vec![0.25, 1.0, 4.0];
    let res = run_phase_transition(&cfg).unwrap();
    let rates: Vec<f64> = res.cells.iter().map(|c| c.success_rate()).collect();
    let best = rates.iter().copied().fold(0.0, f64::max);
    assert!(rates[1] >= 0.9 * best, "{rates:?}");
}

#[test]
fn theorem_regime_skips_over_budget_cells() {
    let cfg = config(
        "theorem_regime",
        &format!("{DESK}[grid]\nk_t = [0, 1]\ncorruptions_per_column = [0]\n[run]\ntrials = 2\n"),
    );
    let res = run_phase_transition(&cfg).unwrap();
    assert_eq!(res.cells.len(), 1);
    assert_eq!(res.cells[0].k_t, 0);
    assert_eq!(res.skipped.len(), 1);
}

#[test]
fn experiment_writes_outputs_and_failure_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("phase_transition", &format!("{DESK}[grid]\nk_t = [10]\ncorruptions_per_column = [6]\n[run]\ntrials = 3\n"));
    let out = run_experiment(&cfg, dir.path(), true).unwrap();
    for name in ["phase.csv", "phase.dat", "metadata.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(!out.dumped.is_empty());
    let inst = ProblemInstance::load_bundle(&out.dumped[0]).unwrap();
    assert_eq!(inst.supports.k_t(), 10);
    let text = std::fs::read_to_string(dir.path().join("phase.dat")).unwrap();
    assert!(text.starts_with('#'));
}

#[test]
fn example_config_parses() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/phase.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.mode, ExperimentMode::PhaseTransition);
}
