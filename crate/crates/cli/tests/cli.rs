use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
mode = "phase_transition"
[problem]
n = 32
m = 24
columns = 2
ensemble = { kind = "rademacher_rows" }
[grid]
k_t = [1, 12]
corruptions_per_column = [0, 8]
[run]
trials = 2
base_seed = 5
"#;

fn rgl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rgl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn phase_writes_csv_and_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let res = rgl(&["phase", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        std::fs::read_to_string(out.join("phase.csv")).unwrap()
    };
    let a = run("5", "a");
    assert_eq!(a, run("5", "b"));
    assert_ne!(a, run("6", "c"));
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn dumped_failure_can_be_resolved() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let res = rgl(&["phase", "--config", &cfg, "--out", out.to_str().unwrap(), "--dump-failures", "--threads", "2"]);
    assert!(res.status.success());
    let failures = out.join("failures");
    let bundle = std::fs::read_dir(&failures).unwrap().next().unwrap().unwrap().path();
    let report = dir.path().join("report.json");
    let res = rgl(&["solve", "--bundle", bundle.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["recovery"]["success"], false);
}

#[test]
fn gen_then_solve_recovers_clean_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("bundles");
    let res = rgl(&["gen", "--config", &cfg, "--out", out.to_str().unwrap(), "--trials", "1"]);
    assert!(res.status.success());
    let cell = out.join("kt1_k0_lam0.5372");
    let bundle = std::fs::read_dir(&cell).unwrap().next().unwrap().unwrap().path();
    for program in ["rgl", "l21", "group-lasso"] {
        let report = dir.path().join(format!("{program}.json"));
        let res = rgl(&["solve", "--bundle", bundle.to_str().unwrap(), "--program", program, "--out", report.to_str().unwrap()]);
        assert!(res.status.success());
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(json["recovery"]["success"], true, "{program}");
    }
}

#[test]
fn cert_and_compare_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("k_t = [1, 12]", "k_t = [1]").replace("m = 24", "m = 400"));
    let out = dir.path().join("out");
    assert!(rgl(&["cert", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(out.join("certificate.csv").exists());
    assert!(rgl(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(out.join("compare_pairs.csv").exists());
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode = \"phase_transition\"\n[problem]\nn = 0\n");
    assert!(!rgl(&["phase", "--config", &cfg]).status.success());
    assert!(!rgl(&["solve", "--bundle", "/nonexistent"]).status.success());
}
