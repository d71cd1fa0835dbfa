use std::path::Path;
use std::process::{Command, Output};

use freq_lab::RunConfig;

fn freq_lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freq-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FREQ_LAB_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn ode_counterexample_and_bad_q() {
    let dir = tempfile::tempdir().unwrap();
    let o = freq_lab(dir.path(), &["ode", "--counterexample", "--q", "1.5"]);
    assert_eq!(code(&o), 0);
    let s = read_json(&dir.path().join("ode_summary.json"));
    assert!(s["max_residual"].as_f64().unwrap() <= 1e-12);
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,u,du\n"));

    let o = freq_lab(dir.path(), &["ode", "--q", "2.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("q must lie in [1,2)"));
}

#[test]
fn ode_pme_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = freq_lab(dir.path(), &["ode", "--pme", "--q", "1.5", "--N", "3"]);
    assert_eq!(code(&o), 0);
    let s = read_json(&dir.path().join("ode_summary.json"));
    assert_eq!(s["pass"], true);
    let csv = std::fs::read_to_string(dir.path().join("pme.csv")).unwrap();
    assert!(csv.starts_with("x,t,w,residual\n"));
}

#[test]
fn solve_then_frequency_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&freq_lab(d, &["solve", "--mode", "radial", "--N", "2", "--h", "2e-3", "--a", "0.5"])), 0);
    let field = d.join("field.txt");
    let f = field.to_str().unwrap();
    assert_eq!(code(&freq_lab(d, &["frequency", "--field", f, "--N", "2"])), 0);
    let profile = std::fs::read_to_string(d.join("profile.csv")).unwrap();
    assert!(profile.starts_with("r,H,D,D1,d,dprime,N,surfaceD\n"));
    assert_eq!(code(&freq_lab(d, &["audit", "--field", f, "--N", "2"])), 0);
    let chain = read_json(&d.join("certificate.json"));
    assert_eq!(chain["classification"], "genuine_nonvanishing");
    assert_eq!(chain["input_hash"].as_str().unwrap().len(), 64);
    // one record per run
    let runs = std::fs::read_to_string(d.join("runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 3);
}

#[test]
fn frequency_of_linear_sample() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&freq_lab(
            d,
            &["solve", "--mode", "sample", "--exact", "x1", "--linear", "--nt", "512", "--nr", "65"]
        )),
        0
    );
    let f = d.join("field.txt");
    assert_eq!(code(&freq_lab(d, &["frequency", "--field", f.to_str().unwrap(), "--linear"])), 0);
    let profile = std::fs::read_to_string(d.join("profile.csv")).unwrap();
    for line in profile.lines().skip(2) {
        let n: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        assert!((n - 1.0).abs() < 1e-6, "{line}");
    }
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = freq_lab(dir.path(), &["frequency", "--field", "/nonexistent/field.txt"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn glued_and_zero_fields_audit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&freq_lab(d, &["solve", "--mode", "glued"])), 0);
    let f = d.join("field.txt");
    let c = code(&freq_lab(d, &["audit", "--field", f.to_str().unwrap()]));
    assert!(c == 4 || c == 5, "{c}");
    assert_eq!(code(&freq_lab(d, &["audit", "--field", f.to_str().unwrap(), "--bypass-gate"])), 4);

    assert_eq!(code(&freq_lab(d, &["solve", "--mode", "sample", "--exact", "0"])), 0);
    let o = freq_lab(d, &["audit", "--field", f.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("identically negligible"));
}

#[test]
fn solve_harmonic_order_and_manufactured_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = freq_lab(d, &["solve", "--mode", "grid", "--linear", "--boundary", "x1^2 - x2^2 + exp(x1)*cos(x2)"]);
    assert_eq!(code(&o), 0);
    let s = read_json(&d.join("solve_summary.json"));
    assert!((s["measured_order"].as_f64().unwrap() - 2.0).abs() < 0.2);

    let o = freq_lab(d, &["solve", "--mode", "manufactured", "--linear", "--jobs", "2"]);
    assert_eq!(code(&o), 0);
    let table = std::fs::read_to_string(d.join("convergence.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn solve_nonconvergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[tolerances.iteration]\nmax_iters = 1\ntol = 1e-14\n\n[solve]\nboundary = \"0.5\"\n").unwrap();
    let o = freq_lab(dir.path(), &["solve", "--mode", "grid", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let s = read_json(&dir.path().join("solve_summary.json"));
    assert_eq!(s["converged"], false);
}

#[test]
fn check_passes_and_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&freq_lab(d, &["check", "--q", "1.5"])), 0);
    let cfg = d.join("neg.toml");
    std::fs::write(
        &cfg,
        "[nonlinearity]\nkind = \"sum_of_powers\"\nterms = [{ q = 1.3, coeff = \"1\" }, { q = 1.6, coeff = \"-0.5\" }]\n",
    )
    .unwrap();
    assert_eq!(code(&freq_lab(d, &["check", "--config", cfg.to_str().unwrap()])), 1);
    let r = read_json(&d.join("assumptions.json"));
    let failed: Vec<&serde_json::Value> = r["report"]["clauses"].as_array().unwrap().iter().filter(|c| c["pass"] == false).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|c| !c["witness"].is_null()));
}

#[test]
fn composite_with_superlinear_part_passes_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("remark.toml");
    std::fs::write(
        &cfg,
        "[nonlinearity]\nkind = \"sum_of_powers\"\nterms = [{ q = 1.2, coeff = \"1 + x1^2\" }, { q = 1.7, coeff = \"0.5\" }]\nsuperlinear = \"s^3\"\nkappa2 = 0.3\n",
    )
    .unwrap();
    assert_eq!(code(&freq_lab(dir.path(), &["check", "--config", cfg.to_str().unwrap()])), 0);
}

#[test]
fn env_var_sets_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_freq-lab"))
        .args(["ode", "--counterexample"])
        .env("FREQ_LAB_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("ode_summary.json").exists());
}

#[test]
fn shipped_configs_round_trip() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&root).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let c = RunConfig::load(&p).unwrap();
            assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c, "{}", p.display());
            c.problem().unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
}
