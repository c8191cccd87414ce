use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn homog(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homog"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("HOMOG_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn run_config(cmd: &str, name: &str, out: &Path) -> Output {
    let cfg = configs().join(name);
    homog(&[cmd, cfg.to_str().unwrap()], out)
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn equidist_writes_table_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("equidist", "equidist_golden.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("equidist.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("R,A,N,ratio,deviation"));
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(last[0], "10000");
    assert!(last[4].parse::<f64>().unwrap().abs() < 0.01);
    let m = manifest(dir.path());
    assert_eq!(m["command"], "equidist");
    assert_eq!(m["exit_code"], 0);
    assert!(m["wall_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["config"]["delta"], 0.1);
    assert!(m["config_text"].as_str().unwrap().contains("cube_sides"));
}

#[test]
fn solve_reproduces_harmonic_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("solve", "solve_square.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let f = std::fs::File::open(dir.path().join("solution.grid")).unwrap();
    let g = homog_core::fdsolver::GridField::read_text(std::io::BufReader::new(f)).unwrap();
    for k in 0..g.len() {
        if g.mask[k] == homog_core::fdsolver::NodeKind::Exterior {
            continue;
        }
        let x = g.position(k);
        let exact = x[0] * x[0] - x[1] * x[1] + 0.5 * x[0] * x[1];
        assert!((g.values[k] - exact).abs() < 1e-10);
    }
    assert!(dir.path().join("convergence.csv").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "direction = [1.0, 2.0]\ndelta = 0.1\n").unwrap();
    let o = homog(&["equidist", bad.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/error.json")).unwrap()).unwrap();
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("cube_sides"));

    std::fs::write(&bad, "direction = [1.0, 2.0\n").unwrap();
    let o = homog(&["equidist", bad.to_str().unwrap()], &dir.path().join("out2"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn numerical_failure_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("solve_square.toml")).unwrap();
    let cfg = dir.path().join("slow.toml");
    std::fs::write(&cfg, text.replace("tol = 1e-12", "tol = 1e-12\nmax_iter = 3")).unwrap();
    let o = homog(&["solve", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    let err: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/error.json")).unwrap()).unwrap();
    assert_eq!(err["kind"], "not_converged");
    assert!(err["history"].is_array());
    assert_eq!(manifest(&dir.path().join("out"))["exit_code"], 3);
}

#[test]
fn barrier_suite_matches_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("barriers", "barriers_3d.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("barriers.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn validate_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("validate", "validate_pucci.toml", dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("audit", "audit_half_disk.toml", dir.path());
    assert_eq!(o.status.code(), Some(0));
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("audit.json")).unwrap()).unwrap();
    assert_eq!(a["verdict"], "not_iddc");
}

#[test]
fn corrector_rational_limit_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run_config("corrector", "corrector_rational.toml", d.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let j: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("corrector.json")).unwrap()).unwrap();
    assert!((j["ray_limit"]["alpha"].as_f64().unwrap() - 1.0).abs() < 0.02);
    for f in ["profile.csv", "strip.grid"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn gbar_on_disk_is_the_cell_average() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("gbar", "gbar_disk.toml", dir.path());
    assert!(
        matches!(o.status.code(), Some(0) | Some(4)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("gbar.csv")).unwrap();
    let mut irrational = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[4] == "irrational" {
            irrational += 1;
            let gbar: f64 = f[9].parse().unwrap();
            assert!((gbar - 0.25).abs() < 0.02, "{line}");
            assert_eq!(f[8], "true");
            assert!((f[10].parse::<f64>().unwrap() - 0.25).abs() < 1e-9);
        }
    }
    assert!(irrational >= 6);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_homog"))
        .arg("equidist")
        .arg(configs().join("equidist_golden.toml"))
        .env("HOMOG_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("equidist.csv").exists());
}

#[test]
fn unexpected_barrier_result_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("barriers_3d.toml")).unwrap();
    let cfg = dir.path().join("b.toml");
    std::fs::write(
        &cfg,
        text.replace("samples = 2000", "samples = 500\nperturbation = -0.01"),
    )
    .unwrap();
    let o = homog(&["barriers", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
    assert!(!dir.path().join("out/error.json").exists());
    assert_eq!(manifest(&dir.path().join("out"))["exit_code"], 4);
}
