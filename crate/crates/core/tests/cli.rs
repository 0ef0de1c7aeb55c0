use std::path::Path;
use std::process::Command;

use kinefp::cli::artifacts::read_binary_array;
use kinefp::cli::config::EXAMPLE_CONFIG;

fn kinefp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kinefp"))
        .args(args)
        .env_remove("KINEFP_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn run_writes_artifacts_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", EXAMPLE_CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let out = kinefp(&[
            "run",
            "--config",
            &cfg,
            "--out-dir",
            d.to_str().unwrap(),
            "--snapshots",
            "5",
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "report.json",
        "ledger.json",
        "manifest.json",
        "fields.bin",
        "fields.json",
        "p_tilde.png",
        "c.png",
    ] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    // nt = 20 at cadence 5: steps 0, 5, 10, 15, 20
    let csvs: Vec<_> = std::fs::read_dir(a.join("csv")).unwrap().collect();
    assert_eq!(csvs.len(), 15);
    for name in ["p_tilde_00010.csv", "c_00020.csv", "j_00000.csv"] {
        let x = std::fs::read(a.join("csv").join(name)).unwrap();
        let y = std::fs::read(b.join("csv").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between reruns");
    }
    let text = std::fs::read_to_string(a.join("csv/c_00020.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "t,i0,x0,value");
    assert_eq!(lines.count(), 32);

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["status"]["status"], "converged");
    let ledger: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["config_hash"], report["config_hash"]);
    assert!(ledger["ledgers"]
        .as_array()
        .unwrap()
        .iter()
        .all(|l| l["passed"] == true));

    let (shape, p) = read_binary_array(&a, "p").unwrap();
    assert_eq!(shape, vec![5, 32, 32]);
    assert!(p.iter().all(|v| v.is_finite()));
    let (shape, c) = read_binary_array(&a, "c").unwrap();
    assert_eq!(shape, vec![5, 32]);
    // last snapshot of c matches the CSV
    let last: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(&c[4 * 32..], &last[..]);
}

#[test]
fn missing_field_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &EXAMPLE_CONFIG.replace("sigma = 0.5\n", ""),
    );
    let out = kinefp(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    let out = kinefp(&["run", "--config", "/nonexistent.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_density_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = EXAMPLE_CONFIG.replace(
        "kind = \"gaussian\"\namplitude = 1.0\nx_center = [0.0]\nv_center = [0.5]\nx_width = 0.5\nv_width = 0.5",
        "kind = \"zero\"",
    );
    assert!(text.contains("kind = \"zero\""));
    let cfg = write_config(tmp.path(), "z.toml", &text);
    let dir = tmp.path().join("z");
    let out = kinefp(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        dir.to_str().unwrap(),
        "--no-png",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (_, p) = read_binary_array(&dir, "p").unwrap();
    assert!(p.iter().all(|v| *v == 0.0));
    assert!(!dir.join("p_tilde.png").exists());
}

#[test]
fn nonconvergence_exits_three_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{EXAMPLE_CONFIG}\n[scheme]\nmax_iter = 2\ntol = 1e-12\n");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let dir = tmp.path().join("o");
    let out = kinefp(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        dir.to_str().unwrap(),
        "--no-png",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["status"]["status"], "max_iterations");
}

#[test]
fn raw_flux_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", EXAMPLE_CONFIG);
    let dir = tmp.path().join("o");
    let out = kinefp(&[
        "run",
        "--config",
        &cfg,
        "--out-dir",
        dir.to_str().unwrap(),
        "--flux-mode",
        "raw",
        "--no-png",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["horizon"]["horizon"]["tau"].as_f64().unwrap() > 0.0);
    assert_eq!(report["horizon"]["envelope_holds"], true);
}

#[test]
fn verify_exit_codes() {
    let out = kinefp(&["--threads", "2", "verify", "kernels"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("kernel-composition") && stdout.contains("4 checks, 0 failed"));
    assert_eq!(kinefp(&["verify", "everything"]).status.code(), Some(2));
}

#[test]
fn sweep_rows_and_order_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &EXAMPLE_CONFIG.replace("nx = 32\nnv = 32", "nx = 16\nnv = 16"),
    );
    let dir = tmp.path().join("s");
    let out = kinefp(&[
        "sweep",
        "--config",
        &cfg,
        "--param",
        "alpha1",
        "--values",
        "0,0.5,1",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let mass: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(mass.len(), 3);
    assert!(mass[0] < mass[1] && mass[1] < mass[2]);

    let out = kinefp(&[
        "sweep",
        "--config",
        &cfg,
        "--param",
        "nt",
        "--values",
        "10,20,40",
        "--out-dir",
        dir.to_str().unwrap(),
        "--parallel",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let order: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(order > 0.5 && order < 1.5, "{order}");

    assert_eq!(
        kinefp(&["sweep", "--config", &cfg, "--param", "alpha1", "--values", ""])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kinefp(&["sweep", "--config", &cfg, "--param", "alpha1", "--values", "1,x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kinefp(&["sweep", "--config", &cfg, "--param", "speed", "--values", "1"])
            .status
            .code(),
        Some(2)
    );
}
