use std::path::PathBuf;
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn vlasov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlasov"))
        .args(args)
        .env_remove("VLASOV_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn free_stream() -> String {
    configs().join("free_stream.toml").display().to_string()
}

#[test]
fn free_stream_simulation_succeeds_with_constant_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = vlasov(&["simulate", "--config", &free_stream(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let totals: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| l.starts_with("energy t="))
        .map(|l| {
            l.split("total=")
                .nth(1)
                .unwrap()
                .split_whitespace()
                .next()
                .unwrap()
                .to_string()
        })
        .collect();
    assert!(totals.len() > 2);
    assert!(totals.iter().all(|t| t == &totals[0]), "{totals:?}");
    assert!(out.join("run.toml").exists());
    assert!(out.join("history/manifest.toml").exists());
    assert!(out.join("history/energy.csv").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vlasov"))
        .args(["simulate", "--config", &free_stream()])
        .env("VLASOV_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("simulate/run.toml").exists());
}

#[test]
fn kernel_test_reports_the_translation_slope() {
    let dir = tempfile::tempdir().unwrap();
    let o = vlasov(&[
        "kernel-test",
        "--N",
        "3",
        "--p",
        "1.25",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("h,error"));
    let slope: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("slope = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 0.4).abs() < 0.04, "{slope}");
    assert!(dir.path().join("kernel_test.csv").exists());
    assert!(dir.path().join("summary.toml").exists());
}

#[test]
fn kernel_test_rejects_inadmissible_exponents() {
    let o = vlasov(&["kernel-test", "--N", "3", "--p", "2.0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn attractive_existence_is_refused_as_a_configuration_error() {
    let cfg = configs().join("existence.toml");
    let o = vlasov(&["existence", "--config", cfg.to_str().unwrap(), "--omega", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("repulsive"), "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_with_two() {
    let cfg = free_stream();
    for args in [
        vec!["simulate", "--config", &cfg, "--set", "run.bogus=1"],
        vec!["simulate", "--config", &cfg, "--set", "novalue"],
        vec!["simulate", "--config", "/nonexistent/config.toml"],
        vec!["simulate", "--config", &cfg, "--threads", "0"],
        vec!["stability", "--config", &cfg],
        vec!["no-such-subcommand"],
    ] {
        let o = vlasov(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_abort_exits_with_three() {
    let o = vlasov(&[
        "simulate",
        "--config",
        &free_stream(),
        "--set",
        r#"datum.shape={kind="gaussian", x_sigma=1.0, v_sigma=1e200}"#,
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn failed_verdicts_exit_with_one() {
    // With a threshold no trajectory pair can exceed, deviations are all zero
    // and cannot decrease along the sequence.
    let cfg = configs().join("strong_stability.toml");
    let o = vlasov(&[
        "stability",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "functional.gamma=100.0",
        "--set",
        "run.particles=50",
        "--set",
        "run.replicates=1",
        "--set",
        "run.horizon=0.2",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn suite_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("existence.toml");
    let o = vlasov(&[
        "existence",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "run.particles=100",
        "--set",
        "run.replicates=1",
        "--set",
        "run.horizon=0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("report.toml")).unwrap();
    assert!(report.contains("suite = \"existence\""));
    assert!(report.contains("[config"));
    assert!(dir.path().join("metrics.csv").exists());
}
