//! End-to-end CLI contract: exit codes, config validation messages, and the
//! artifact bundle.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kmtdep"))
}

#[test]
fn usage_error_exits_one() {
    let out = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("check-conditions"));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[experiment]\np = 1.5\n").unwrap();
    let out = bin().args(["check-conditions", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("experiment.p"), "stderr: {err}");
}

#[test]
fn unknown_process_parameter_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[process]\nkind = ar1\ntheta = 0.5\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("process.theta"));
}

#[test]
fn check_conditions_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[experiment]\ndelta_reps = 2000\ndelta_lmax = 10\nseed = 5\n\
                [process]\nkind = ar1\nrho = 0.5\n";
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, format!("{base}[schedule]\ncase = iii\n")).unwrap();
    let st = bin()
        .args(["check-conditions", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("g"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));

    // constant blocks are inadmissible for a geometric profile at this p
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, format!("{base}[schedule]\ncase = constant\nm = 2\n")).unwrap();
    let st = bin()
        .args(["check-conditions", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("b"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn simulate_writes_the_decomposition_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "[experiment]\nn_grid = 3^6\nseed = 9\n[process]\nkind = ma1\ntheta = 0.5\n\
         [schedule]\ncase = constant\nm = 2\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let st = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["paths.csv", "blocks.csv", "config.echo.toml"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let paths = std::fs::read_to_string(out_dir.join("paths.csv")).unwrap();
    assert!(paths.starts_with("i,S,S_dag,S_tilde,S_diamond"));
    assert_eq!(paths.lines().count(), 729 + 1);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "[experiment]\nn_grid = 3^5,3^6\nreplications = 6\nseed = 1\n\
         [process]\nkind = ar1\nrho = 0.5\n[schedule]\ncase = constant\nm = 2\n",
    )
    .unwrap();
    let run = |seed: &str, out: &str| {
        let st = bin()
            .args(["sip-experiment", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(st.success());
        std::fs::read(dir.path().join(out).join("rate.csv")).unwrap()
    };
    let a = run("42", "a");
    let b = run("42", "b");
    let c = run("43", "c");
    assert_eq!(a, b, "same seed must reproduce");
    assert_ne!(a, c, "different seed must differ");
}
