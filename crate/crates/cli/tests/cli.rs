use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_renewal-coupling");

const SMALL_EXP: &str = r#"
[law]
family = "exponential"
params = { rate = 1.0 }

[run]
b = 0.0
b_prime = 1.0
theta = 4.0
ells = [1]
betas = [0.1]
t_grid = [5, 10]
replicas = 2000
tv_replicas = 2000
lorden_replicas = 500
seed = 3
write_tau_csv = true
"#;

fn run(args: &[&str], envs: &[(&str, &Path)], cwd: &Path) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).current_dir(cwd).env_remove("RENEWAL_COUPLING_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_writes_checkable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_EXP);
    let out = dir.path().join("out");
    let o = run(&["verify", "-c", &cfg, "--out", out.to_str().unwrap()], &[], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("theta = 4\n"), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS ")), "{stdout}");
    for name in ["bounds.json", "sim.json", "verdicts.json", "tv_curve.csv", "tau.csv"] {
        let path = out.join(name);
        let c = run(&["--check", path.to_str().unwrap()], &[], dir.path());
        assert_eq!(c.status.code(), Some(0), "{name}: {}", stderr(&c));
    }
    let csv = std::fs::read_to_string(out.join("tv_curve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,analytic_bound,empirical_tv"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn check_rejects_tampered_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_EXP);
    let out = dir.path().join("out");
    let o = run(&["bounds", "-c", &cfg, "--out", out.to_str().unwrap()], &[], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let path = out.join("bounds.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["params"]["q"] = serde_json::json!(0.9);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let c = run(&["--check", bad.to_str().unwrap()], &[], dir.path());
    assert_eq!(c.status.code(), Some(2), "{}", stderr(&c));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "t,analytic_bound,empirical_tv\n5,0.5,\n10,0.7,\n").unwrap();
    let c = run(&["--check", csv.to_str().unwrap()], &[], dir.path());
    assert_eq!(c.status.code(), Some(2));
    let c = run(&["--check", dir.path().join("missing.json").to_str().unwrap()], &[], dir.path());
    assert_eq!(c.status.code(), Some(2));
}

#[test]
fn threshold_below_lorden_ratio_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL_EXP.replace("theta = 4.0", "theta = 1.5"));
    let o = run(&["bounds", "-c", &cfg], &[], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("run.theta"), "{err}");
    let r: f64 = err.split("R = ").nth(1).expect("message reports R").trim().parse().unwrap();
    assert!((r - 2.0).abs() < 1e-9, "{err}");
    assert!(!dir.path().join("bounds.json").exists());
}

#[test]
fn malformed_configs_are_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        (SMALL_EXP.replace("seed = 3", "sede = 3"), "sede"),
        (SMALL_EXP.replace("\"exponential\"", "\"gamma\""), "gamma"),
        (SMALL_EXP.replace("replicas = 2000\n", "replicas = 0\n"), "run.replicas"),
        (SMALL_EXP.replace("t_grid = [5, 10]", "t_grid = [10, 5]"), "t_grid"),
        (SMALL_EXP.replace("rate = 1.0", "rate = -1.0"), "law"),
    ] {
        let cfg = write_config(dir.path(), &text);
        let o = run(&["verify", "-c", &cfg], &[], dir.path());
        assert_eq!(o.status.code(), Some(2), "{needle}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{needle}: {}", stderr(&o));
    }
    let o = run(&["bounds", "-c", "no/such/file.toml"], &[], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let cfg = write_config(dir.path(), SMALL_EXP);
    let o = run(&["bounds", "-c", &cfg], &[("RENEWAL_COUPLING_OUT", &env_dir)], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(env_dir.join("bounds.json").exists());

    let flag_dir = dir.path().join("from_flag");
    let o = run(
        &["bounds", "-c", &cfg, "--out", flag_dir.to_str().unwrap()],
        &[("RENEWAL_COUPLING_OUT", &env_dir)],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("bounds.json").exists());

    let o = run(&["bounds", "-c", &cfg], &[], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("bounds.json").exists());
}

#[test]
fn auto_values_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_EXP
        .replace("theta = 4.0", "theta = \"auto\"")
        .replace("betas = [0.1]", "betas = \"auto\"");
    let cfg = write_config(dir.path(), &text);
    let o = run(&["bounds", "-c", &cfg], &[], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("(auto)"), "{stdout}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
    assert_eq!(v["theta_auto"], serde_json::json!(true));
    assert_eq!(v["betas_auto"], serde_json::json!(true));
}

#[test]
fn tv_curve_needs_a_time_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL_EXP.replace("t_grid = [5, 10]", "t_grid = []"));
    let o = run(&["tv-curve", "-c", &cfg], &[], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_grid"), "{}", stderr(&o));
}

#[test]
fn seed_flag_changes_the_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_EXP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = run(&["simulate", "-c", &cfg, "--seed", seed, "--out", out.to_str().unwrap()], &[], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let sa = std::fs::read(a.join("sim.json")).unwrap();
    let sb = std::fs::read(b.join("sim.json")).unwrap();
    assert_ne!(sa, sb);
}

#[test]
fn tv_curve_with_only_the_first_moment_is_ten_over_t() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_EXP
        .replace("betas = [0.1]", "betas = []")
        .replace("t_grid = [5, 10]", "t_grid = [2, 5, 10, 20, 50]")
        .replace("b_prime = 1.0", "b_prime = 0.0");
    let cfg = write_config(dir.path(), &text);
    let o = run(&["tv-curve", "-c", &cfg], &[], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("tv_curve.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        let want = (10.0 / r[0]).min(1.0);
        assert!((r[1] - want).abs() < 1e-9, "t = {}: {} vs {want}", r[0], r[1]);
        assert!((0.0..=1.0).contains(&r[2]));
    }
}
