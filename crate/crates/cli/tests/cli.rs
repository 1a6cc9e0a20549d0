//! End-to-end runs of the binary on the example configurations.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(stage: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulsive-ap"))
        .arg(stage)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn records(path: &Path) -> HashMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_data_gives_zero_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("zero.toml");
    for stage in ["simulate", "solve-ap"] {
        let o = run(stage, &cfg, dir.path(), &[]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for file in ["trajectory.tsv", "u_star.tsv", "y_star.tsv"] {
        let rows = data_rows(&dir.path().join(file));
        assert!(!rows.is_empty(), "{file}");
        for row in rows {
            // leading columns are indices or times
            let skip = if file == "trajectory.tsv" || file == "u_star.tsv" { 2 } else { 1 };
            for v in &row[skip..] {
                assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{file}: {row:?}");
            }
        }
    }
}

#[test]
fn certified_instance_hits_each_surface_once() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("simulate", &config("logistic_certified.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let hits = data_rows(&dir.path().join("hits.tsv"));
    let mut surfaces: Vec<i64> = hits.iter().map(|r| r[1].parse().unwrap()).collect();
    let n = surfaces.len();
    surfaces.dedup();
    assert_eq!(surfaces.len(), n, "repeated surface in {surfaces:?}");
    assert_eq!(n, 31);
    let r = records(&dir.path().join("simulate.txt"));
    assert_eq!(r["max_hits_per_surface"], "1");
    assert_eq!(r["beating_surfaces"], "");

    let o = run("certify", &config("logistic_certified.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(records(&dir.path().join("certify.txt"))["all_passed"], "true");
    assert!(dir.path().join("certificate_30.txt").exists());
}

#[test]
fn leaving_the_ball_exits_with_numerical_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("simulate", &config("ball_exit.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.starts_with("status=numerical code=3 reason="), "{err}");
    let t: f64 = err
        .split("t = ")
        .nth(1)
        .and_then(|s| s.split(':').next())
        .and_then(|s| s.trim().parse().ok())
        .expect("exit time in the reason");
    assert!(t > 0.3 && t < 1.0, "{t}");
}

#[test]
fn invalid_configuration_exits_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(config("logistic_compliant.toml")).unwrap();
    for bad in [
        format!("{base}\n[overrides]\ntheta = 0.0\n"),
        format!("{base}\n[overrides]\ntheta = -1.0\n"),
        base.replace("offset = -0.02", "offset = 0.3"),
        base.replace("\"positive\"", "\"cubic\""),
        base.replace("j_hi = 30", "j_hi = -3"),
        base.replace("[window]", "[window]\nspeed = 1"),
    ] {
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, &bad).unwrap();
        let o = run("constants", &path, &dir.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
        assert!(stderr(&o).starts_with("status=validation code=2 reason="));
    }
    let o = run("constants", &dir.path().join("missing.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overridden_constants_reproduce_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(config("logistic_compliant.toml")).unwrap();
    let path = dir.path().join("ov.toml");
    let theta = std::f64::consts::LN_2;
    std::fs::write(&path, format!("{base}\n[overrides]\ntheta = {theta:?}\nm1 = 1.0\nbeta = 1.0\n")).unwrap();
    let o = run("constants", &path, dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = records(&dir.path().join("constants.txt"));
    // K2 = 2 M1 / (1 - e^{-beta theta}) = 2 / (1 - 1/2)
    let k2: f64 = r["bundle.K2"].parse().unwrap();
    assert!((k2 - 4.0).abs() < 1e-11, "{k2}");
    assert!((r["bundle.theta"].parse::<f64>().unwrap() - theta).abs() < 1e-12);
}

#[test]
fn logistic_instance_is_stable_and_meets_smallness() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("constants", &config("logistic_compliant.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "status=ok");
    let r = records(&dir.path().join("constants.txt"));
    assert_eq!(r["dichotomy.unstable_modes"], "");
    assert_eq!(r["smallness.all_pass"], "true");
}

#[test]
fn solve_ap_reports_converged_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve-ap", &config("logistic_compliant.toml"), dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let c = records(&dir.path().join("contraction.txt"));
    assert_eq!(c["smallness.all_pass"], "true");
    assert_ne!(c["smallness.observed_inner_ratio"], "none");
    let s = records(&dir.path().join("solution.txt"));
    assert_eq!(s["residual_pass"], "true");
    assert!(s["fixed_point_residual"].parse::<f64>().unwrap() < 1e-8);
    assert!(s["sup_norm_alpha"].parse::<f64>().unwrap() <= 1.0);
    let y = data_rows(&dir.path().join("y_star.tsv"));
    assert_eq!(y.first().unwrap()[0], "0");
    assert_eq!(y.last().unwrap()[0], "30");
    // u* hits restricted to the report window, one per surface
    assert_eq!(data_rows(&dir.path().join("u_star_hits.tsv")).len(), 31);
    let ap = records(&dir.path().join("almost_periodicity.txt"));
    assert!(ap.contains_key("eps0.periods") && ap.contains_key("eps1.periods"));
}

#[test]
fn runs_are_byte_identical_for_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("logistic_compliant.toml");
    for stage in ["constants", "simulate", "certify", "analyze-ap"] {
        for dir in [&a, &b] {
            let o = run(stage, &cfg, dir.path(), &["--seed", "42"]);
            assert!(o.status.success(), "{stage}: {}", stderr(&o));
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 5);
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
    assert_eq!(records(&a.path().join("constants.txt"))["seed"], "42");
}
