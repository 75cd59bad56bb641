use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ldla-cli-{}-{name}", std::process::id()));
    fs::remove_dir_all(&dir).ok();
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn ldla(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ldla")).args(args).output().unwrap()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_trajectory_kernel_and_manifest() {
    let dir = scratch("run");
    let out = dir.to_str().unwrap();
    let o = ldla(&["run", "--law", "power:1.5", "--particles", "40", "--seed", "9", "--out", out, "--dump-gluing"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("n,D_n,delta_D,min_pt,max_pt,added_x,anchor_a\n"));
    assert_eq!(csv.lines().count(), 41);
    assert!(fs::read_to_string(dir.join("kernel.csv")).unwrap().starts_with("n,a_n,extrapolated_flag\n"));
    let m = json(dir.join("manifest.json"));
    for key in ["artifact_version", "config", "seeds", "digests", "wallclock"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(m["seeds"][0], 9);
    assert!((json(dir.join("gluing.json"))["total_mass"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn seed_flag_reproduces_runs() {
    let a = scratch("seed-a");
    let b = scratch("seed-b");
    for dir in [&a, &b] {
        let o = ldla(&["run", "--law", "z2", "--particles", "60", "--seed", "4", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
    fs::remove_dir_all(a).ok();
    fs::remove_dir_all(b).ok();
}

#[test]
fn config_file_is_honoured_and_flags_override_it() {
    let dir = scratch("config");
    let cfg = dir.join("run.json");
    fs::write(&cfg, r#"{"law":{"kind":"lazy_nearest_neighbor","alpha":null,"holding_prob":0.5,"table_cutoff":1},"n_particles":25,"seed":3}"#).unwrap();
    let out = dir.join("out");
    let o = ldla(&["run", "--config", cfg.to_str().unwrap(), "--particles", "12", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    // nearest-neighbour laws grow the interval one site at a time
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(2) == Some("1")));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn sweep_then_report_round_trips() {
    let dir = scratch("sweep");
    let out = dir.to_str().unwrap();
    let o = ldla(&["sweep", "--law", "power:4", "--particles", "120", "--runs", "3", "--workers", "2", "--seed", "5", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(dir.join("manifest.json"));
    assert_eq!(m["seeds"].as_array().unwrap().len(), 3);
    assert!(dir.join("trajectory_0002.csv").exists());
    let o = ldla(&["report", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(dir.join("report.json"));
    let swept = json(dir.join("exponent.json"));
    assert_eq!(report["exponent"]["beta_hat"], swept["beta_hat"]);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn quick_validation_writes_a_passing_report() {
    let dir = scratch("validate");
    let o = ldla(&["validate", "--quick", "--seed", "3", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v = json(dir.join("validation.json"));
    for check in v["checks"].as_array().unwrap() {
        assert_eq!(check["pass"], true, "{check}");
    }
    fs::remove_dir_all(dir).ok();
}

#[test]
fn z3_run_exports_decimal_strings_and_capacity() {
    let dir = scratch("z3");
    let o = ldla(&["run", "--law", "z3", "--particles", "10", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = json(dir.join("trajectory_z3.json"));
    assert!(t["records"][0]["d_n"].is_string());
    let e = json(dir.join("escape_capacity.json"));
    assert!(e["capacity"]["capacity"].as_f64().unwrap() > 0.0);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn bad_input_fails_cleanly() {
    let o = ldla(&["run", "--law", "power:0.5", "--particles", "5", "--out", "/nonexistent-ldla"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = ldla(&["run", "--sampler", "fast"]);
    assert!(!o.status.success());
}
