use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn endocert(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endocert"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn without_timestamps(mut v: Value) -> Value {
    let prov = v["provenance"].as_object_mut().unwrap();
    prov.remove("started_unix");
    prov.remove("finished_unix");
    v
}

#[test]
fn identical_configs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "map = \"cat\"\ngrid = 32\nseed = 7\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = endocert(out, &["certify", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ra, rb) = (report(&a, "certify"), report(&b, "certify"));
    assert_eq!(ra["report_hash"], rb["report_hash"]);
    assert_eq!(without_timestamps(ra), without_timestamps(rb));
    for file in ["certify.txt", "certify_critical.dat", "certify_splitting.dat"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "map = \"cat\"\ngrid = 32\n").unwrap();
    let o = endocert(dir.path(), &["homology", "--config", cfg.to_str().unwrap(), "--map", "diag", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path(), "homology");
    assert_eq!(r["map"]["name"], "diag");
    assert_eq!(r["config"]["seed"], 3);
}

#[test]
fn missing_map_file_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(dir.path(), &["certify", "--map", "/nonexistent/map.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("certify.json").exists());
}

#[test]
fn out_of_range_parameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(dir.path(), &["certify", "--map", "cat", "--eta", "2.0"]);
    assert_eq!(o.status.code(), Some(3));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "map = \"cat\"\ngird = 32\n").unwrap();
    let o = endocert(dir.path(), &["certify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn zero_iterates_write_a_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(dir.path(), &["arcs", "--map", "cat", "--iterates", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let dat = std::fs::read_to_string(dir.path().join("arcs_lengths.dat")).unwrap();
    let rows: Vec<&str> = dat.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect();
    assert_eq!(rows.len(), 1, "{dat}");
}

#[test]
fn identity_class_arcs_stay_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(dir.path(), &["arcs", "--map", "idhom"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn noop_surgery_leaves_coverage_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(dir.path(), &["perturb", "--map", "cat", "--recipe", "noop", "--probe-steps", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let p = &report(dir.path(), "perturb")["perturbation"];
    assert_eq!(p["before"]["coverage"], p["after"]["coverage"]);
    assert_eq!(p["before"]["min_coverage"], p["after"]["min_coverage"]);
    assert!(p["c1_distance"].as_f64().unwrap() < 1e-10);
}

#[test]
fn zero_budget_franks_exceeds_its_budget() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(
        dir.path(),
        &["perturb", "--map", "cat", "--recipe", "franks", "--scale", "0.5", "--epsilon", "0", "--probe-steps", "1000"],
    );
    assert_eq!(o.status.code(), Some(1));
    let p = &report(dir.path(), "perturb")["perturbation"];
    assert!(p["error"].as_str().unwrap().contains("exceeds allowance"), "{p}");
}

#[test]
fn explicit_franks_target_is_pinned() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(
        dir.path(),
        &["perturb", "--map", "cat", "--recipe", "franks", "--target", "2,1,1,1.05", "--probe-steps", "1000"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "perturb");
    assert_eq!(r["config"]["perturb"]["target"], serde_json::json!([[2.0, 1.0], [1.0, 1.05]]));
    let bad = endocert(dir.path(), &["perturb", "--map", "cat", "--recipe", "franks", "--target", "2,1"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn cat_periodic_census() {
    let dir = tempfile::tempdir().unwrap();
    let o = endocert(dir.path(), &["periodic", "--map", "cat"]);
    assert_eq!(o.status.code(), Some(0));
    let census = &report(dir.path(), "periodic")["periodic"]["census"];
    let counts: Vec<u64> = census.as_array().unwrap().iter().map(|c| c["newton"].as_u64().unwrap()).collect();
    assert_eq!(counts, [1, 5, 16]);
}

#[test]
fn environment_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_endocert"))
        .args(["homology", "--map", "cat"])
        .env("ENDOCERT_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("homology.json").exists());
}
