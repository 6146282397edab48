use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = r#"
seed = 11
s = 1.0

[grid]
n = 1
N = 32
L = 8.0
"#;

const SCATTER: &str = r#"
[scattering]
t_max = 2.0
dt = 0.25
band = [1.0, 2.0]
centers = [-1.0, 1.0]
width = 1.0
basis_size = 8
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fracmag"))
        .args(args)
        .arg("--quiet")
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("out/report.json")).unwrap()).unwrap()
}

fn gate(rep: &Value, section: usize, name: &str) -> f64 {
    rep["sections"][section]["gates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|g| g["name"] == name)
        .unwrap_or_else(|| panic!("no gate {name}"))["value"]
        .as_f64()
        .unwrap()
}

#[test]
fn fracpow_on_free_config_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), BASE, &["fracpow"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    assert!(gate(&rep, 0, "fracpow.oracle_defect") <= 1e-7);
    assert!(tmp.path().join("out/spectral_mapping.csv").exists());
    assert!(tmp.path().join("out/hs.bin").exists() && tmp.path().join("out/hs.json").exists());
}

#[test]
fn free_scattering_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &format!("{BASE}{SCATTER}"), &["scatter"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    assert!(gate(&rep, 0, "scatter.free_identity") <= 1e-10);
    let csv = std::fs::read_to_string(tmp.path().join("out/scattering_convergence.csv")).unwrap();
    assert!(csv.starts_with("T,isometry_defect,intertwine_defect,fw_defect\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn non_power_of_two_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &format!("{BASE}{SCATTER}").replace("N = 32", "N = 100"), &["scatter"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid") && err.contains("power of two"), "{err}");
    assert!(!tmp.path().join("out/report.json").exists());
}

#[test]
fn unknown_key_is_rejected_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &BASE.replace("L = 8.0", "L = 8.0\nspacing = 0.5"), &["fracpow"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("spacing") && err.contains("line"), "{err}");
}

#[test]
fn gate_failure_exits_two_and_names_the_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}\n[quadrature]\nnodes = 3\nt_min = -2.0\nt_max = 2.0\n");
    let out = run(tmp.path(), &cfg, &["fracpow"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("quadrature_convergence"), "{err}");
    assert!(err.contains("hint"), "{err}");
    let rep = report(tmp.path());
    assert_eq!(rep["sections"][0]["status"], "aborted");
    assert_eq!(rep["passed"], false);
}

#[test]
fn empty_series_give_header_only_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), BASE, &["certify-potential"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("out/decay_profile.csv")).unwrap();
    assert_eq!(csv, "radius,profile,bound\n");
}

#[test]
fn manifest_lists_every_artifact_with_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}\n[potential]\nfamily = \"gaussian\"\namplitudes = [0.2]\nwidth = 1.0\n");
    let out = run(tmp.path(), &cfg, &["lap-scan"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    let arts = manifest["artifacts"].as_array().unwrap();
    let names: Vec<&str> = arts.iter().map(|a| a["path"].as_str().unwrap()).collect();
    for want in ["absorption_plus.csv", "absorption_minus.csv", "resolvent_scaling.csv", "exponent_fit.csv", "report.json"] {
        assert!(names.contains(&want), "{names:?}");
    }
    for a in arts {
        assert_eq!(a["config_hash"], hash);
        let (_, sha) = fracmag_cli::artifacts::sha256_file(&tmp.path().join("out").join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"], sha);
    }
    let csv = std::fs::read_to_string(tmp.path().join("out/absorption_plus.csv")).unwrap();
    assert!(csv.starts_with("epsilon,weighted_norm,unweighted_norm,extrapolant\n"));
    assert!(manifest["timing"].as_array().unwrap().len() == 1);
}

#[test]
fn seed_flag_changes_hash_and_vectors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), BASE, &["lap-scan", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let a = report(tmp.path());
    let out = run(tmp.path(), BASE, &["lap-scan", "--seed", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let b = report(tmp.path());
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["config"]["seed"], 5);
    assert_ne!(a["sections"][0]["data"]["branches"][0]["report"]["extrapolant"], b["sections"][0]["data"]["branches"][0]["report"]["extrapolant"]);
}

#[test]
fn band_override_is_parsed_as_lo_hi() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &format!("{BASE}{SCATTER}"), &["scatter", "--band", "1.2,1.8", "--tmax", "1.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    assert_eq!(rep["config"]["scattering"]["band"], serde_json::json!([1.2, 1.8]));
    assert_eq!(rep["config"]["scattering"]["t_max"], 1.5);
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &format!("{BASE}{SCATTER}"), &["scatter", "--band", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(tmp.path(), BASE, &["no-such-pipeline"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn potential_dump_reloads_as_custom_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let gauss = format!("{BASE}\n[potential]\nfamily = \"gaussian\"\namplitudes = [0.2]\nwidth = 1.0\n");
    run(tmp.path(), &gauss, &["certify-potential"]);
    let stem = tmp.path().join("saved_A1");
    for ext in ["bin", "json"] {
        std::fs::copy(tmp.path().join(format!("out/potential_A1.{ext}")), stem.with_extension(ext)).unwrap();
    }
    let out = run(tmp.path(), &gauss, &["fracpow"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = report(tmp.path());
    let custom = format!(
        "potential_samples = [{:?}]\n{BASE}\n[potential]\nfamily = \"custom_samples\"\n",
        stem.display().to_string()
    );
    let out = run(tmp.path(), &custom, &["fracpow"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let second = report(tmp.path());
    assert_eq!(first["sections"][0]["gates"], second["sections"][0]["gates"]);
}
