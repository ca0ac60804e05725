use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use magnav_core::geomag::GeoPosition;
use magnav_core::maps::{load_grid_file, write_grid_file, AnomalyGrid, StackManifestEntry};
use serde_json::Value;

fn magnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magnav"))
        .args(args)
        .output()
        .expect("spawn magnav")
}

fn scenario_json() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/c-ground.json");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["trajectory"]["duration"] = 120.0.into();
    v
}

fn write_scenario(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &scenario_json());
    let out = dir.path().join("out");
    let r = magnav(&["run", s(&scenario), "--seed", "7", "--out", s(&out)]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let csv = std::fs::read_to_string(out.join("epochs.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t_s,truth_lat,truth_lon,ins_err_m,magnav_err_m,magnav_sigma_m,gate_open,innovation_nT,accepted"
    );
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_object().unwrap().len(), 10);
}

#[test]
fn malformed_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"name\": ").unwrap();
    assert_eq!(magnav(&["run", s(&bad)]).status.code(), Some(2));

    let mut v = scenario_json();
    v.as_object_mut().unwrap().remove("seed");
    let missing = write_scenario(dir.path(), &v);
    assert_eq!(magnav(&["run", s(&missing)]).status.code(), Some(2));

    assert_eq!(
        magnav(&["run", "/nonexistent/scenario.json"]).status.code(),
        Some(2)
    );
    assert_eq!(magnav(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = scenario_json();
    v["filter"]["q_pos"] = 1e308.into();
    let scenario = write_scenario(dir.path(), &v);
    let r = magnav(&["run", s(&scenario), "--out", s(&dir.path().join("out"))]);
    assert_eq!(
        r.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(String::from_utf8_lossy(&r.stderr).contains("diverged"));
}

#[test]
fn presets_are_listed() {
    let r = magnav(&["presets", "list"]);
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8(r.stdout).unwrap();
    for name in [
        "(a)-airspeed-onboard",
        "(a)-3dvel-onboard",
        "(a)-3dvel-outboard",
        "(b)-high-altitude",
        "(c)-ground",
    ] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn sweep_runs_each_value() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path(), &scenario_json());
    let out = dir.path().join("sweep");
    let r = magnav(&[
        "sweep",
        s(&scenario),
        "--param",
        "seed=1,2",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let index: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(index.as_array().unwrap().len(), 2);
}

fn ramp(name: &str, center: &GeoPosition, offset: f64) -> AnomalyGrid {
    let n = 32;
    let values = (0..n * n)
        .map(|k| ((k / n) as f64 * 0.3).sin() * 40.0 + (k % n) as f64 + offset)
        .collect();
    AnomalyGrid::from_metric(name, center, 200.0, n, n, 0.0, values).unwrap()
}

#[test]
fn map_continue_raises_reference_altitude() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.asc");
    let output = dir.path().join("up.asc");
    write_grid_file(
        &ramp(
            "g",
            &GeoPosition::from_degrees(40.0, -100.0, 0.0).unwrap(),
            0.0,
        ),
        &input,
    )
    .unwrap();
    let r = magnav(&[
        "map",
        "continue",
        "--dz",
        "300",
        "--in",
        s(&input),
        "--out",
        s(&output),
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert_eq!(load_grid_file(&output).unwrap().reference_altitude, 300.0);
}

#[test]
fn map_level_writes_levelled_stack() {
    let dir = tempfile::tempdir().unwrap();
    let c = GeoPosition::from_degrees(40.0, -100.0, 0.0).unwrap();
    let mut entries = Vec::new();
    for (name, priority, offset) in [("fine", 2, 0.0), ("coarse", 1, 25.0)] {
        let file = format!("{name}.asc");
        write_grid_file(&ramp(name, &c, offset), &dir.path().join(&file)).unwrap();
        entries.push(StackManifestEntry {
            path: file,
            priority,
        });
    }
    let manifest = dir.path().join("stack.json");
    std::fs::write(&manifest, serde_json::to_string(&entries).unwrap()).unwrap();
    let r = magnav(&["map", "level", "--stack", s(&manifest)]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let fine = load_grid_file(&dir.path().join("fine_levelled.asc")).unwrap();
    let coarse = load_grid_file(&dir.path().join("coarse_levelled.asc")).unwrap();
    let diff = fine.mean() - coarse.mean();
    assert!(diff.abs() < 1e-6, "means differ by {diff}");
    assert!(dir.path().join("levelled_manifest.json").exists());
}
