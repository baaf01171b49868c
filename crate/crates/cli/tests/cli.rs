use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use didpanel::panel::io::read_units;
use didpanel::sim::{true_event_effects, DgpConfig};
use serde_json::Value;
use tempfile::TempDir;

fn didpanel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_didpanel"))
        .args(args)
        .env_remove("DIDPANEL_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = didpanel(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small simulated panel: 600 units over 72 months.
fn simulate(dir: &Path, seed: &str) {
    ok(&[
        "simulate", "--out", p(dir), "--seed", seed, "--n-units", "600", "--window-months", "72", "--cohort-band", "24",
    ]);
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn simulate_writes_panel_and_truth() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("sim");
    simulate(&dir, "5");
    let names: Vec<String> = files(&dir).into_keys().collect();
    assert_eq!(names, ["claims.csv", "panel.csv", "report.json", "truth.json", "units.csv"]);

    let panel = fs::read_to_string(dir.join("panel.csv")).unwrap();
    assert_eq!(panel.lines().count() - 1, 600 * 72);
    let units = fs::read_to_string(dir.join("units.csv")).unwrap();
    assert_eq!(units.lines().count() - 1, 600);

    let cfg = DgpConfig { n_units: 600, window_months: 72, cohort_band: 24, seed: 5, ..DgpConfig::default() };
    let truth = json(&dir.join("truth.json"));
    let rows = truth["event_effects"].as_array().unwrap();
    let expected = true_event_effects(&cfg, -72, 72);
    assert_eq!(rows.len(), expected.len());
    for (row, (t, v)) in rows.iter().zip(expected) {
        assert_eq!(row["event_time"].as_i64().unwrap(), t as i64);
        assert!((row["effect"].as_f64().unwrap() - v).abs() < 1e-15);
    }
    let report = json(&dir.join("report.json"));
    assert_eq!(report["config"]["seed"], 5);
    assert!(report["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    assert!(report.get("timings").is_none());
}

#[test]
fn estimate_schema_and_subgroup_size() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "6");
    let claims = sim.join("claims.csv");
    let units = sim.join("units.csv");
    let est = tmp.path().join("est");
    ok(&[
        "estimate", "--claims", p(&claims), "--units", p(&units), "--out", p(&est), "--seed", "1",
        "--event-window", "-12:12", "--draws", "199", "--filter", "employed=true", "--timings",
    ]);
    let csv = fs::read_to_string(est.join("event_study.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "event_time,estimate,se,uniform_lo,uniform_hi,n_cells");
    assert_eq!(csv.lines().count() - 1, 25);

    let all = read_units(fs::File::open(&units).unwrap()).unwrap();
    let subgroup = all
        .iter()
        .filter(|u| u.employed && u.age_at_first_birth().map_or(true, |a| (20.0..=40.0).contains(&a)))
        .count();
    let report = json(&est.join("report.json"));
    assert_eq!(report["summary"]["n"].as_u64().unwrap() as usize, subgroup);
    assert_eq!(report["config"]["filter"][0], "employed=true");
    assert!(report["skipped_cells"].is_array());
    assert!(report["timings"]["estimate"].as_f64().is_some());
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "7");
    let cfg = tmp.path().join("estimate.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"claims": {:?}, "units": {:?}, "anticipation": 6, "event_window": [-8, 4], "draws": 199, "seed": 9}}"#,
            p(&sim.join("claims.csv")),
            p(&sim.join("units.csv"))
        ),
    )
    .unwrap();
    let est = tmp.path().join("est");
    ok(&["estimate", "--config", p(&cfg), "--out", p(&est), "--anticipation", "3"]);
    let report = json(&est.join("report.json"));
    assert_eq!(report["config"]["anticipation"], 3);
    assert_eq!(report["config"]["event_window"], serde_json::json!([-8, 4]));
    assert_eq!(report["config"]["seed"], 9);
}

#[test]
fn dml_placebo_blocks() {
    let tmp = TempDir::new().unwrap();
    let mothers = tmp.path().join("mothers.json");
    fs::write(&mothers, r#"{"n": 3000, "seed": 3}"#).unwrap();
    let out = tmp.path().join("dml");
    ok(&[
        "dml", "--mothers-config", p(&mothers), "--out", p(&out), "--seed", "2", "--learner", "linear",
        "--placebo-shifts", "3,6", "--windows", "1", "--linear",
    ]);
    let atet = json(&out.join("atet.json"));
    let shifts: Vec<i64> = atet["placebos"].as_array().unwrap().iter().map(|b| b["shift"].as_i64().unwrap()).collect();
    assert_eq!(shifts, [3, 6]);
    assert_eq!(atet["windows"].as_array().unwrap().len(), 1);
    assert!(atet["linear"]["did"]["estimate"].as_f64().is_some());
    assert!(atet["main"]["theta"].as_f64().is_some());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    // Same relative paths in both runs, so the recorded configs match too.
    let run = |tag: &str| {
        let root = tmp.path().join(tag);
        fs::create_dir_all(&root).unwrap();
        fs::write(root.join("mothers.json"), r#"{"n": 2000, "seed": 4}"#).unwrap();
        let ok_in = |args: &[&str]| {
            let out = Command::new(env!("CARGO_BIN_EXE_didpanel"))
                .args(args)
                .current_dir(&root)
                .env_remove("DIDPANEL_SEED")
                .output()
                .unwrap();
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        };
        ok_in(&["simulate", "--out", "sim", "--seed", "11", "--n-units", "600", "--window-months", "72", "--cohort-band", "24"]);
        ok_in(&[
            "estimate", "--claims", "sim/claims.csv", "--units", "sim/units.csv", "--out", "est", "--seed", "3",
            "--event-window", "-12:12", "--draws", "199",
        ]);
        ok_in(&["dml", "--mothers-config", "mothers.json", "--out", "dml", "--seed", "3", "--n-trees", "40", "--placebo-shifts", "3"]);
        ok_in(&["coverage", "--out", "cov", "--seed", "3", "--n-reps", "2", "--n-units", "600", "--draws", "199"]);
        ["sim", "est", "dml", "cov"].map(|d| files(&root.join(d)))
    };
    let a = run("a");
    let b = run("b");
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
        for (name, bytes) in x {
            assert!(bytes == &y[name], "{name} differs between reruns");
        }
    }
}

#[test]
fn seed_from_environment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("sim");
    let out = Command::new(env!("CARGO_BIN_EXE_didpanel"))
        .args(["simulate", "--out", p(&dir), "--n-units", "50", "--window-months", "36", "--cohort-band", "6"])
        .env("DIDPANEL_SEED", "21")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&dir.join("report.json"))["config"]["seed"], 21);
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "8");
    let claims = sim.join("claims.csv");
    let units = sim.join("units.csv");
    let out = tmp.path().join("out");
    let code = |args: &[&str]| didpanel(args).status.code().unwrap();

    // Configuration problems.
    assert_eq!(code(&["simulate", "--out", p(&out)]), 2, "missing seed");
    assert_eq!(
        code(&["estimate", "--claims", "missing.csv", "--units", p(&units), "--out", p(&out), "--seed", "1"]),
        2
    );
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"anticipaton": 9}"#).unwrap();
    assert_eq!(code(&["estimate", "--config", p(&bad), "--out", p(&out), "--seed", "1"]), 2, "unknown key");
    assert_eq!(
        code(&["estimate", "--claims", p(&claims), "--units", p(&units), "--out", p(&out), "--seed", "1", "--draws", "10"]),
        2
    );

    // Data problems.
    let broken = tmp.path().join("broken.csv");
    fs::write(&broken, "unit_id,month\nu1,3\n").unwrap();
    assert_eq!(code(&["estimate", "--claims", p(&broken), "--units", p(&units), "--out", p(&out), "--seed", "1"]), 3);
    let dml = didpanel(&[
        "dml", "--claims", p(&claims), "--units", p(&units), "--out", p(&out), "--seed", "1", "--reform", "400",
        "--learner", "linear",
    ]);
    assert_eq!(dml.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&dml.stderr);
    assert!(msg.contains("d1t1=0") && msg.contains("d0t0="), "{msg}");

    // Every cell skipped.
    assert_eq!(
        code(&[
            "estimate", "--claims", p(&claims), "--units", p(&units), "--out", p(&out), "--seed", "1",
            "--min-control", "100000", "--draws", "199",
        ]),
        4
    );
}

#[test]
fn failed_runs_leave_no_partial_files() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "9");
    let out = tmp.path().join("est");
    let status = didpanel(&[
        "estimate", "--claims", p(&sim.join("claims.csv")), "--units", p(&sim.join("units.csv")), "--out", p(&out),
        "--seed", "1", "--min-control", "100000", "--draws", "199",
    ])
    .status;
    assert_eq!(status.code(), Some(4));
    assert!(files(&out).is_empty(), "{:?}", files(&out).keys());
}
