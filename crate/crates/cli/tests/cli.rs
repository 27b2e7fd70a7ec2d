use std::path::Path;
use std::process::{Command, Output};

fn drivesense(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drivesense"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = drivesense(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const STAGES: [&str; 5] = ["ingest", "sync", "events", "match", "dbi"];

#[test]
fn single_trip_stages_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "4", "--trip-dir", "t", "simulate"]);

    let early = drivesense(d, &["--trip-dir", "t", "dbi"]);
    assert_eq!(early.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&early.stderr).contains("ingest"));

    for s in STAGES {
        ok(d, &["--trip-dir", "t", s]);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("t/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 5);
    ok(d, &["--trip-dir", "t", "verify"]);

    // Re-running a stage with unchanged inputs leaves its output alone.
    let before = std::fs::read(d.join("t/events.jsonl")).unwrap();
    ok(d, &["--trip-dir", "t", "events"]);
    assert_eq!(std::fs::read(d.join("t/events.jsonl")).unwrap(), before);

    // A modified raw stream no longer matches its recorded hash.
    let imu = d.join("t/imu.csv");
    let mut text = std::fs::read_to_string(&imu).unwrap();
    text.push_str("\n");
    std::fs::write(&imu, text).unwrap();
    assert_eq!(drivesense(d, &["--trip-dir", "t", "verify"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(drivesense(tmp.path(), &["report"]).status.code(), Some(2));
    assert_eq!(drivesense(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(drivesense(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn fleet_report_export_import() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("plan.json"),
        r#"{"driver_id": "D2", "start_date": "2026-06-01", "days": 7, "trips_per_day": 1, "seed": 3}"#,
    )
    .unwrap();
    ok(d, &["--store", "s", "simulate", "--fleet", "plan.json"]);
    for s in STAGES {
        ok(d, &["--store", "s", s]);
    }

    let csv = ok(d, &["--store", "s", "--format", "csv", "report", "--driver", "D2", "--period", "week"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "date,closed_eyes,distractions,crossing_lines,near_collisions");
    assert_eq!(lines.len(), 8);
    assert!(lines[1].starts_with("2026-06-01,"));

    let json = ok(d, &["--store", "s", "report", "--driver", "D2", "--period", "day"]);
    let reports: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 7);

    ok(d, &["--store", "s", "export", "--driver", "D2", "--out", "b1.tar"]);
    ok(d, &["--store", "s", "export", "--driver", "D2", "--out", "b2.tar"]);
    let b1 = std::fs::read(d.join("b1.tar")).unwrap();
    assert_eq!(b1, std::fs::read(d.join("b2.tar")).unwrap());
    ok(d, &["verify", "b1.tar"]);

    // Flip one byte inside the archived report data.
    let needle = b"\"n_trips\"";
    let at = b1.windows(needle.len()).position(|w| w == needle).unwrap();
    let mut bad = b1.clone();
    bad[at + 2] ^= 0x01;
    std::fs::write(d.join("bad.tar"), &bad).unwrap();
    assert_eq!(drivesense(d, &["verify", "bad.tar"]).status.code(), Some(1));
    assert_eq!(drivesense(d, &["--store", "other", "import", "bad.tar"]).status.code(), Some(1));

    let out = ok(d, &["--store", "imported", "import", "b1.tar"]);
    assert!(out.contains("D2"));
    let n = std::fs::read_dir(d.join("imported")).unwrap().count();
    assert!(n >= 7, "{n} entries");
    let again = ok(d, &["--store", "imported", "report", "--driver", "D2", "--period", "day"]);
    assert_eq!(again, json);
}
