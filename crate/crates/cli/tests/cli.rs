use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vapipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vapipe")).args(args).output().expect("spawn vapipe")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) {
    let o = vapipe(&[
        "synth",
        "--output",
        dir.to_str().unwrap(),
        "--seed",
        "4",
        "--set",
        "subjects=2",
        "--set",
        "videos=2",
        "--set",
        "duration=14",
        "--set",
        "test_duration=4",
        "--set",
        "gap=1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn run_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        format!(
            "data = {:?}\noutput = {:?}\nscenario = \"across_time\"\nseed = 3\nworkers = 1\n\n\
             [[learners]]\nkind = \"ridge_linear\"\n\n[[learners]]\nkind = \"knn_distance\"\n",
            dir.join("data").display().to_string(),
            dir.join("out").display().to_string(),
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn validate_names_the_malformed_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let ok = vapipe(&["validate", "--data", data.to_str().unwrap()]);
    assert!(ok.status.success());
    assert!(stdout(&ok).contains("\"ok\":true"));

    let bad = data.join("scenario_1/train/physiology/sub_2_vid_1.csv");
    fs::write(&bad, "time,ecg\n0,not-a-number\n").unwrap();
    let o = vapipe(&["validate", "--data", data.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sub_2_vid_1.csv"), "{err}");
    assert!(err.trim().lines().count() == 1 && err.contains("\"error\""), "{err}");
}

#[test]
fn run_then_score_reports_summary_overall() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("data"));
    let cfg = run_config(dir.path());
    let cfg = cfg.to_str().unwrap();

    let first = vapipe(&["run", "--config", cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let report: serde_json::Value = serde_json::from_str(stdout(&first).trim()).unwrap();
    assert_eq!(report["predictions"], 4);

    let scored = vapipe(&["score", "--config", cfg]);
    assert!(scored.status.success(), "{}", String::from_utf8_lossy(&scored.stderr));
    let printed = stdout(&scored);
    let overall = printed
        .lines()
        .find_map(|l| l.strip_prefix("overall RMSE "))
        .expect("overall line")
        .to_string();
    let summary = fs::read_to_string(dir.path().join("out/scores/summary.csv")).unwrap();
    let row = summary.lines().find(|l| l.starts_with("overall_mean")).expect("overall_mean row");
    assert!(row.contains(&overall), "{row} vs {overall}");

    // the manifest re-executes to the same hash
    let manifest = dir.path().join("out/manifest.json");
    let copy = dir.path().join("manifest.json");
    fs::copy(&manifest, &copy).unwrap();
    fs::remove_dir_all(dir.path().join("out")).unwrap();
    let again = vapipe(&["run", "--config", copy.to_str().unwrap()]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let report2: serde_json::Value = serde_json::from_str(stdout(&again).trim()).unwrap();
    assert_eq!(report["manifest_hash"], report2["manifest_hash"]);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = vapipe(&["run", "--data", dir.path().to_str().unwrap(), "--set", "smoothnig=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("\"error\":\"config\""));
}
