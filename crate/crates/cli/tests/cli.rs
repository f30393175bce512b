use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_interrater"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/regression/manifest.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout));
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn small_synth(dir: &Path, extra: &str) -> PathBuf {
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"shape": [24, 32, 32], "cases_per_group": 3, "lesions_per_case": [2, 3],
                "lesion_radius_mm": [1.5, 3.0] {extra}}}"#
        ),
    )
    .unwrap();
    let out = dir.join("study");
    let o = run(&["synth", "--config", p(&cfg), "--out", p(&out), "--seed", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn validate_accepts_the_fixture() {
    let o = run(&["validate", "--manifest", p(&fixture())]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["validate", "--manifest", p(&fixture()), "--json"]);
    let v = json_of(&o);
    assert_eq!(v["ok"], true);
    assert_eq!(v["cases"], 4);
}

#[test]
fn validation_failures_exit_one_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture()).unwrap();
    let mut manifest: Value = serde_json::from_str(&text).unwrap();
    manifest["cells"][0]["mask"] = Value::String("masks/nowhere.mask".into());
    manifest["cells"][1]["time_s"] = Value::from(-3.0);
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();

    let o = run(&["validate", "--manifest", p(&path), "--json"]);
    assert_eq!(o.status.code(), Some(1));
    let v = json_of(&o);
    assert_eq!(v["ok"], false);
    let kinds: Vec<&str> = v["diagnostics"].as_array().unwrap().iter().map(|d| d["kind"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"mask_read"), "{kinds:?}");
    assert!(kinds.contains(&"non_positive_time"), "{kinds:?}");

    let o = run(&["report", "--manifest", "/definitely/missing.json", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["report", "--manifest", p(&fixture()), "--out", p(dir.path()), "--tau", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = run(&["report", "--manifest", p(&fixture()), "--out", p(&blocker.join("sub")), "--json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json_of(&o)["exit_code"], 2);
}

#[test]
fn report_json_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--manifest", p(&fixture()), "--out", p(dir.path()), "--formats", "csv", "--json"]);
    assert!(o.status.success());
    let v = json_of(&o);
    assert_eq!(v["study_id"], "regression");
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["contouring.csv", "detection.csv", "time.csv"]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("analysis.json");
    std::fs::write(&cfg, r#"{"tau": 2.0, "bh_mode": "monotone", "connectivity": "6"}"#).unwrap();
    let out = dir.path().join("r");
    let o = run(&[
        "report", "--manifest", p(&fixture()), "--out", p(&out), "--config", p(&cfg), "--tau", "1.5", "--json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_of(&o);
    assert_eq!(v["config"]["tolerance"]["tau_mm"], 1.5);
    assert_eq!(v["config"]["bh_mode"], "monotone");
    assert_eq!(v["config"]["connectivity"], "6");
}

#[test]
fn synth_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = small_synth(a.path(), "");
    let sb = small_synth(b.path(), "");
    let (ta, tb) = (tree(&sa), tree(&sb));
    assert_eq!(ta.len(), 1 + 1 + 2 * 6 * 9);
    assert!(ta == tb, "same seed produced different trees");
}

#[test]
fn synth_rejects_oversized_lesions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"shape": [12, 12, 12], "lesion_radius_mm": [8.0, 9.0]}"#).unwrap();
    let o = run(&["synth", "--config", p(&cfg), "--out", p(&dir.path().join("s")), "--json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(json_of(&o)["error"].as_str().unwrap().contains("does not fit"));
}

#[test]
fn calibrate_null_study() {
    let dir = tempfile::tempdir().unwrap();
    let none = r#"{"noise_mm": 0.0, "miss_prob": 0.0, "fp_rate": 0.0}"#;
    let study = small_synth(
        dir.path(),
        &format!(r#", "mc": {none}, "ac": {none}, "cnn": {none}, "time": {{"mc_log_mean": 6.0, "mc_log_sd": 0.3, "speedup_log_mean": 0.0, "speedup_log_sd": 0.0}}"#),
    );
    let o = run(&["calibrate", "--manifest", p(&study.join("manifest.json")), "--json", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_of(&o);
    for q in v["quantities"].as_array().unwrap() {
        assert!(q["z"].as_f64().unwrap().abs() < 0.5, "{q}");
    }
    assert!(v["flagged_cases"].as_array().unwrap().is_empty());
    assert!(dir.path().join("calibration.json").exists());
}

#[test]
fn calibrate_time_ratio_two() {
    let dir = tempfile::tempdir().unwrap();
    let study = small_synth(
        dir.path(),
        r#", "time": {"mc_log_mean": 6.0, "mc_log_sd": 0.3, "speedup_log_mean": 0.6931471805599453, "speedup_log_sd": 0.0}"#,
    );
    let o = run(&["calibrate", "--manifest", p(&study.join("manifest.json")), "--json"]);
    let v = json_of(&o);
    let ratio = v["quantities"]
        .as_array()
        .unwrap()
        .iter()
        .find(|q| q["name"] == "median time ratio")
        .unwrap();
    assert!((ratio["measured"].as_f64().unwrap() - 2.0).abs() < 0.1);
}

#[test]
fn calibrate_flags_a_corrupted_mask_and_needs_truth() {
    let dir = tempfile::tempdir().unwrap();
    let study = small_synth(dir.path(), "");
    // wipe one rater's mask on case02
    let victim = study.join("masks/case02_R3_MC.mask");
    let len = std::fs::metadata(&victim).unwrap().len() as usize;
    std::fs::write(&victim, vec![0u8; len]).unwrap();
    let o = run(&["calibrate", "--manifest", p(&study.join("manifest.json")), "--json"]);
    assert!(o.status.success());
    let flags = json_of(&o)["flagged_cases"].as_array().unwrap().clone();
    assert!(!flags.is_empty());
    assert!(flags.iter().all(|f| f["case"] == "case02"), "{flags:?}");

    std::fs::remove_file(study.join("truth.json")).unwrap();
    let o = run(&["calibrate", "--manifest", p(&study.join("manifest.json")), "--json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(json_of(&o)["error"].as_str().unwrap().contains("truth"));
}

#[test]
fn help_documents_defaults() {
    let o = run(&["report", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["[default: 1.0]", "[default: 26]", "[default: paper]", "[default: pooled]"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}
