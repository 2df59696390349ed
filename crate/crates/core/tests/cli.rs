use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_branchlab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("branchlab-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn frequency_run_writes_constant_half() {
    let out = scratch("freq");
    let st = bin().arg("run").arg(configs().join("frequency.json")).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("frequency.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "N").unwrap();
    let mut rows = 0;
    for l in lines {
        let v: f64 = l.split(',').nth(col).unwrap().parse().unwrap();
        assert!((v - 0.5).abs() <= 1e-6, "{l}");
        rows += 1;
    }
    assert_eq!(rows, 3);
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn unknown_key_is_named_in_error_json() {
    let dir = scratch("badkey");
    let cfg = write(
        &dir,
        "bad.json",
        r#"{"schema_version": 1, "field": {"kind": "cylindrical-power", "n": 2, "c": [[1, 0]], "k": 1},
            "experiment": {"kind": "frequency", "radius": [0.5]}}"#,
    );
    for verb in ["validate", "run"] {
        let o = bin().arg(verb).arg(&cfg).output().unwrap();
        assert_eq!(o.status.code(), Some(2));
        let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"], "config");
        assert_eq!(err["key"], "experiment.radius");
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn malformed_json_and_missing_key_exit_two() {
    let dir = scratch("malformed");
    let broken = write(&dir, "broken.json", "{\"schema_version\": 1, \"field\": ");
    let o = bin().arg("validate").arg(&broken).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");

    let missing = write(&dir, "missing.json", r#"{"schema_version": 1, "experiment": {"kind": "frequency"}}"#);
    let o = bin().arg("validate").arg(&missing).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["key"], "field");

    let theta = write(
        &dir,
        "theta.json",
        r#"{"schema_version": 1, "field": {"kind": "cylindrical-power", "n": 2, "c": [[1, 0]], "k": 1},
            "experiment": {"kind": "decay", "thetas": [0.25]}}"#,
    );
    let o = bin().arg("validate").arg(&theta).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["key"], "experiment.thetas");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_sampled_path_fails_validation() {
    let dir = scratch("nopath");
    let cfg = write(
        &dir,
        "c.json",
        r#"{"schema_version": 1, "field": {"kind": "sampled", "path": "nowhere.csv"}, "experiment": {"kind": "frequency"}}"#,
    );
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn report_lists_expected_failures_and_rejects_empty_dirs() {
    let root = scratch("report");
    for name in ["monotonicity", "monotonicity_control"] {
        let st = bin()
            .arg("run")
            .arg(configs().join(format!("{name}.json")))
            .arg("--out")
            .arg(root.join(name))
            .env("BRANCHLAB_THREADS", "2")
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    let o = bin().arg("report").arg(root.join("monotonicity")).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("3/3 green"), "{text}");

    let o = bin().arg("report").arg(&root).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("monotonicity_control") && l.contains("expected-fail")), "{text}");

    // tampering shows up as a hash mismatch
    std::fs::write(root.join("monotonicity").join("monotonicity.csv"), "tampered\n").unwrap();
    let o = bin().arg("report").arg(&root).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stdout).unwrap().contains("hash mismatch: monotonicity/monotonicity.csv"));

    let empty = root.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let o = bin().arg("report").arg(&empty).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let a = scratch("threads1");
    let b = scratch("threads4");
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let st = bin()
            .arg("run")
            .arg(configs().join("full_pipeline.json"))
            .arg("--out")
            .arg(dir)
            .env("BRANCHLAB_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
    }
    let ma = std::fs::read(a.join("manifest.json")).unwrap();
    let mb = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let _ = std::fs::remove_dir_all(&a);
    let _ = std::fs::remove_dir_all(&b);
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let o = bin()
        .arg("validate")
        .arg(configs().join("frequency.json"))
        .env("BRANCHLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_shipped_config_validates() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            let o = bin().arg("validate").arg(&p).output().unwrap();
            assert_eq!(o.status.code(), Some(0), "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
        }
    }
}
