use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn symspot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symspot"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path) {
    ok(&symspot(&["synth", "--out", "corpus", "--count", "2", "--width", "640", "--height", "600", "--seed", "3"], dir));
}

fn boxes(v: &Value, image_key: &str) -> Vec<(String, u64, String)> {
    let mut out: Vec<_> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let coords = ["x", "y", "w", "h"].map(|k| r[k].as_f64().unwrap().to_string()).join(",");
            (r[image_key].as_str().unwrap().to_string(), r["class_id"].as_u64().unwrap(), coords)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn oracle_detect_recovers_manifest_and_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    assert!(dir.join("corpus/plan_000.pgm").exists());
    assert!(dir.join("corpus/config.json").exists());

    ok(&symspot(&["detect", "--manifest", "corpus/manifest.json", "--out", "det", "--burn", "--jobs", "2"], dir));
    assert!(dir.join("det/plan_001.boxes.pgm").exists());
    let dets = json(&dir.join("det/detections.json"));
    let manifest = json(&dir.join("corpus/manifest.json"));
    assert_eq!(boxes(&dets, "image"), boxes(&manifest["annotations"], "image"));
    let text = std::fs::read_to_string(dir.join("det/detections.json")).unwrap();
    let first = &text[..text.find('}').unwrap()];
    let positions: Vec<usize> = ["image", "class_id", "class_name", "x", "y", "w", "h", "score"]
        .iter()
        .map(|k| first.find(&format!("\"{k}\"")).unwrap())
        .collect();
    assert!(positions.windows(2).all(|p| p[0] < p[1]), "{first}");

    let out = symspot(&["eval", "--manifest", "corpus/manifest.json", "--detections", "det/detections.json", "--out", "ev"], dir);
    ok(&out);
    let report = json(&dir.join("ev/report.json"));
    assert_eq!(report["aggregate"]["AP50"], 1.0);
    assert_eq!(report["instance"]["f_score"], 1.0);
    assert_eq!(report["pixel"]["f_score"], 1.0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Instance"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    ok(&symspot(
        &["detect", "--manifest", "corpus/manifest.json", "--out", "a", "--stride", "60", "--overlap-threshold", "0.2"],
        dir,
    ));
    let cfg = json(&dir.join("a/config.json"));
    assert_eq!(cfg["tiling"]["stride"], 60);
    assert_eq!(cfg["merge"]["overlap_threshold"], 0.2);
    assert!(cfg["head"]["anchors"].is_array());
    ok(&symspot(&["detect", "--manifest", "corpus/manifest.json", "--out", "b", "--config", "a/config.json"], dir));
    assert_eq!(
        std::fs::read(dir.join("a/detections.json")).unwrap(),
        std::fs::read(dir.join("b/detections.json")).unwrap()
    );
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let first = std::fs::read(dir.join("corpus/manifest.json")).unwrap();
    let img = std::fs::read(dir.join("corpus/plan_001.pgm")).unwrap();
    std::fs::remove_dir_all(dir.join("corpus")).unwrap();
    synth(dir);
    assert_eq!(first, std::fs::read(dir.join("corpus/manifest.json")).unwrap());
    assert_eq!(img, std::fs::read(dir.join("corpus/plan_001.pgm")).unwrap());
}

#[test]
fn tensor_files_round_trip_through_the_file_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    ok(&symspot(&["anchors", "--manifest", "corpus/manifest.json", "--out", "anc", "-k", "6"], dir));
    let anchors = json(&dir.join("anc/anchors.json"));
    assert_eq!(anchors.as_array().unwrap().len(), 6);
    let common = ["--manifest", "corpus/manifest.json", "--anchors", "anc/anchors.json"];
    let mut a = vec!["detect", "--out", "a", "--dump-tensors", "tensors"];
    a.extend(common);
    ok(&symspot(&a, dir));
    let mut b = vec!["detect", "--out", "b", "--backend", "file", "--tensors", "tensors"];
    b.extend(common);
    ok(&symspot(&b, dir));
    assert_eq!(
        boxes(&json(&dir.join("a/detections.json")), "image"),
        boxes(&json(&dir.join("b/detections.json")), "image")
    );
}

#[test]
fn prepare_tiles_writes_tile_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    ok(&symspot(&["prepare-tiles", "--manifest", "corpus/manifest.json", "--out", "tiles", "--augment"], dir));
    let m = json(&dir.join("tiles/manifest.json"));
    let images = m["images"].as_array().unwrap();
    assert!(!images.is_empty());
    assert!(images.iter().any(|i| i["path"].as_str().unwrap().contains("_aug")));
    assert!(images.iter().all(|i| i["width"] == 227 && i["height"] == 227));
    assert!(dir.join("tiles").join(images[0]["path"].as_str().unwrap()).exists());
}

#[test]
fn empty_tensor_directory_is_a_processing_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    std::fs::create_dir(dir.join("empty")).unwrap();
    let out = symspot(
        &["detect", "--manifest", "corpus/manifest.json", "--out", "d", "--backend", "file", "--tensors", "empty"],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(symspot(&["frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(symspot(&["synth", "--out", "x", "--bogus"], tmp.path()).status.code(), Some(2));
    assert_eq!(symspot(&["synth", "--out", "x", "--noise-level", "7"], tmp.path()).status.code(), Some(2));
    assert_eq!(symspot(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn missing_manifest_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = symspot(&["eval", "--manifest", "nope.json", "--detections", "d.json", "--out", "e"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = symspot(&["selftest", "--out", "st", "--count", "2", "--noise-level", "3"], tmp.path());
    ok(&out);
    let summary = json(&tmp.path().join("st/selftest.json"));
    assert!(summary["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
