use std::path::Path;
use std::process::{Command, Output};

use openbox3d::io::{read_dataset, write_dataset, write_predictions, Annotation, DatasetFile, ImageRecord};
use openbox3d::{Box2D, Box3D, CameraModel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_openbox3d"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("OPENBOX3D_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, boxes: &str, seed: &str, scenes: &str) {
    let o = run(&["synth", "--out-dir", p(dir), "--boxes", boxes, "--seed", seed, "--scenes", scenes]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn perfect_predictions(gt: &DatasetFile) -> DatasetFile {
    let mut pred = gt.clone();
    pred.config = None;
    for a in &mut pred.annotations {
        a.s2d = Some(0.9);
        a.s3d = Some(0.8);
        a.quality = None;
    }
    pred
}

#[test]
fn synth_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, "3", "7", "1");
    synth(&b, "3", "7", "1");
    for f in ["dataset.json", "depth/1.depth", "masks/1.mask", "masks/3.mask"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn lift_output_is_independent_of_threads() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("scene");
    synth(&d, "3", "2", "2");
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = t.path().join(format!("lift{threads}.json"));
        let o = run(&[
            "--threads",
            threads,
            "lift",
            "--dataset",
            p(&d.join("dataset.json")),
            "--masks-dir",
            p(&d.join("masks")),
            "--seed",
            "5",
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("lifted 6 objects"));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let v: serde_json::Value = serde_json::from_slice(&outputs[0]).unwrap();
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| r["status"] == "optimized"));
}

#[test]
fn lift_continues_past_a_missing_mask() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("scene");
    synth(&d, "2", "3", "1");
    std::fs::remove_file(d.join("masks/1.mask")).unwrap();
    let out = t.path().join("lift.json");
    let o = run(&[
        "lift",
        "--dataset",
        p(&d.join("dataset.json")),
        "--masks-dir",
        p(&d.join("masks")),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let r = v["records"].as_array().unwrap();
    assert_eq!(r[0]["status"], "failed");
    assert_eq!(r[0]["ignore3d"], true);
    assert_eq!(r[1]["status"], "optimized");
}

#[test]
fn eval_perfect_predictions() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("scene");
    synth(&d, "3", "4", "3");
    let gt = read_dataset(&d.join("dataset.json")).unwrap();
    let pred_path = t.path().join("pred.json");
    write_predictions(&pred_path, &perfect_predictions(&gt)).unwrap();
    let out = t.path().join("result.json");
    let o = run(&["eval", "--gt", p(&d.join("dataset.json")), "--pred", p(&pred_path), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["ap"], 1.0);
    assert_eq!(v["thresholds"].as_array().unwrap().len(), 11);
    assert!(stdout(&o).starts_with("# config "));

    let o = run(&[
        "eval",
        "--gt",
        p(&d.join("dataset.json")),
        "--pred",
        p(&pred_path),
        "--mode",
        "iou",
        "--thresholds",
        "0.50:1.00:0.05",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["thresholds"].as_array().unwrap().len(), 11);
}

#[test]
fn eval_missing_prediction_file_is_a_user_error() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("scene");
    synth(&d, "1", "1", "1");
    let out = t.path().join("result.json");
    let table = t.path().join("table.txt");
    let o = run(&[
        "eval",
        "--gt",
        p(&d.join("dataset.json")),
        "--pred",
        p(&t.path().join("nope.json")),
        "--out",
        p(&out),
        "--table",
        p(&table),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
    assert!(!out.exists() && !table.exists());
}

#[test]
fn unknown_flag_is_rejected() {
    assert_eq!(run(&["eval", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["iou", "--a", "0,0,5,1,1,1,0", "--b", "0,0,5,1,1,1"]).status.code(), Some(2));
}

#[test]
fn iou_of_identical_boxes() {
    let o = run(&["iou", "--a", "0,0,5,1,2,3,0.4", "--b", "0,0,5,1,2,3,0.4", "--samples", "100000"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("exact 1.000000, mc 1.000 ± 0.000"), "{}", stdout(&o));
}

#[test]
fn sample_two_image_pool() {
    let t = tempfile::tempdir().unwrap();
    let camera = CameraModel::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
    let b = Box3D::axis_aligned(nalgebra::Vector3::new(0.0, 0.0, 5.0), nalgebra::Vector3::repeat(1.0)).unwrap();
    let b2 = Box2D::new(10.0, 10.0, 60.0, 60.0).unwrap();
    let mut d = DatasetFile::default();
    for (id, cats) in [(1u64, ["A", "B"]), (2, ["B", "C"])] {
        let mut im = ImageRecord::from_camera(id, &camera);
        im.source = Some("COCO".into());
        d.images.push(im);
        for (k, c) in cats.iter().enumerate() {
            d.annotations.push(Annotation::with_box(10 * id + k as u64, id, c, &b2, &b));
        }
    }
    let path = t.path().join("pool.json");
    write_dataset(&path, &d).unwrap();
    let o = run(&["sample", "--dataset", p(&path), "--count", "2", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.starts_with("selected 2 images"), "{s}");
    assert!(s.contains(": 1 2\n"), "{s}");
    assert!(s.contains("rare_category: A B C"), "{s}");
}
