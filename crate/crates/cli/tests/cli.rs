use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hieraedge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_rejects_zero_classes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--out", p(&dir.path().join("d")), "--classes", "0"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("classes"));
}

#[test]
fn synth_into_unwritable_location() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["synth", "--out", p(&blocker.join("d")), "--scenes", "2"]);
    assert_eq!(code(&o), 2, "{}", text(&o));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(code(&run(&["describe", "--bogus"])), 2);
    assert_eq!(code(&run(&["check", "--only", "nonsense"])), 2);
}

#[test]
fn check_subset_passes() {
    let o = run(&["check", "--only", "fft"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = text(&o);
    assert!(out.contains("PASS fft/"));
    assert!(!out.contains("grad/"));
}

#[test]
fn injected_fault_fails_and_names_block() {
    let o = run(&["check", "--only", "grad", "--no-model", "--instances", "1", "--inject-fault", "conv2d"]);
    assert_eq!(code(&o), 1, "{}", text(&o));
    assert!(text(&o).contains("FAIL grad/conv_bn_act"), "{}", text(&o));
    assert_eq!(code(&run(&["check", "--only", "grad", "--inject-fault", "no_such_op"])), 2);
}

#[test]
fn describe_reports_parameter_total() {
    let o = run(&["describe", "--preset", "tiny"]);
    assert_eq!(code(&o), 0);
    let out = text(&o);
    assert!(out.contains("cspokm") && out.contains("trainable parameters"));
    let o = run(&["describe", "--preset", "tiny", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["param_count"].as_u64().unwrap() > 0);
}

#[test]
fn train_eval_infer_cam_round() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (data, other, run_dir) = (root.join("data"), root.join("two"), root.join("run"));
    let o = run(&["synth", "--out", p(&data), "--scenes", "6", "--size", "128", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(data.join("split.json").exists());
    let o = run(&["train", "--data", p(&data), "--out", p(&run_dir), "--preset", "overfit", "--epochs", "2"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let csv = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let ck = run_dir.join("last.ckpt");
    assert!(ck.exists() && run_dir.join("best.ckpt").exists());

    let eval_out = root.join("eval");
    let o = run(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--out", p(&eval_out), "--split", "all"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    for f in ["report.json", "detections.jsonl", "pr_curve.png", "f1_curve.png", "confusion.png"] {
        assert!(eval_out.join(f).exists(), "{f}");
    }
    // two epochs cannot reach this bar
    let o = run(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--out", p(&eval_out), "--min-map50", "0.99"]);
    assert_eq!(code(&o), 1, "{}", text(&o));
    let o = run(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--out", p(&eval_out), "--conf", "1.01"]);
    assert_eq!(code(&o), 2, "{}", text(&o));

    assert_eq!(code(&run(&["synth", "--out", p(&other), "--scenes", "2", "--classes", "2"])), 0);
    let o = run(&["eval", "--checkpoint", p(&ck), "--data", p(&other), "--out", p(&eval_out)]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("class"));

    let infer_out = root.join("infer");
    let o = run(&["infer", "--checkpoint", p(&ck), "--input", p(&data.join("images")), "--out", p(&infer_out)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(infer_out.join("detections.jsonl").exists());
    assert!(infer_out.join("scene_00000_det.png").exists());

    let img = data.join("images/scene_00001.png");
    let cam_out = root.join("cam");
    let o = run(&["cam", "--checkpoint", p(&ck), "--image", p(&img), "--class", "5", "--out", p(&cam_out)]);
    assert_eq!(code(&o), 2, "{}", text(&o));
    let o = run(&["cam", "--checkpoint", p(&ck), "--image", p(&img), "--class", "0", "--out", p(&cam_out)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    for f in ["cam_detect_p3.png", "cam_backbone_p5.png", "edge_p3.png"] {
        assert_eq!(image::image_dimensions(cam_out.join(f)).unwrap(), (128, 128), "{f}");
    }

    let o = run(&["train", "--data", p(&data), "--out", p(&run_dir), "--resume", p(&ck), "--epochs", "3"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert_eq!(std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap().lines().count(), 4);
}
