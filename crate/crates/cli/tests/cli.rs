use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn polarkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polarkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = polarkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = polarkit(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SCENE: &str = r#"{
  "width": 48,
  "height": 32,
  "background": {"rgb": [0.3, 0.25, 0.2], "dolp": 0.1, "aolp_deg": 20.0},
  "regions": [
    {"rect": [4, 4, 16, 16], "rgb": [0.4, 0.4, 0.4], "dolp": 0.3, "aolp_deg": 70.0},
    {"rect": [26, 8, 18, 18], "rgb": [0.2, 0.35, 0.45], "dolp": 0.6, "aolp_deg": 135.0}
  ]
}"#;

/// Writes the scene and a synthesized 16-bit frame named `frame.pgm`.
fn synth_frame(dir: &Path) -> (PathBuf, PathBuf) {
    let scene = dir.join("scene.json");
    std::fs::write(&scene, SCENE).unwrap();
    let raw = dir.join("frame.pgm");
    ok(&["synth", "--scene", s(&scene), "--out", s(&raw)]);
    (scene, raw)
}

#[test]
fn extract_names_outputs_after_input_stem() {
    let dir = tempfile::tempdir().unwrap();
    let (_, raw) = synth_frame(dir.path());
    let out = dir.path().join("out");
    ok(&["extract", "--in", s(&raw), "--out", s(&out), "--channels", "rgb,pol"]);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["frame_pol.ppm", "frame_rgb.ppm"]);
    let ppm = std::fs::read(out.join("frame_rgb.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n48 32\n255\n"));
    assert_eq!(ppm.len(), b"P6\n48 32\n255\n".len() + 48 * 32 * 3);
}

#[test]
fn synth_then_verify_recovers_scene() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, raw) = synth_frame(dir.path());
    let stdout = ok(&["verify", "--scene", s(&scene), "--raw", s(&raw)]);
    assert!(stdout.trim_end().ends_with("ok"), "{stdout}");
}

#[test]
fn verify_rejects_mismatched_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, raw) = synth_frame(dir.path());
    let err = fails(&["verify", "--scene", s(&scene), "--raw", s(&raw), "--layout", "0,45,135,90"]);
    assert!(err.contains("outside tolerance"), "{err}");
}

#[test]
fn extract_output_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (_, raw) = synth_frame(dir.path());
    let mut runs = Vec::new();
    for workers in ["1", "4"] {
        let out = dir.path().join(format!("w{workers}"));
        ok(&["extract", "--in", s(&raw), "--out", s(&out), "--pfm", "--workers", workers]);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        runs.push(files);
    }
    assert!(runs[0].len() > 6);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn noisy_synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, _) = synth_frame(dir.path());
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    for (p, w) in [(&a, "1"), (&b, "3")] {
        ok(&["synth", "--scene", s(&scene), "--out", s(p), "--noise", "0.01", "--seed", "7", "--workers", w]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let err = fails(&["synth", "--scene", s(&scene), "--out", s(&a), "--noise", "0.01"]);
    assert!(err.contains("--seed"), "{err}");
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (_, raw) = synth_frame(dir.path());
    let out = dir.path().join("cfg_out");
    let cfg = dir.path().join("job.json");
    let job = serde_json::json!({ "in": [raw], "out": out, "channels": ["dolp"] });
    std::fs::write(&cfg, job.to_string()).unwrap();
    ok(&["--config", s(&cfg), "extract"]);
    assert!(out.join("frame_dolp.ppm").is_file());

    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    fails(&["--config", s(&cfg), "extract"]);
}

#[test]
fn bad_arguments_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let (_, raw) = synth_frame(dir.path());
    let out = dir.path().join("o");
    let err = fails(&["extract", "--in", s(&raw), "--out", s(&out), "--channels", "sar"]);
    assert!(err.starts_with("error:"), "{err}");
    fails(&["extract", "--in", s(&raw), "--out", s(&out), "--frobnicate"]);
    let err = fails(&["extract", "--in", "/nonexistent/x.pgm", "--out", s(&out)]);
    assert_eq!(err.matches("os error").count(), 1, "{err}");
    fails(&["physics", "brewster", "--n2", "-1"]);
}

#[test]
fn physics_profile_peaks_near_one_metre() {
    let csv = ok(&["physics", "profile"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("d,theta_i_deg,dolp"));
    let (d, _) = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            (f[0], f[2])
        })
        .fold((0.0, f64::MIN), |best, p| if p.1 > best.1 { p } else { best });
    assert!((d - 1.0).abs() <= 0.02, "peak at {d}");
    assert_eq!(ok(&["physics", "brewster"]).trim(), "53.0612");
    assert_eq!(ok(&["physics", "rayleigh", "--angle", "90"]).trim(), "1.000000");
}

const GT: &str = r#"{
  "images": [
    {"id": 1, "file_name": "a.png", "width": 200, "height": 100},
    {"id": 2, "file_name": "b.png", "width": 200, "height": 100}
  ],
  "annotations": [
    {"id": 1, "image_id": 1, "bbox": [10, 10, 40, 40], "category_id": 0},
    {"id": 2, "image_id": 1, "bbox": [100, 20, 20, 10], "category_id": 0},
    {"id": 3, "image_id": 2, "bbox": [50, 50, 100, 45], "category_id": 0}
  ],
  "categories": [{"id": 0, "name": "bottle"}]
}"#;

#[test]
fn labels_convert_split_stats_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gt = d.join("gt.json");
    std::fs::write(&gt, GT).unwrap();

    let yolo = d.join("yolo");
    ok(&["convert-labels", "--coco", s(&gt), "--to", "yolo", "--out", s(&yolo)]);
    assert!(yolo.join("sizes.csv").is_file() && yolo.join("a.txt").is_file());
    let back = d.join("back.json");
    ok(&["convert-labels", "--yolo", s(&yolo), "--to", "coco", "--out", s(&back)]);
    let back: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&back).unwrap()).unwrap();
    assert_eq!(back["annotations"].as_array().unwrap().len(), 3);

    let stats_csv = d.join("stats.csv");
    let stdout = ok(&["stats", "--coco", s(&gt), "--csv", s(&stats_csv)]);
    assert!(stdout.contains("boxes: 3"), "{stdout}");
    assert!(std::fs::read_to_string(&stats_csv).unwrap().starts_with("section,key,value"));

    let train = d.join("train.txt");
    std::fs::write(&train, "# day one\na.png\n").unwrap();
    let test = d.join("test.txt");
    std::fs::write(&test, "b.png\n").unwrap();
    let parts = d.join("parts");
    let stdout = ok(&["split", "--coco", s(&gt), "--train", s(&train), "--test", s(&test), "--out", s(&parts)]);
    assert!(stdout.contains("train: 1 images, 2 boxes"), "{stdout}");
    assert!(parts.join("val.json").is_file());
    std::fs::write(&test, "a.png\n").unwrap();
    fails(&["split", "--coco", s(&gt), "--train", s(&train), "--test", s(&test), "--out", s(&parts)]);

    let pred = d.join("pred.json");
    std::fs::write(
        &pred,
        r#"[{"image_id": 1, "category_id": 0, "bbox": [10, 10, 40, 40], "score": 0.9},
            {"image_id": 2, "category_id": 0, "bbox": [50, 50, 100, 45], "score": 0.8}]"#,
    )
    .unwrap();
    let metrics = d.join("m.csv");
    let pr = d.join("pr.csv");
    ok(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--csv", s(&metrics), "--pr-csv", s(&pr)]);
    let m = std::fs::read_to_string(&metrics).unwrap();
    assert!(m.lines().count() >= 11, "{m}");
    assert!(std::fs::read_to_string(&pr).unwrap().starts_with("iou_thr,recall,precision,envelope,score"));
}
