use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_reef-miner");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn reef(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("REEF_MINER_CONFIG")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn image() -> String {
    data("quadrat_100.png").display().to_string()
}

fn stdio(rest: &str) -> String {
    format!("stdio:{BIN} {rest}")
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = reef(&[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn bad_flags_fail_with_usage() {
    let o = reef(&["analyze", "--frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(code(&reef(&["--help"])), 0);
}

#[test]
fn version_names_protocol_and_build() {
    let o = reef(&["--version"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("protocol_version 1"), "{s}");
    assert!(s.contains("build "), "{s}");
}

#[test]
fn missing_pairs_file_is_a_validation_failure() {
    let o = reef(&["eval-cls", "--pairs", "missing.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.csv"));
}

#[test]
fn golden_report_is_reproduced() {
    let golden = std::fs::read(data("golden_seed7.json")).unwrap();
    for _ in 0..2 {
        let o = reef(&["analyze", &image(), "--mock", "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(o.stdout, golden);
    }
    let o = reef(&["analyze", &image(), "--mock", "--seed", "7", "--parallelism", "4"]);
    assert_eq!(o.stdout, golden);
    let o = reef(&["analyze", &image(), "--mock", "--seed", "8"]);
    assert_ne!(o.stdout, golden);
}

#[test]
fn out_and_csv_are_written_whole() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let o = reef(&[
        "analyze",
        &image(),
        "--mock",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(data("golden_seed7.json")).unwrap());
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("quadrat_id,total_pixels,coral_pixels,total_cover"));
    assert_eq!(csv_text.lines().count(), 2);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "stray files: {names:?}");
}

#[test]
fn failed_run_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = reef(&[
        "analyze",
        &image(),
        "--mock",
        "--detector",
        "stdio:/nonexistent/detector",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("detect"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unreachable_http_backend_is_a_backend_failure() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let url = format!("http://{addr}/");
    let o = reef(&["analyze", &image(), "--mock", "--classifier", &url]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn configuration_errors_exit_1() {
    let o = reef(&["analyze", &image()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--mock"), "{}", stderr(&o));
    let o = reef(&["analyze", &image(), "--mock", "--segmenter", "grpc://x"]);
    assert_eq!(code(&o), 1);
    let o = reef(&["analyze", &image(), "--mock", "--parallelism", "0"]);
    assert_eq!(code(&o), 1);
    let o = reef(&["analyze", &image(), "--mock", "--confidence-min", "2"]);
    assert_eq!(code(&o), 1);
    let o = reef(&["analyze", "/nonexistent.png", "--mock"]);
    assert_eq!(code(&o), 1);
    let o = reef(&["analyze", &image(), "--mock", "--classifier", "mock:nope"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn corrupt_single_image_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"\x89PNG but not really").unwrap();
    let o = reef(&["analyze", bad.to_str().unwrap(), "--mock"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# field setup\nmock = true\nseed = 3\n").unwrap();
    let golden = std::fs::read(data("golden_seed7.json")).unwrap();

    let o = reef(&["analyze", &image(), "--config", cfg.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(o.stdout, golden);

    let from_file = reef(&["analyze", &image(), "--config", cfg.to_str().unwrap()]);
    let flags = reef(&["analyze", &image(), "--mock", "--seed", "3"]);
    assert_eq!(from_file.stdout, flags.stdout);

    let env = Command::new(BIN)
        .args(["analyze", &image()])
        .env("REEF_MINER_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(env.stdout, flags.stdout);

    std::fs::write(&cfg, "mock = true\ncolour = blue\n").unwrap();
    let o = reef(&["analyze", &image(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown key"), "{}", stderr(&o));
}

#[test]
fn constant_classifier_variant() {
    let o = reef(&["analyze", &image(), "--mock", "--seed", "7", "--classifier", "mock:constant:Porites"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["richness"], 1);
    assert_eq!(v["dominant_genus"], "Porites");
    assert_eq!(v["shannon"], 0.0);
}

#[test]
fn roi_changes_the_denominator() {
    let dir = tempfile::tempdir().unwrap();
    let roi = dir.path().join("roi.json");
    // top half of the frame
    std::fs::write(&roi, r#"{"width":100,"height":100,"counts":[0,5000,5000]}"#).unwrap();
    let o = reef(&["analyze", &image(), "--mock", "--seed", "7", "--roi", roi.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["total_pixels"], 5000);
}

fn copy_images(dir: &Path, n: usize) {
    for i in 0..n {
        std::fs::copy(data("quadrat_100.png"), dir.join(format!("q{i}.png"))).unwrap();
    }
}

#[test]
fn directory_batch_is_deterministic_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    copy_images(dir.path(), 6);
    let run = |p: &str| reef(&["analyze", dir.path().to_str().unwrap(), "--mock", "--seed", "7", "--parallelism", p]);
    let serial = run("1");
    assert_eq!(code(&serial), 0, "{}", stderr(&serial));
    for p in ["2", "4", "6"] {
        assert_eq!(run(p).stdout, serial.stdout);
    }
    let v: Value = serde_json::from_slice(&serial.stdout).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 6);
    assert_eq!(v["summary"]["succeeded"], 6);
    assert!(v["failures"].as_array().unwrap().is_empty());
    let golden: Value = serde_json::from_slice(&std::fs::read(data("golden_seed7.json")).unwrap()).unwrap();
    assert_eq!(v["reports"][0]["total_cover"], golden["total_cover"]);
    assert_eq!(v["summary"]["mean_total_cover"], golden["total_cover"]);
}

#[test]
fn batch_with_a_corrupt_file_reports_it() {
    let dir = tempfile::tempdir().unwrap();
    copy_images(dir.path(), 2);
    std::fs::write(dir.path().join("q0b.png"), b"nope").unwrap();
    let out = dir.path().join("out").with_extension("json");
    let o = reef(&["analyze", dir.path().to_str().unwrap(), "--mock", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    assert_eq!(v["failures"][0]["index"], 1);
    assert!(v["failures"][0]["stage"].is_null());
}

#[test]
fn stdio_backends_match_in_process_mocks() {
    let s = stdio("serve --seed 7");
    let o = reef(&["analyze", &image(), "--seed", "7", "--detector", &s, "--segmenter", &s, "--classifier", &s]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(o.stdout, std::fs::read(data("golden_seed7.json")).unwrap());
}

#[test]
fn dying_segmenter_fails_only_its_quadrat() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    std::fs::create_dir(&images).unwrap();
    copy_images(&images, 3);
    // answers one request, then exits
    let script = dir.path().join("seg.sh");
    std::fs::write(&script, format!("#!/bin/sh\nhead -n 1 | {BIN} serve --seed 7\n")).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    let seg = format!("stdio:{}", script.display());
    let out = dir.path().join("batch.json");
    let o = reef(&[
        "analyze",
        images.to_str().unwrap(),
        "--mock",
        "--seed",
        "7",
        "--segmenter",
        &seg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    let failures = v["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["index"], 1);
    assert_eq!(failures[0]["stage"], "segment");
    assert_eq!(failures[0]["retriable"], true);
    let golden: Value = serde_json::from_slice(&std::fs::read(data("golden_seed7.json")).unwrap()).unwrap();
    assert_eq!(v["reports"][1]["coral_pixels"], golden["coral_pixels"]);
}

#[test]
fn serve_keeps_request_order() {
    let mut child = Command::new(BIN)
        .args(["serve", "--seed", "7"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let png = reef_pipeline::QuadratImage::blank("t", 64, 64).unwrap();
    let mut input = String::new();
    for i in 0..100 {
        let req = if i % 3 == 2 {
            format!(r#"{{"request_id":"r{i}","op":"paint","protocol_version":1}}"#)
        } else {
            reef_pipeline::protocol::Request::detect(format!("r{i}"), &png).to_line()
        };
        input += &req;
        input.push('\n');
    }
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 100);
    let backends = reef_pipeline::mock_backends(7);
    for (i, v) in lines.iter().enumerate() {
        assert_eq!(v["request_id"], format!("r{i}"));
        if i % 3 == 2 {
            assert_eq!(v["error"]["code"], "unsupported_op");
        } else {
            assert_eq!(v["detections"], serde_json::to_value(backends.detector.detect(&png).unwrap()).unwrap());
        }
    }
}

#[test]
fn eval_det_reports_ap() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.ndjson");
    let pred = dir.path().join("pred.ndjson");
    std::fs::write(
        &gt,
        concat!(
            r#"{"image_id":"a","class":"Acropora","box":[0,0,10,10]}"#,
            "\n",
            r#"{"image_id":"a","class":"Acropora","box":[20,20,30,30]}"#,
            "\n"
        ),
    )
    .unwrap();
    std::fs::write(
        &pred,
        concat!(
            r#"{"image_id":"a","class":"Acropora","box":[0,0,10,10],"confidence":0.9}"#,
            "\n",
            r#"{"image_id":"a","class":"Acropora","box":[50,50,60,60],"confidence":0.8}"#,
            "\n"
        ),
    )
    .unwrap();
    let json = dir.path().join("ap.json");
    let o = reef(&[
        "eval-det",
        "--pred",
        pred.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
        "--coco-range",
        "--out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    // one TP at rank 1 out of 2 GTs: precision 1 for recall levels 0..=0.5
    let expected = 51.0 / 101.0;
    assert!((v["map50"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!((v["map5095"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!(String::from_utf8(o.stdout).unwrap().contains("mAP@0.5:0.95"));

    let o = reef(&["eval-det", "--pred", pred.to_str().unwrap(), "--gt", gt.to_str().unwrap(), "--iou", "1.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn eval_cls_with_custom_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    std::fs::write(&pairs, "true,predicted\nA,A\nA,A\nA,A\nA,B\nB,B\nB,B\n").unwrap();
    let table = dir.path().join("t.tsv");
    std::fs::write(&table, "genus\trecall\tprecision\nA\t75.00\t100.00\nB\t100.00\t66.67\n").unwrap();
    let o = reef(&["eval-cls", "--pairs", pairs.to_str().unwrap(), "--fixtures", table.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Overall"));
    assert!(!text.contains("MISMATCH"));

    std::fs::write(&table, "genus\trecall\nA\t80.00\n").unwrap();
    let o = reef(&["eval-cls", "--pairs", pairs.to_str().unwrap(), "--fixtures", table.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stdout).unwrap().contains("MISMATCH"));
}

#[test]
fn eval_cls_against_bundled_table() {
    // Favites row: 214 of 334 correct -> recall 64.07 in the bundled table
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    let mut text = String::from("true,predicted\n");
    for i in 0..334 {
        let p = if i < 214 { "Favites" } else { "Favia" };
        text += &format!("Favites,{p}\n");
    }
    std::fs::write(&pairs, text).unwrap();
    let out = dir.path().join("cls.json");
    let o = reef(&["eval-cls", "--pairs", pairs.to_str().unwrap(), "--fixtures", "tableA2", "--out", out.to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let recall = v["fixture"]["cells"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["class"] == "Favites" && c["metric"] == "recall")
        .unwrap();
    assert_eq!(recall["within_tolerance"], true);
    // precision 100% cannot match the table, so the run as a whole fails
    assert_eq!(code(&o), 1);
}

#[test]
fn stats_summarizes_manifest_and_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    std::fs::write(&manifest, "image_id,genus,width,height\na,Acropora,100,50\nb,Acropora,300,200\nc,Porites,64,64\n").unwrap();
    let boxes = dir.path().join("g.ndjson");
    std::fs::write(
        &boxes,
        concat!(
            r#"{"image_id":"a","class":"Acropora","box":[0,0,50,50]}"#,
            "\n",
            r#"{"image_id":"b","class":"Acropora","box":[100,100,300,200]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("s.json");
    let plots = dir.path().join("plots");
    let o = reef(&[
        "stats",
        "--manifest",
        manifest.to_str().unwrap(),
        "--bboxes",
        boxes.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--plot-dir",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["distribution"][0]["genus"], "Acropora");
    assert_eq!(v["distribution"][0]["count"], 2);
    let bins = v["resolution_histogram"].as_array().unwrap();
    let counts: Vec<u64> = bins.iter().map(|b| b["count"].as_u64().unwrap()).collect();
    // sides 100, 300, 64 -> (0,64], (64,128], (256,512]
    assert_eq!(&counts[..4], &[1, 1, 0, 1]);
    // centres (0.25, 0.5) and (2/3, 0.75)
    let mx = v["bbox_summary"]["mean_center_x"].as_f64().unwrap();
    assert!((mx - (0.25 + 200.0 / 300.0) / 2.0).abs() < 1e-12);
    assert_eq!(v["class_counts"]["Acropora"], 2);
    for f in ["distribution.csv", "resolution_histogram.csv", "bboxes.csv"] {
        assert!(plots.join(f).exists(), "{f}");
    }

    let o = reef(&["stats", "--manifest", manifest.to_str().unwrap(), "--bins", "128,64"]);
    assert_eq!(code(&o), 1);
}
