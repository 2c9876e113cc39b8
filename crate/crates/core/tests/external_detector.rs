mod common;

use std::path::{Path, PathBuf};
use std::time::Duration;

use captcha_bench::dataset::{write_labels, DatasetManifest, ManifestRecord, Split};
use captcha_bench::detector::{
    evaluate_pipeline, Detector, DetectorError, DetectorRequest, DetectorSpec, EvalDataset, EvalRunConfig,
    ExternalConfig, ExternalDetector, SliceWindow,
};
use captcha_bench::metrics::MetricsReport;
use captcha_bench::slicing::SliceParams;
use captcha_bench::{to_norm, ClassId, ImageMeta, ImageSource, PixelBox};

fn stub(mode: &[&str]) -> ExternalConfig {
    let mut command = vec![common::stub_detector().to_string_lossy().into_owned()];
    command.extend(mode.iter().map(|s| s.to_string()));
    ExternalConfig { command, timeout_ms: 5_000 }
}

fn request(path: &Path, slice: Option<SliceWindow>) -> DetectorRequest {
    DetectorRequest {
        image_id: "img".into(),
        image_path: path.to_path_buf(),
        slice,
    }
}

/// One large page with small boxes, laid out as a dataset root.
fn large_page_dataset(root: &Path) -> PathBuf {
    let (w, h) = (2200, 1300);
    let rel_img = "images/test/big.png";
    let img = root.join(rel_img);
    std::fs::create_dir_all(img.parent().unwrap()).unwrap();
    common::page(w, h, 1).save(&img).unwrap();
    let meta = ImageMeta::new("big", w, h, ImageSource::RealWebpage).unwrap();
    let boxes = [
        (ClassId::Text, (100.0, 100.0, 180.0, 130.0)),
        (ClassId::Button, (1500.0, 600.0, 1590.0, 640.0)),
        (ClassId::Puzzle, (2050.0, 1200.0, 2150.0, 1280.0)),
        (ClassId::Image, (900.0, 700.0, 1000.0, 790.0)),
    ];
    let annotations: Vec<_> = boxes
        .iter()
        .map(|(c, (x1, y1, x2, y2))| (*c, to_norm(&PixelBox::new(*x1, *y1, *x2, *y2).unwrap(), &meta).unwrap()))
        .collect();
    write_labels(&root.join("labels/test/big.txt"), &annotations).unwrap();
    let record = ManifestRecord {
        image_path: rel_img.into(),
        label_path: "labels/test/big.txt".into(),
        split: Split::Test,
        source: ImageSource::RealWebpage,
        classes: annotations.iter().map(|a| a.0).collect(),
        source_webpage: None,
        source_captcha: None,
        tag: None,
    };
    DatasetManifest::new(vec![record], None, serde_json::Value::Null).save(root).unwrap();
    root.to_path_buf()
}

fn without_run_metadata(mut r: MetricsReport) -> MetricsReport {
    r.run_metadata = Default::default();
    r
}

#[test]
fn handshake_and_label_answers_give_perfect_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let sources = common::write_sources(tmp.path(), &[(400, 300), (640, 480), (500, 900)], 2);
    let root = tmp.path().join("ds");
    let manifest = common::synth(&sources, &root, 3, 2, 5);
    let ds = EvalDataset::from_manifest(&root, &manifest, None).unwrap();
    let cfg = EvalRunConfig {
        detector: DetectorSpec::External(stub(&["labels"])),
        jobs: 3,
        ..Default::default()
    };
    let r = evaluate_pipeline(&ds, &cfg).unwrap();
    assert_eq!(r.counts.evaluated_images, 14);
    assert_eq!(r.aggregate.tp, 12);
    assert_eq!((r.aggregate.precision, r.aggregate.recall, r.aggregate.map50), (Some(1.0), Some(1.0), Some(1.0)));
    assert!(r.confusion_matrix.is_diagonal());
    assert_eq!(r.timing_ms.total_inference_ms, 14.0 * 0.25);

    let serial = evaluate_pipeline(&ds, &EvalRunConfig { jobs: 1, ..cfg }).unwrap();
    assert_eq!(without_run_metadata(serial), without_run_metadata(r));
}

#[test]
fn sliced_requests_are_translated_back() {
    let tmp = tempfile::tempdir().unwrap();
    let root = large_page_dataset(tmp.path());
    let ds = EvalDataset::from_manifest(&root, &DatasetManifest::load(&root).unwrap(), Some(Split::Test)).unwrap();
    let cfg = EvalRunConfig {
        slicing: Some(SliceParams::new(640, 0.25, 3.0).unwrap()),
        detector: DetectorSpec::External(stub(&["labels"])),
        ..Default::default()
    };
    let r = evaluate_pipeline(&ds, &cfg).unwrap();
    assert_eq!(r.counts.sliced_images, 1);
    // 2200 -> starts 0, 480, 960, 1440, 1560; 1300 -> starts 0, 480, 660
    assert_eq!(r.timing_ms.detector_calls, 15);
    assert_eq!(r.aggregate.recall, Some(1.0));
    assert_eq!(r.aggregate.precision, Some(1.0));
}

#[test]
fn echo_mode_returns_window_local_boxes() {
    let tmp = tempfile::tempdir().unwrap();
    let img = tmp.path().join("a.png");
    std::fs::write(
        tmp.path().join("a.png.boxes.json"),
        r#"[{"cls":"image","conf":0.7,"x1":500,"y1":20,"x2":560,"y2":60}]"#,
    )
    .unwrap();
    let mut d = ExternalDetector::connect(stub(&["echo"])).unwrap();
    let window = SliceWindow { ax: 480, ay: 0, w: 640, h: 640 };
    let resp = d.detect(&request(&img, Some(window))).unwrap();
    assert_eq!(resp.detections.len(), 1);
    assert_eq!(resp.detections[0].bbox, PixelBox::new(20.0, 20.0, 80.0, 60.0).unwrap());
    let full = resp.into_detections((480, 0));
    assert_eq!(full[0].bbox, PixelBox::new(500.0, 20.0, 560.0, 60.0).unwrap());
    assert_eq!(full[0].class, ClassId::Image);

    let elsewhere = SliceWindow { ax: 0, ay: 480, w: 640, h: 640 };
    assert!(d.detect(&request(&img, Some(elsewhere))).unwrap().detections.is_empty());
    assert_eq!(d.restarts(), 0);
}

#[test]
fn unknown_class_is_a_schema_violation() {
    let mut d = ExternalDetector::connect(stub(&["bad-class"])).unwrap();
    match d.detect(&request(Path::new("/x.png"), None)) {
        Err(DetectorError::SchemaViolation(m)) => assert!(m.contains("logo"), "{m}"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(d.restarts(), 1);
}

#[test]
fn non_json_reply_is_malformed() {
    let mut d = ExternalDetector::connect(stub(&["garbage"])).unwrap();
    assert!(matches!(d.detect(&request(Path::new("/x.png"), None)), Err(DetectorError::Malformed(_))));
}

#[test]
fn remote_errors_do_not_restart() {
    let mut d = ExternalDetector::connect(stub(&["error"])).unwrap();
    match d.detect(&request(Path::new("/x.png"), None)) {
        Err(DetectorError::Remote(m)) => assert!(m.contains("/x.png")),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(d.restarts(), 0);
}

#[test]
fn silent_detector_times_out() {
    let mut cfg = stub(&["hang"]);
    cfg.timeout_ms = 300;
    let mut d = ExternalDetector::connect(cfg).unwrap();
    let started = std::time::Instant::now();
    let r = d.detect(&request(Path::new("/x.png"), None));
    assert!(matches!(r, Err(DetectorError::Timeout(t)) if t == Duration::from_millis(300)), "{r:?}");
    // one restart, so two timeouts at most
    assert!(started.elapsed() < Duration::from_secs(5));
}

#[test]
fn crashed_detector_is_restarted_once() {
    let tmp = tempfile::tempdir().unwrap();
    let root = large_page_dataset(tmp.path());
    let marker = tmp.path().join("crashed");
    let mut d = ExternalDetector::connect(stub(&["crash-once", marker.to_str().unwrap()])).unwrap();
    let resp = d.detect(&request(&root.join("images/test/big.png"), None)).unwrap();
    assert_eq!(resp.detections.len(), 4);
    assert!(marker.exists());
    assert_eq!(d.restarts(), 1);
}

#[test]
fn missing_program_is_unavailable() {
    let cfg = ExternalConfig::new(vec!["/nonexistent/detector-binary".into()]);
    assert!(matches!(ExternalDetector::connect(cfg), Err(DetectorError::Unavailable(_))));
    assert!(matches!(
        ExternalDetector::connect(ExternalConfig::new(vec![])),
        Err(DetectorError::Unavailable(_))
    ));
}

#[test]
fn failing_images_are_reported_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let root = large_page_dataset(tmp.path());
    let ds = EvalDataset::from_manifest(&root, &DatasetManifest::load(&root).unwrap(), None).unwrap();
    let cfg = EvalRunConfig {
        detector: DetectorSpec::External(stub(&["error"])),
        ..Default::default()
    };
    let r = evaluate_pipeline(&ds, &cfg).unwrap();
    assert_eq!(r.counts.failed_images, 1);
    assert_eq!(r.counts.evaluated_images, 0);
    assert!(r.failures[0].starts_with("images/test/big.png: "));
}
