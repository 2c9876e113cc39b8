use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    Detector, DetectorError, DetectorRequest, ExternalConfig, ExternalDetector, OracleConfig, OracleDetector,
    SliceWindow,
};
use crate::dataset::{read_labels, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::{ImageTally, MetricsAccumulator, MetricsReport};
use crate::model::{to_pixel, GroundTruth, ImageMeta, ImageSource};
use crate::slicing::{build_grid, merge_detections, SliceParams};
use crate::synthesis::list_images;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DetectorSpec {
    Oracle(OracleConfig),
    External(ExternalConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRunConfig {
    /// `None` disables slicing.
    pub slicing: Option<SliceParams>,
    pub merge_iou: f64,
    pub match_iou: f64,
    /// Detections below this confidence are ignored for TP/FP/FN counts and
    /// the confusion matrix; AP always uses every detection.
    pub confidence_threshold: f64,
    pub detector: DetectorSpec,
    /// Worker count; never serialized so reports do not depend on it.
    #[serde(skip)]
    pub jobs: usize,
    pub emit_pr_curves: bool,
}

impl Default for EvalRunConfig {
    fn default() -> Self {
        EvalRunConfig {
            slicing: None,
            merge_iou: 0.5,
            match_iou: 0.5,
            confidence_threshold: 0.25,
            detector: DetectorSpec::Oracle(OracleConfig::default()),
            jobs: 1,
            emit_pr_curves: false,
        }
    }
}

impl EvalRunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("merge_iou", self.merge_iou),
            ("match_iou", self.match_iou),
            ("confidence_threshold", self.confidence_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if let Some(p) = &self.slicing {
            p.validate()?;
        }
        if let DetectorSpec::Oracle(o) = &self.detector {
            o.noise.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalImage {
    pub meta: ImageMeta,
    /// Absolute path handed to detectors.
    pub image_path: PathBuf,
    pub ground_truths: Vec<GroundTruth>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalDataset {
    pub images: Vec<EvalImage>,
}

impl EvalDataset {
    /// Loads the records of `manifest` rooted at `root`, optionally only those
    /// assigned to `split`. Image ids are the manifest-relative image paths.
    pub fn from_manifest(root: &Path, manifest: &DatasetManifest, split: Option<Split>) -> Result<Self> {
        let root = std::path::absolute(root).map_err(|e| Error::io(root, e))?;
        let mut images = Vec::new();
        for r in manifest.records.iter().filter(|r| split.is_none_or(|s| r.split == s)) {
            images.push(load_image(&root.join(&r.image_path), &root.join(&r.label_path), &r.image_path, r.source)?);
        }
        Ok(EvalDataset { images })
    }

    /// Pairs every image in `images_dir` with `labels_dir/{stem}.txt`.
    pub fn from_dirs(images_dir: &Path, labels_dir: &Path) -> Result<Self> {
        let images_dir = std::path::absolute(images_dir).map_err(|e| Error::io(images_dir, e))?;
        let mut images = Vec::new();
        for path in list_images(&images_dir)? {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let label = labels_dir.join(format!("{stem}.txt"));
            let id = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            images.push(load_image(&path, &label, &id, ImageSource::RealWebpage)?);
        }
        Ok(EvalDataset { images })
    }

    pub fn annotation_count(&self) -> usize {
        self.images.iter().map(|i| i.ground_truths.len()).sum()
    }
}

fn load_image(image: &Path, label: &Path, id: &str, source: ImageSource) -> Result<EvalImage> {
    if !label.is_file() {
        return Err(Error::Data(format!("{} has no label file {}", image.display(), label.display())));
    }
    let (w, h) = image::image_dimensions(image).map_err(|e| Error::image(image, e))?;
    let meta = ImageMeta::new(id, w, h, source)?;
    let ground_truths = read_labels(label)?
        .into_iter()
        .map(|(class, nb)| Ok(GroundTruth::new(id, class, to_pixel(&nb, &meta)?)))
        .collect::<Result<_>>()?;
    Ok(EvalImage {
        meta,
        image_path: image.to_path_buf(),
        ground_truths,
    })
}

/// One detector per worker.
pub fn build_detectors(spec: &DetectorSpec, dataset: &EvalDataset, workers: usize) -> Result<Vec<Box<dyn Detector>>> {
    let workers = workers.max(1);
    let mut out: Vec<Box<dyn Detector>> = Vec::with_capacity(workers);
    for _ in 0..workers {
        match spec {
            DetectorSpec::Oracle(cfg) => {
                let images = dataset.images.iter().map(|i| (i.meta.clone(), i.ground_truths.clone()));
                out.push(Box::new(OracleDetector::new(*cfg, images)?));
            }
            DetectorSpec::External(cfg) => out.push(Box::new(ExternalDetector::connect(cfg.clone())?)),
        }
    }
    Ok(out)
}

pub fn evaluate_pipeline(dataset: &EvalDataset, cfg: &EvalRunConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let workers = cfg.jobs.clamp(1, dataset.images.len().max(1));
    let detectors = build_detectors(&cfg.detector, dataset, workers)?;
    evaluate_with(dataset, detectors, cfg)
}

/// Runs every image through slicing, detection, merging and matching on one
/// thread per supplied detector, then aggregates in dataset order.
pub fn evaluate_with(
    dataset: &EvalDataset,
    detectors: Vec<Box<dyn Detector>>,
    cfg: &EvalRunConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    if dataset.images.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    if detectors.is_empty() {
        return Err(Error::Config("at least one detector is required".into()));
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for mut detector in detectors {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(image) = dataset.images.get(i) else {
                    break;
                };
                let outcome = evaluate_image(image, detector.as_mut(), cfg);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let mut outcomes: Vec<_> = rx.into_iter().collect();
    outcomes.sort_by_key(|(i, _)| *i);

    let mut acc = MetricsAccumulator::new();
    for (i, outcome) in outcomes {
        match outcome {
            Ok(tally) => acc.absorb(tally),
            Err(ImageFailure::Detector(e)) => {
                let id = &dataset.images[i].meta.image_id;
                log::warn!("{id}: {e}");
                acc.record_failure(id, &e.to_string());
            }
            Err(ImageFailure::Data(e)) => return Err(e),
        }
    }
    let config = serde_json::to_value(cfg).map_err(|e| Error::json("config", e))?;
    Ok(acc.finish(config, cfg.emit_pr_curves))
}

enum ImageFailure {
    Detector(DetectorError),
    Data(Error),
}

fn evaluate_image(
    image: &EvalImage,
    detector: &mut dyn Detector,
    cfg: &EvalRunConfig,
) -> std::result::Result<ImageTally, ImageFailure> {
    let started = Instant::now();
    let grid = cfg.slicing.as_ref().map(|p| build_grid(&image.meta, p));
    let windows: Vec<Option<SliceWindow>> = match &grid {
        Some(g) if g.activated => g
            .slices()
            .map(|s| {
                Some(SliceWindow {
                    ax: s.x,
                    ay: s.y,
                    w: s.width,
                    h: s.height,
                })
            })
            .collect(),
        _ => vec![None],
    };
    let sliced = windows.first().is_some_and(Option::is_some);

    let mut detections = Vec::new();
    let mut inference_ms = 0.0;
    for window in &windows {
        let request = DetectorRequest {
            image_id: image.meta.image_id.clone(),
            image_path: image.image_path.clone(),
            slice: *window,
        };
        let response = detector.detect(&request).map_err(ImageFailure::Detector)?;
        inference_ms += response.inference_ms;
        let origin = window.map_or((0, 0), |w| (w.ax, w.ay));
        detections.extend(response.into_detections(origin));
    }
    if sliced {
        detections = merge_detections(&detections, cfg.merge_iou);
    }

    let mut tally = ImageTally::new(&detections, &image.ground_truths, cfg.match_iou, cfg.confidence_threshold)
        .map_err(ImageFailure::Data)?;
    tally.detector_calls = windows.len();
    tally.inference_ms = inference_ms;
    tally.sliced = sliced;
    tally.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(tally)
}
