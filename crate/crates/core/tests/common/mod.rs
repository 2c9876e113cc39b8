#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use captcha_bench::dataset::DatasetManifest;
use captcha_bench::metrics::ModelScoreRow;
use captcha_bench::synthesis::{build_dataset, SynthConfig};
use captcha_bench::ClassId;
use image::{Rgb, RgbImage};

/// All-point AP by enumerating every distinct confidence threshold, without
/// sorting into a running curve.
///
/// For each recall level reached at some threshold, the interpolated
/// precision is the best precision among thresholds reaching at least that
/// recall; AP sums recall increments times that precision, lowest recall
/// first.
pub fn ap_oracle(scored: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).collect();
    thresholds.sort_by(|a, b| a.total_cmp(b));
    thresholds.dedup();

    let mut points = Vec::new();
    for &t in &thresholds {
        let kept = scored.iter().filter(|s| s.0 >= t);
        let tp = kept.clone().filter(|s| s.1).count();
        let n = kept.count();
        points.push((tp as f64 / gt_count as f64, tp as f64 / n as f64));
    }

    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).filter(|r| *r > 0.0).collect();
    recalls.sort_by(|a, b| a.total_cmp(b));
    recalls.dedup();

    let mut area = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        area += (r - prev) * best;
        prev = r;
    }
    Some(area)
}

/// Deterministic textured screenshot stand-in.
pub fn page(w: u32, h: u32, seed: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        Rgb([
            (x.wrapping_mul(3).wrapping_add(seed * 17) % 251) as u8,
            (y.wrapping_mul(5).wrapping_add(seed * 29) % 241) as u8,
            ((x / 16 + y / 16 + seed) % 2 * 120) as u8,
        ])
    })
}

/// Deterministic CAPTCHA crop stand-in, visibly different from pages.
pub fn crop(w: u32, h: u32, seed: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let on = (x / 4 + y / 4 + seed).is_multiple_of(2);
        Rgb(if on { [250, (seed * 40 % 200) as u8, 10] } else { [5, 240, (x * 9 % 256) as u8] })
    })
}

pub struct Sources {
    pub webpages: PathBuf,
    pub captchas: BTreeMap<ClassId, PathBuf>,
}

impl Sources {
    /// `--captcha-dir` arguments for the CLI.
    pub fn captcha_args(&self) -> Vec<String> {
        self.captchas
            .iter()
            .flat_map(|(c, d)| ["--captcha-dir".to_string(), format!("{c}={}", d.display())])
            .collect()
    }
}

/// Writes pages of the given sizes and `crops_per_class` crops per class.
pub fn write_sources(root: &Path, page_sizes: &[(u32, u32)], crops_per_class: u32) -> Sources {
    let webpages = root.join("webpages");
    std::fs::create_dir_all(&webpages).unwrap();
    for (i, &(w, h)) in page_sizes.iter().enumerate() {
        page(w, h, i as u32).save(webpages.join(format!("page_{i:03}.png"))).unwrap();
    }
    let mut captchas = BTreeMap::new();
    for class in ClassId::ALL {
        let dir = root.join("captchas").join(class.name());
        std::fs::create_dir_all(&dir).unwrap();
        for k in 0..crops_per_class {
            let (w, h) = (60 + 25 * k + 10 * class.code() as u32, 30 + 7 * k);
            crop(w, h, k + 3 * class.code() as u32).save(dir.join(format!("crop_{k:02}.png"))).unwrap();
        }
        captchas.insert(class, dir);
    }
    Sources { webpages, captchas }
}

/// Synthesizes a dataset into `out` and saves its manifest.
pub fn synth(sources: &Sources, out: &Path, per_class: usize, negatives: usize, seed: u64) -> DatasetManifest {
    let cfg = SynthConfig {
        per_class_target: per_class,
        negative_count: negatives,
        rng_seed: seed,
        ..Default::default()
    };
    let manifest = build_dataset(&sources.webpages, &sources.captchas, &cfg, out, 2).unwrap();
    manifest.save(out).unwrap();
    manifest
}

pub fn model_rows() -> Vec<ModelScoreRow> {
    let v: serde_json::Value = serde_json::from_str(include_str!("../data/set2_model_scores.json")).unwrap();
    serde_json::from_value(v["models"].clone()).unwrap()
}

pub fn stub_detector() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_stub-detector"))
}

pub fn cli() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_captcha-bench"))
}
