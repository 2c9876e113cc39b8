//! Synthetic "webpage with CAPTCHA" images: a CAPTCHA crop is resized with
//! its aspect ratio preserved and pasted at a random position on a webpage
//! screenshot, and the label is derived from the paste rectangle. Unaltered
//! webpages are added as negatives with empty labels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{rel_path, write_labels, DatasetManifest, ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::model::{to_norm, ClassId, ImageMeta, ImageSource, NormBox, PixelBox};

pub const MIN_PAGE_SIDE: u32 = 64;
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Pasted width as a fraction of page width, drawn uniformly.
    pub scale_range: (f64, f64),
    pub per_class_target: usize,
    pub negative_count: usize,
    pub rng_seed: u64,
    /// Minimum distance in pixels between the paste and the page edge.
    pub margin: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scale_range: (0.15, 0.6),
            per_class_target: 0,
            negative_count: 0,
            rng_seed: 0,
            margin: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("scale range must satisfy 0 < min <= max <= 1, got ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn planned_total(&self) -> usize {
        self.per_class_target * ClassId::COUNT + self.negative_count
    }
}

/// Where and how one CAPTCHA landed on a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeRecord {
    pub class: ClassId,
    /// Integer-aligned paste rectangle in page pixels.
    pub paste_rect: PixelBox,
    pub annotation: NormBox,
}

/// Pastes `captcha` onto a copy of `webpage`.
///
/// The crop width becomes `u * page_width` with `u` uniform over the scale
/// range, reduced if needed so the crop fits inside the margins. The random
/// draws happen in a fixed order (scale, x, y).
pub fn composite<R: Rng + ?Sized>(
    webpage: &RgbImage,
    captcha: &RgbImage,
    class: ClassId,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<(RgbImage, CompositeRecord)> {
    let (page_w, page_h) = webpage.dimensions();
    let (cw, ch) = captcha.dimensions();
    if page_w < MIN_PAGE_SIDE || page_h < MIN_PAGE_SIDE {
        return Err(Error::Data(format!(
            "webpage {page_w}x{page_h} is smaller than {MIN_PAGE_SIDE}x{MIN_PAGE_SIDE}"
        )));
    }
    if cw == 0 || ch == 0 {
        return Err(Error::Data("captcha image is empty".into()));
    }
    let does_not_fit = || Error::DoesNotFit {
        captcha_w: cw,
        captcha_h: ch,
        page_w,
        page_h,
    };

    let (lo, hi) = cfg.scale_range;
    let u = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let avail_w = page_w.checked_sub(2 * cfg.margin).filter(|w| *w > 0).ok_or_else(does_not_fit)?;
    let avail_h = page_h.checked_sub(2 * cfg.margin).filter(|h| *h > 0).ok_or_else(does_not_fit)?;
    let fit_w = avail_w.min((avail_h as f64 * cw as f64 / ch as f64).floor() as u32);
    let min_w = ((lo * page_w as f64).round() as u32).max(1);
    if fit_w < min_w {
        return Err(does_not_fit());
    }
    let width = ((u * page_w as f64).round() as u32).clamp(1, fit_w);
    let height = ((width as f64 * ch as f64 / cw as f64).round() as u32).clamp(1, avail_h);

    let x = rng.random_range(cfg.margin..=page_w - cfg.margin - width);
    let y = rng.random_range(cfg.margin..=page_h - cfg.margin - height);

    let scaled = if (width, height) == (cw, ch) {
        captcha.clone()
    } else {
        imageops::resize(captcha, width, height, FilterType::Triangle)
    };
    let mut out = webpage.clone();
    imageops::replace(&mut out, &scaled, x as i64, y as i64);

    let paste_rect = PixelBox::new(x as f64, y as f64, (x + width) as f64, (y + height) as f64)?;
    let meta = ImageMeta::new("composite", page_w, page_h, ImageSource::SyntheticComposite)?;
    let annotation = to_norm(&paste_rect, &meta)?;
    Ok((
        out,
        CompositeRecord {
            class,
            paste_rect,
            annotation,
        },
    ))
}

/// Image files in `dir` with a png/jpg/jpeg extension, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Per-record generator; streams are independent of scheduling.
pub(crate) fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

enum Planned {
    Positive { class: ClassId, ordinal: usize },
    Negative { ordinal: usize },
}

/// Generates the full synthetic dataset under `out_dir` and returns its
/// manifest (not yet saved).
///
/// Positives cycle through each class's CAPTCHA crops in name order and pick
/// a webpage at random; negatives cycle through the webpages. Records whose
/// crops cannot fit on the chosen page after trying every crop are skipped
/// and listed in the manifest.
pub fn build_dataset(
    webpage_dir: &Path,
    captcha_dirs: &BTreeMap<ClassId, PathBuf>,
    cfg: &SynthConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let pages = list_images(webpage_dir)?;
    if pages.is_empty() {
        return Err(Error::Config(format!("no webpage images in {}", webpage_dir.display())));
    }
    let mut crops: BTreeMap<ClassId, Vec<PathBuf>> = BTreeMap::new();
    if cfg.per_class_target > 0 {
        for class in ClassId::ALL {
            let dir = captcha_dirs
                .get(&class)
                .ok_or_else(|| Error::Config(format!("no captcha directory given for class {class}")))?;
            let files = list_images(dir)?;
            if files.is_empty() {
                return Err(Error::Config(format!("no captcha images in {}", dir.display())));
            }
            crops.insert(class, files);
        }
    }

    let mut plan = Vec::with_capacity(cfg.planned_total());
    for class in ClassId::ALL {
        plan.extend((0..cfg.per_class_target).map(|ordinal| Planned::Positive { class, ordinal }));
    }
    plan.extend((0..cfg.negative_count).map(|ordinal| Planned::Negative { ordinal }));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<std::result::Result<ManifestRecord, String>>> = pool.install(|| {
        plan.par_iter()
            .enumerate()
            .map(|(index, planned)| match planned {
                Planned::Positive { class, ordinal } => {
                    make_positive(index, *class, *ordinal, &pages, &crops[class], cfg, out_dir)
                }
                Planned::Negative { ordinal } => make_negative(*ordinal, &pages, out_dir).map(Ok),
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(record) => records.push(record),
            Err(reason) => {
                log::warn!("skipping record: {reason}");
                skipped.push(reason);
            }
        }
    }
    let config = serde_json::to_value(cfg).map_err(|e| Error::json(out_dir, e))?;
    let mut manifest = DatasetManifest::new(records, Some(cfg.rng_seed), config);
    manifest.skipped = skipped;
    Ok(manifest)
}

fn make_positive(
    index: usize,
    class: ClassId,
    ordinal: usize,
    pages: &[PathBuf],
    crops: &[PathBuf],
    cfg: &SynthConfig,
    out_dir: &Path,
) -> Result<std::result::Result<ManifestRecord, String>> {
    let mut rng = record_rng(cfg.rng_seed, index as u64);
    let page_path = &pages[rng.random_range(0..pages.len())];
    let page = load_rgb(page_path)?;
    let name = format!("{}_{ordinal:06}", class.name());

    for attempt in 0..crops.len() {
        let crop_path = &crops[(ordinal + attempt) % crops.len()];
        let crop = load_rgb(crop_path)?;
        match composite(&page, &crop, class, cfg, &mut rng) {
            Ok((img, rec)) => {
                let image_path = rel_path(&["images", Split::None.dir_name(), &format!("{name}.png")]);
                let label_path = rel_path(&["labels", Split::None.dir_name(), &format!("{name}.txt")]);
                save_png(&img, &out_dir.join(&image_path))?;
                write_labels(&out_dir.join(&label_path), &[(class, rec.annotation)])?;
                return Ok(Ok(ManifestRecord {
                    image_path,
                    label_path,
                    split: Split::None,
                    source: ImageSource::SyntheticComposite,
                    classes: vec![class],
                    source_webpage: Some(stem(page_path)),
                    source_captcha: Some(stem(crop_path)),
                    tag: None,
                }));
            }
            Err(e @ Error::DoesNotFit { .. }) => log::debug!("{name}: {}: {e}", crop_path.display()),
            Err(e) => return Err(e),
        }
    }
    Ok(Err(format!("{name}: no {class} crop fits on {}", page_path.display())))
}

fn make_negative(ordinal: usize, pages: &[PathBuf], out_dir: &Path) -> Result<ManifestRecord> {
    let page_path = &pages[ordinal % pages.len()];
    let page = load_rgb(page_path)?;
    let name = format!("negative_{ordinal:06}");
    let image_path = rel_path(&["images", Split::None.dir_name(), &format!("{name}.png")]);
    let label_path = rel_path(&["labels", Split::None.dir_name(), &format!("{name}.txt")]);
    save_png(&page, &out_dir.join(&image_path))?;
    write_labels(&out_dir.join(&label_path), &[])?;
    Ok(ManifestRecord {
        image_path,
        label_path,
        split: Split::None,
        source: ImageSource::RealWebpage,
        classes: Vec::new(),
        source_webpage: Some(stem(page_path)),
        source_captcha: None,
        tag: None,
    })
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::to_pixel;

    fn solid(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, image::Rgb([v, v, v]))
    }

    fn cfg(lo: f64, hi: f64) -> SynthConfig {
        SynthConfig {
            scale_range: (lo, hi),
            ..Default::default()
        }
    }

    #[test]
    fn fixed_scale_paste_size() {
        let mut rng = record_rng(7, 0);
        let (_, rec) = composite(&solid(1000, 800, 0), &solid(200, 100, 255), ClassId::Puzzle, &cfg(0.5, 0.5), &mut rng)
            .unwrap();
        assert_eq!(rec.paste_rect.width(), 500.0);
        assert_eq!(rec.paste_rect.height(), 250.0);
        assert!((rec.annotation.w() - 0.5).abs() < 1e-12);
        assert!((rec.annotation.h() - 0.3125).abs() < 1e-12);
    }

    #[test]
    fn pasted_region_is_exact_copy() {
        let mut crop = RgbImage::new(40, 20);
        for (x, y, p) in crop.enumerate_pixels_mut() {
            *p = image::Rgb([x as u8 * 5, y as u8 * 9, 77]);
        }
        let page = solid(300, 200, 10);
        let mut rng = record_rng(1, 3);
        let (img, rec) = composite(&page, &crop, ClassId::Text, &cfg(0.2, 0.2), &mut rng).unwrap();
        // 0.2 * 300 = 60 = 1.5x, so the crop is resized to 60x30.
        let scaled = imageops::resize(&crop, 60, 30, FilterType::Triangle);
        let meta = ImageMeta::new("p", 300, 200, ImageSource::SyntheticComposite).unwrap();
        let back = to_pixel(&rec.annotation, &meta).unwrap();
        assert!((back.x1() - rec.paste_rect.x1()).abs() < 0.5);
        let (x0, y0) = (rec.paste_rect.x1() as u32, rec.paste_rect.y1() as u32);
        for (x, y, p) in scaled.enumerate_pixels() {
            assert_eq!(img.get_pixel(x0 + x, y0 + y), p);
        }
    }

    #[test]
    fn scale_is_clamped_to_fit() {
        // A very tall crop cannot reach 60% of the width on a short page.
        let mut rng = record_rng(2, 0);
        let (_, rec) = composite(&solid(400, 100, 0), &solid(10, 40, 9), ClassId::Image, &cfg(0.05, 0.6), &mut rng)
            .unwrap();
        assert!(rec.paste_rect.height() <= 100.0);
        assert!(rec.paste_rect.width() <= 25.0);
    }

    #[test]
    fn unfit_crop_is_reported() {
        let mut rng = record_rng(2, 0);
        let err = composite(&solid(400, 100, 0), &solid(10, 400, 9), ClassId::Image, &cfg(0.5, 0.6), &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::DoesNotFit { .. }));
        let tiny = composite(&solid(40, 100, 0), &solid(10, 10, 9), ClassId::Image, &cfg(0.5, 0.6), &mut rng);
        assert!(matches!(tiny, Err(Error::Data(_))));
    }

    #[test]
    fn margin_is_respected() {
        let c = SynthConfig {
            margin: 30,
            ..cfg(0.3, 0.3)
        };
        for i in 0..50 {
            let mut rng = record_rng(5, i);
            let (_, rec) = composite(&solid(200, 120, 0), &solid(30, 10, 1), ClassId::Button, &c, &mut rng).unwrap();
            let r = rec.paste_rect;
            assert!(r.x1() >= 30.0 && r.y1() >= 30.0 && r.x2() <= 170.0 && r.y2() <= 90.0, "{r:?}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.0, 0.5).validate().is_err());
        assert!(cfg(0.6, 0.5).validate().is_err());
        assert!(cfg(0.5, 1.1).validate().is_err());
        assert!(SynthConfig::default().validate().is_ok());
        let full_volume = SynthConfig {
            per_class_target: 23_130,
            negative_count: 23_131,
            ..Default::default()
        };
        assert_eq!(full_volume.planned_total(), 115_651);
    }
}
