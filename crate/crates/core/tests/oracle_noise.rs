use captcha_bench::detector::{oracle_detect, OracleNoise, SliceWindow};
use captcha_bench::{ClassId, GroundTruth, ImageMeta, ImageSource, PixelBox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRIALS: u64 = 10_000;

fn survival_rate(noise: &OracleNoise, gt: &GroundTruth, meta: &ImageMeta, window: Option<SliceWindow>) -> f64 {
    let kept: usize = (0..TRIALS)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(t);
            oracle_detect(std::slice::from_ref(gt), noise, meta, window, 640, &mut rng).len()
        })
        .sum();
    kept as f64 / TRIALS as f64
}

fn setup() -> (ImageMeta, GroundTruth) {
    let meta = ImageMeta::new("p", 3200, 2400, ImageSource::RealWebpage).unwrap();
    // 40 px tall -> 8 px after 3200 -> 640 downscale
    let gt = GroundTruth::new("p", ClassId::Text, PixelBox::new(1000.0, 1000.0, 1120.0, 1040.0).unwrap());
    (meta, gt)
}

#[test]
fn downscale_drop_frequency_matches_probability() {
    let (meta, gt) = setup();
    for p in [1.0, 0.8, 0.3] {
        let kept = survival_rate(&OracleNoise::downscale_sensitive(12.0, p), &gt, &meta, None);
        let sigma = (p * (1.0 - p) / TRIALS as f64).sqrt();
        assert!((1.0 - kept - p).abs() <= 4.0 * sigma + 1e-12, "p={p} observed drop {}", 1.0 - kept);
    }
}

#[test]
fn full_resolution_window_never_drops() {
    let (meta, gt) = setup();
    let window = SliceWindow { ax: 960, ay: 960, w: 640, h: 640 };
    let kept = survival_rate(&OracleNoise::downscale_sensitive(12.0, 1.0), &gt, &meta, Some(window));
    assert_eq!(kept, 1.0);
}

#[test]
fn uniform_drop_rate_is_respected() {
    let (meta, gt) = setup();
    let noise = OracleNoise { drop_rate: 0.25, ..OracleNoise::zero() };
    let kept = survival_rate(&noise, &gt, &meta, None);
    let sigma = (0.25f64 * 0.75 / TRIALS as f64).sqrt();
    assert!((kept - 0.75).abs() <= 4.0 * sigma, "{kept}");
}

#[test]
fn false_positive_count_has_poisson_mean() {
    let meta = ImageMeta::new("p", 1000, 800, ImageSource::RealWebpage).unwrap();
    let noise = OracleNoise { fp_rate: 0.7, ..OracleNoise::zero() };
    let total: usize = (0..TRIALS)
        .map(|t| oracle_detect(&[], &noise, &meta, None, 640, &mut ChaCha8Rng::seed_from_u64(t)).len())
        .sum();
    let mean = total as f64 / TRIALS as f64;
    assert!((mean - 0.7).abs() <= 4.0 * (0.7 / TRIALS as f64).sqrt(), "{mean}");
}
