//! Scriptable external detector for exercising the wire protocol.
//!
//! ```text
//! stub-detector labels            answers from the YOLO label file mirrored under labels/
//! stub-detector echo              answers from <image_path>.boxes.json (full-image wire detections)
//! stub-detector bad-class         answers with a class outside the taxonomy
//! stub-detector garbage           answers with a line that is not JSON
//! stub-detector error             answers every request with an error message
//! stub-detector hang              completes the handshake, then never answers
//! stub-detector crash-once FILE   exits on the first request if FILE is absent (creating it), else acts as `labels`
//! ```
//!
//! In `labels` and `echo` modes a slice request returns only boxes lying
//! entirely inside the window, in window coordinates.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use captcha_bench::dataset::read_labels;
use captcha_bench::detector::protocol::{Message, WireDetection};
use captcha_bench::detector::SliceWindow;
use captcha_bench::{to_pixel, ImageMeta, ImageSource};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("labels").to_string();
    let marker = args.get(1).map(PathBuf::from);

    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let reply = match Message::parse(&line) {
            Ok(Message::Hello { .. }) => Message::ready().to_line(),
            Ok(Message::Detect { id, image_path, slice }) => match mode.as_str() {
                "hang" => loop {
                    std::thread::sleep(Duration::from_secs(3600));
                },
                "garbage" => "this is not json\n".to_string(),
                "error" => Message::Error {
                    id: Some(id),
                    message: format!("cannot process {image_path}"),
                }
                .to_line(),
                "bad-class" => result(id, vec![wire("logo", 0.9, 1.0, 1.0, 5.0, 5.0)]),
                "crash-once" => {
                    let marker = marker.as_deref().expect("crash-once needs a marker path");
                    if !marker.exists() {
                        std::fs::write(marker, b"crashed").expect("write marker");
                        std::process::exit(1);
                    }
                    answer(id, &image_path, slice, from_labels)
                }
                "echo" => answer(id, &image_path, slice, from_boxes_file),
                _ => answer(id, &image_path, slice, from_labels),
            },
            Ok(other) => Message::Error {
                id: None,
                message: format!("unexpected {other:?}"),
            }
            .to_line(),
            Err(e) => Message::Error {
                id: None,
                message: e.to_string(),
            }
            .to_line(),
        };
        if out.write_all(reply.as_bytes()).and_then(|_| out.flush()).is_err() {
            break;
        }
    }
}

fn wire(cls: &str, conf: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> WireDetection {
    WireDetection {
        cls: cls.into(),
        conf,
        x1,
        y1,
        x2,
        y2,
    }
}

fn result(id: String, detections: Vec<WireDetection>) -> String {
    Message::Result {
        id,
        detections,
        inference_ms: 0.25,
    }
    .to_line()
}

fn answer(
    id: String,
    image_path: &str,
    slice: Option<SliceWindow>,
    source: fn(&Path) -> Result<Vec<WireDetection>, String>,
) -> String {
    match source(Path::new(image_path)) {
        Ok(all) => result(id, window(all, slice)),
        Err(message) => Message::Error { id: Some(id), message }.to_line(),
    }
}

fn window(all: Vec<WireDetection>, slice: Option<SliceWindow>) -> Vec<WireDetection> {
    let Some(w) = slice else { return all };
    let (ax, ay) = (w.ax as f64, w.ay as f64);
    all.into_iter()
        .filter(|d| d.x1 >= ax && d.y1 >= ay && d.x2 <= ax + w.w as f64 && d.y2 <= ay + w.h as f64)
        .map(|d| WireDetection {
            x1: d.x1 - ax,
            y1: d.y1 - ay,
            x2: d.x2 - ax,
            y2: d.y2 - ay,
            ..d
        })
        .collect()
}

fn from_boxes_file(image: &Path) -> Result<Vec<WireDetection>, String> {
    let mut path = image.as_os_str().to_owned();
    path.push(".boxes.json");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", Path::new(&path).display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// `.../images/<split>/x.png` -> `.../labels/<split>/x.txt`
fn label_path(image: &Path) -> Option<PathBuf> {
    let mut parts: Vec<_> = image.iter().map(|p| p.to_os_string()).collect();
    let i = parts.iter().rposition(|p| p == "images")?;
    parts[i] = "labels".into();
    Some(parts.into_iter().collect::<PathBuf>().with_extension("txt"))
}

fn from_labels(image: &Path) -> Result<Vec<WireDetection>, String> {
    let label = label_path(image).ok_or_else(|| format!("{} is not under an images/ directory", image.display()))?;
    let (w, h) = image::image_dimensions(image).map_err(|e| e.to_string())?;
    let meta = ImageMeta::new("stub", w, h, ImageSource::RealWebpage).map_err(|e| e.to_string())?;
    read_labels(&label)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(class, nb)| {
            let b = to_pixel(&nb, &meta).map_err(|e| e.to_string())?;
            Ok(wire(class.name(), 1.0, b.x1(), b.y1(), b.x2(), b.y2()))
        })
        .collect()
}
