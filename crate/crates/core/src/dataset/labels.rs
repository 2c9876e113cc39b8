//! One-file-per-image label text: `<class> <cx> <cy> <w> <h>` per line with
//! six-decimal fixed formatting, LF endings, and a zero-byte file for images
//! without objects.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ClassId, NormBox};

pub type Annotation = (ClassId, NormBox);

pub fn format_labels(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for (class, b) in annotations {
        writeln!(out, "{} {:.6} {:.6} {:.6} {:.6}", class.code(), b.cx(), b.cy(), b.w(), b.h())
            .expect("writing to a String cannot fail");
    }
    out
}

/// Parses label text. `path` is only used to name the source in errors.
pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<Annotation>> {
    let err = |line: usize, message: String| Error::LabelParse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, found {}", fields.len())));
        }
        let class = fields[0]
            .parse::<u8>()
            .ok()
            .and_then(ClassId::from_code)
            .ok_or_else(|| err(line_no, format!("class {:?} is not one of 0..3", fields[0])))?;
        let mut coords = [0.0f64; 4];
        for (slot, field) in coords.iter_mut().zip(&fields[1..]) {
            let v: f64 = field
                .parse()
                .map_err(|_| err(line_no, format!("coordinate {field:?} is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(line_no, format!("coordinate {v} outside [0, 1]")));
            }
            *slot = v;
        }
        let b = NormBox::new(coords[0], coords[1], coords[2], coords[3]).map_err(|e| err(line_no, e.to_string()))?;
        out.push((class, b));
    }
    Ok(out)
}

pub fn write_labels(path: &Path, annotations: &[Annotation]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, format_labels(annotations)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<Annotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}
