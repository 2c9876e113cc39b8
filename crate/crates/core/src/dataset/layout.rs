use std::collections::BTreeSet;
use std::path::Path;

use super::manifest::{rel_path, DatasetManifest, ManifestRecord};
use crate::error::{Error, Result};

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

/// Copies every record's image and label into `dst` under
/// `images/{split}/` and `labels/{split}/`, returning the manifest with
/// rewritten paths. Tagged records get their tag as a file-name prefix so
/// that records from different source datasets cannot collide.
pub fn materialize<'a>(
    manifest: &DatasetManifest,
    dst: &Path,
    source_root: impl Fn(&ManifestRecord) -> &'a Path,
) -> Result<DatasetManifest> {
    let mut out = manifest.clone();
    let mut names = BTreeSet::new();
    for (record, src) in out.records.iter_mut().zip(&manifest.records) {
        let root = source_root(src);
        let prefix = src.tag.as_deref().map(|t| format!("{t}_")).unwrap_or_default();
        let image_name = format!("{prefix}{}", file_name(&src.image_path));
        let label_name = format!("{prefix}{}", file_name(&src.label_path));
        let split_dir = src.split.dir_name();
        record.image_path = rel_path(&["images", split_dir, &image_name]);
        record.label_path = rel_path(&["labels", split_dir, &label_name]);
        if !names.insert(record.image_path.clone()) {
            return Err(Error::Data(format!("two records map onto {}", record.image_path)));
        }
        for (from, to) in [(&src.image_path, &record.image_path), (&src.label_path, &record.label_path)] {
            let (from, to) = (root.join(from), dst.join(to));
            if let Some(parent) = to.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::copy(&from, &to).map_err(|e| Error::io(&from, e))?;
        }
    }
    Ok(out)
}
