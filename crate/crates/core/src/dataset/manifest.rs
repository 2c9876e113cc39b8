use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::read_labels;
use crate::error::{Error, Result};
use crate::model::{ClassId, ImageSource};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    None,
}

impl Split {
    pub const ASSIGNABLE: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::None => "unsplit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    /// Image path relative to the dataset root, `/`-separated.
    pub image_path: String,
    pub label_path: String,
    pub split: Split,
    pub source: ImageSource,
    /// Class of every annotation in the label file; empty for negatives.
    pub classes: Vec<ClassId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_webpage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_captcha: Option<String>,
    /// Provenance marker set by the tuning mixer (`new` or `old`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl ManifestRecord {
    /// Stratification bucket: class index 0..3, or 4 for negatives.
    pub fn bucket(&self) -> usize {
        self.classes.first().map_or(ClassId::COUNT, |c| c.index())
    }
}

/// Annotation counts per class plus the number of images without annotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassHistogram {
    pub text: usize,
    pub puzzle: usize,
    pub image: usize,
    pub button: usize,
    pub negatives: usize,
}

impl ClassHistogram {
    pub fn add_image(&mut self, classes: &[ClassId]) {
        if classes.is_empty() {
            self.negatives += 1;
        }
        for c in classes {
            *self.class_mut(*c) += 1;
        }
    }

    pub fn class_mut(&mut self, class: ClassId) -> &mut usize {
        match class {
            ClassId::Text => &mut self.text,
            ClassId::Puzzle => &mut self.puzzle,
            ClassId::Image => &mut self.image,
            ClassId::Button => &mut self.button,
        }
    }

    pub fn get(&self, class: ClassId) -> usize {
        match class {
            ClassId::Text => self.text,
            ClassId::Puzzle => self.puzzle,
            ClassId::Image => self.image,
            ClassId::Button => self.button,
        }
    }

    pub fn from_records(records: &[ManifestRecord]) -> Self {
        let mut h = ClassHistogram::default();
        for r in records {
            h.add_image(&r.classes);
        }
        h
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestMetadata {
    pub created_unix_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    pub histogram: ClassHistogram,
    #[serde(default)]
    pub skipped: Vec<String>,
    pub config: serde_json::Value,
    pub records: Vec<ManifestRecord>,
    pub run_metadata: ManifestMetadata,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>, seed: Option<u64>, config: serde_json::Value) -> Self {
        DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            seed,
            split_seed: None,
            histogram: ClassHistogram::from_records(&records),
            skipped: Vec::new(),
            config,
            records,
            run_metadata: ManifestMetadata::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Data(format!("unsupported manifest schema_version {}", self.schema_version)));
        }
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(r.image_path.as_str()) {
                return Err(Error::Data(format!("duplicate image path {}", r.image_path)));
            }
        }
        if self.histogram != ClassHistogram::from_records(&self.records) {
            return Err(Error::Data("manifest histogram disagrees with its records".into()));
        }
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, root: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let path = root.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }

    /// Recounts the histogram from the label files under `root` and checks it
    /// against both the stored histogram and each record's class list.
    pub fn verify_labels(&self, root: &Path) -> Result<ClassHistogram> {
        let mut recount = ClassHistogram::default();
        for r in &self.records {
            let classes: Vec<ClassId> = read_labels(&root.join(&r.label_path))?.into_iter().map(|(c, _)| c).collect();
            if classes != r.classes {
                return Err(Error::Data(format!(
                    "{}: label file classes {classes:?} differ from manifest {:?}",
                    r.label_path, r.classes
                )));
            }
            recount.add_image(&classes);
        }
        if recount != self.histogram {
            return Err(Error::Data(format!(
                "histogram mismatch: manifest {:?}, label files {recount:?}",
                self.histogram
            )));
        }
        Ok(recount)
    }

    pub fn split_counts(&self) -> [usize; 4] {
        let mut out = [0; 4];
        for r in &self.records {
            out[r.split as usize] += 1;
        }
        out
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn rel_path(parts: &[&str]) -> String {
    parts.join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(name: &str, classes: Vec<ClassId>) -> ManifestRecord {
        ManifestRecord {
            image_path: format!("images/unsplit/{name}.png"),
            label_path: format!("labels/unsplit/{name}.txt"),
            split: Split::None,
            source: ImageSource::SyntheticComposite,
            classes,
            source_webpage: None,
            source_captcha: None,
            tag: None,
        }
    }

    #[test]
    fn histogram_counts_negatives_and_classes() {
        let recs = vec![
            record("a", vec![ClassId::Text]),
            record("b", vec![]),
            record("c", vec![ClassId::Button, ClassId::Text]),
        ];
        let h = ClassHistogram::from_records(&recs);
        assert_eq!((h.text, h.button, h.negatives, h.puzzle), (2, 1, 1, 0));
        assert_eq!(recs[1].bucket(), 4);
        assert_eq!(recs[2].bucket(), ClassId::Button.index());
    }

    #[test]
    fn duplicate_paths_rejected() {
        let m = DatasetManifest::new(vec![record("a", vec![]), record("a", vec![])], None, serde_json::Value::Null);
        assert!(m.validate().is_err());
    }

    #[test]
    fn save_load_and_label_recount() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![record("a", vec![ClassId::Image]), record("b", vec![])];
        let nb = crate::model::NormBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        super::super::labels::write_labels(&dir.path().join(&recs[0].label_path), &[(ClassId::Image, nb)]).unwrap();
        super::super::labels::write_labels(&dir.path().join(&recs[1].label_path), &[]).unwrap();
        let m = DatasetManifest::new(recs, Some(3), serde_json::json!({}));
        m.save(dir.path()).unwrap();
        let back = DatasetManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.verify_labels(dir.path()).unwrap(), m.histogram);

        let mut tampered = m.clone();
        tampered.records[1].classes = vec![ClassId::Text];
        tampered.histogram = ClassHistogram::from_records(&tampered.records);
        assert!(tampered.verify_labels(dir.path()).is_err());
    }
}
