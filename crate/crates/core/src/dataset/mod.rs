//! Label files, dataset manifests, stratified splitting and the retraining
//! mixer.
//!
//! On disk a dataset is a root directory holding `manifest.json` plus
//! `images/{split}/` and `labels/{split}/` trees with mirrored base names.

mod labels;
mod layout;
mod manifest;
mod mix;
mod split;

pub use labels::{format_labels, parse_labels, read_labels, write_labels, Annotation};
pub use layout::materialize;
pub use manifest::{
    write_json, ClassHistogram, DatasetManifest, ManifestMetadata, ManifestRecord, Split, MANIFEST_FILE,
    MANIFEST_SCHEMA_VERSION,
};
pub(crate) use manifest::rel_path;
pub use mix::{mix_for_tuning, MixSpec, MixSplit};
pub use split::{largest_remainder, split_dataset, stratified_counts, SplitFractions};
