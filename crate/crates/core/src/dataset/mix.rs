//! Retraining mix: new-pattern samples blended with a seeded random subset of
//! the previous training data, then split into train and valid.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{ClassHistogram, DatasetManifest, Split};
use super::split::largest_remainder;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MixSplit {
    Counts { train: usize, valid: usize },
    Fractions { train: f64, valid: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    pub new_count: usize,
    pub old_count: usize,
    pub split: MixSplit,
    pub seed: u64,
}

impl MixSpec {
    fn split_counts(&self) -> Result<(usize, usize)> {
        let total = self.new_count + self.old_count;
        match self.split {
            MixSplit::Counts { train, valid } => {
                if train + valid != total {
                    return Err(Error::Config(format!(
                        "train {train} + valid {valid} must equal {total} mixed records"
                    )));
                }
                Ok((train, valid))
            }
            MixSplit::Fractions { train, valid } => {
                if !(0.0..=1.0).contains(&train) || !(0.0..=1.0).contains(&valid) || (train + valid - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "mix fractions must lie in [0, 1] and sum to 1, got {train} and {valid}"
                    )));
                }
                let c = largest_remainder(total, &[train, valid]);
                Ok((c[0], c[1]))
            }
        }
    }
}

pub fn mix_for_tuning(new: &DatasetManifest, old: &DatasetManifest, spec: &MixSpec) -> Result<DatasetManifest> {
    let (train_count, _) = spec.split_counts()?;
    if new.records.len() < spec.new_count {
        return Err(Error::InsufficientRecords {
            requested: spec.new_count,
            available: new.records.len(),
        });
    }
    if old.records.len() < spec.old_count {
        return Err(Error::InsufficientRecords {
            requested: spec.old_count,
            available: old.records.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked = index::sample(&mut rng, old.records.len(), spec.old_count).into_vec();
    picked.sort_unstable();

    let tagged = |r: &super::manifest::ManifestRecord, tag: &str| {
        let mut r = r.clone();
        r.tag = Some(tag.to_string());
        r
    };
    let mut records: Vec<_> = new.records[..spec.new_count].iter().map(|r| tagged(r, "new")).collect();
    records.extend(picked.iter().map(|&i| tagged(&old.records[i], "old")));

    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    split_rng.set_stream(1);
    order.shuffle(&mut split_rng);
    for (pos, &i) in order.iter().enumerate() {
        records[i].split = if pos < train_count { Split::Train } else { Split::Valid };
    }

    let mut out = DatasetManifest::new(records, new.seed, serde_json::to_value(spec).unwrap_or_default());
    out.split_seed = Some(spec.seed);
    out.histogram = ClassHistogram::from_records(&out.records);
    Ok(out)
}
