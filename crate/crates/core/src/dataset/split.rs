//! Seeded, stratified train/valid/test assignment with largest-remainder
//! rounding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{ClassHistogram, DatasetManifest, Split};
use crate::error::{Error, Result};

const FRACTION_SUM_TOLERANCE: f64 = 1e-9;
const BUCKETS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            valid: 0.2,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let f = SplitFractions { train, valid, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("split fractions must lie in [0, 1], got {self:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > FRACTION_SUM_TOLERANCE {
            return Err(Error::Config(format!("split fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

/// Hamilton apportionment: floors of `total * fraction`, with the leftover
/// units going to the largest fractional remainders (lower index wins ties).
pub fn largest_remainder(total: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| total as f64 * f).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-bucket split counts whose rows sum to the bucket sizes and whose
/// columns sum to the global largest-remainder apportionment. Every cell is
/// the floor of its quota or one more.
pub fn stratified_counts(bucket_sizes: &[usize], fractions: &[f64]) -> Result<Vec<Vec<usize>>> {
    let total: usize = bucket_sizes.iter().sum();
    let targets = largest_remainder(total, fractions);
    let splits = fractions.len();

    let mut cells = Vec::with_capacity(bucket_sizes.len());
    let mut remainders = Vec::with_capacity(bucket_sizes.len());
    let mut row_need = Vec::with_capacity(bucket_sizes.len());
    for &n in bucket_sizes {
        let quotas: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
        let floors: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        row_need.push(n - floors.iter().sum::<usize>());
        remainders.push(quotas.iter().zip(&floors).map(|(q, f)| q - *f as f64).collect::<Vec<_>>());
        cells.push(floors);
    }
    let mut col_need: Vec<isize> = (0..splits)
        .map(|s| targets[s] as isize - cells.iter().map(|row| row[s] as isize).sum::<isize>())
        .collect();

    // Gale-Ryser greedy: rows with the most leftover units first, each taking
    // the columns with the most outstanding demand.
    let mut rows: Vec<usize> = (0..bucket_sizes.len()).collect();
    rows.sort_by(|&a, &b| row_need[b].cmp(&row_need[a]).then(a.cmp(&b)));
    for b in rows {
        let mut cols: Vec<usize> = (0..splits).collect();
        cols.sort_by(|&x, &y| {
            col_need[y]
                .cmp(&col_need[x])
                .then(remainders[b][y].total_cmp(&remainders[b][x]))
                .then(x.cmp(&y))
        });
        for &s in cols.iter().take(row_need[b]) {
            if col_need[s] <= 0 {
                return Err(Error::Data(format!(
                    "cannot apportion buckets {bucket_sizes:?} over fractions {fractions:?}"
                )));
            }
            cells[b][s] += 1;
            col_need[s] -= 1;
        }
    }
    debug_assert!(col_need.iter().all(|&c| c == 0));
    Ok(cells)
}

/// Assigns every record to train/valid/test, stratified over the five
/// histogram buckets (four classes plus negatives).
pub fn split_dataset(manifest: &DatasetManifest, fractions: &SplitFractions, seed: u64) -> Result<DatasetManifest> {
    fractions.validate()?;
    let nonzero = fractions.as_array().iter().filter(|f| **f > 0.0).count();
    if manifest.records.len() < nonzero {
        return Err(Error::Config(format!(
            "{} records cannot fill {nonzero} non-empty splits",
            manifest.records.len()
        )));
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); BUCKETS];
    for (i, r) in manifest.records.iter().enumerate() {
        members[r.bucket()].push(i);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let counts = stratified_counts(&sizes, &fractions.as_array())?;

    let mut out = manifest.clone();
    for (bucket, mut idx) in members.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(bucket as u64);
        idx.shuffle(&mut rng);
        let mut cursor = idx.into_iter();
        for (split, &n) in Split::ASSIGNABLE.iter().zip(&counts[bucket]) {
            for i in cursor.by_ref().take(n) {
                out.records[i].split = *split;
            }
        }
    }
    out.split_seed = Some(seed);
    out.histogram = ClassHistogram::from_records(&out.records);
    Ok(out)
}
