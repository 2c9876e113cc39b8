use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelScoreRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map: f64,
}

impl ModelScoreRow {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("map", self.map),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Data(format!("{}: {field} {v} outside [0, 1]", self.name)));
            }
        }
        Ok(())
    }
}

/// Metric weights for the weighted-mean model score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankWeights {
    pub f1: f64,
    pub map: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Default for RankWeights {
    /// F1 50%, mAP 25%, precision 12.5%, recall 12.5%.
    fn default() -> Self {
        RankWeights {
            f1: 0.5,
            map: 0.25,
            precision: 0.125,
            recall: 0.125,
        }
    }
}

impl RankWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.f1, self.map, self.precision, self.recall];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("rank weights must be non-negative, got {self:?}")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!("rank weights must sum to 1, got {sum}")));
        }
        Ok(())
    }

    pub fn score(&self, row: &ModelScoreRow) -> f64 {
        self.f1 * row.f1 + self.map * row.map + self.precision * row.precision + self.recall * row.recall
    }
}

impl FromStr for RankWeights {
    type Err = Error;

    /// Parses `f1=0.5,map=0.25,p=0.125,r=0.125`. Omitted keys weigh zero.
    fn from_str(s: &str) -> Result<Self> {
        let mut w = RankWeights {
            f1: 0.0,
            map: 0.0,
            precision: 0.0,
            recall: 0.0,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("weight {part:?} is not key=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("weight {part:?} has a non-numeric value")))?;
            let slot = match key.trim() {
                "f1" => &mut w.f1,
                "map" | "map50" => &mut w.map,
                "p" | "precision" => &mut w.precision,
                "r" | "recall" => &mut w.recall,
                other => return Err(Error::Config(format!("unknown weight key {other:?}"))),
            };
            *slot = value;
        }
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub name: String,
    pub score: f64,
}

/// Orders models by weighted score, best first. Equal scores keep input order.
pub fn rank_models(rows: &[ModelScoreRow], weights: &RankWeights) -> Result<Vec<RankedModel>> {
    weights.validate()?;
    for row in rows {
        row.validate()?;
    }
    let mut scored: Vec<(usize, f64)> = rows.iter().map(|r| weights.score(r)).enumerate().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(pos, (i, score))| RankedModel {
            rank: pos + 1,
            name: rows[i].name.clone(),
            score,
        })
        .collect())
}
