use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::clamp_prob;

/// A predicted safety probability with its true label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    /// Safe-class probability.
    pub score: f64,
    pub label: bool,
    /// `logit_safe - logit_unsafe`; equals `logit(score)` when only the
    /// probability is known.
    pub margin: f64,
}

impl ScoredSample {
    pub fn new(score: f64, label: bool) -> Self {
        Self {
            score,
            label,
            margin: logit(score),
        }
    }

    pub fn from_logits(logits: [f64; 2], label: bool) -> Self {
        let margin = logits[1] - logits[0];
        Self {
            score: crate::nn::sigmoid(margin),
            label,
            margin,
        }
    }

    pub fn y(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Log-odds after clamping into the open unit interval.
pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    EqualWidth,
    EqualCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean score; 0 for an empty bin.
    pub conf: f64,
    /// Mean label; 0 for an empty bin.
    pub acc: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<ReliabilityBin>,
    pub q: usize,
    pub scheme: BinScheme,
}

impl ReliabilityBins {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Expected calibration error of these bins.
    pub fn ece(&self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        self.bins
            .iter()
            .map(|b| b.count as f64 / n * (b.acc - b.conf).abs())
            .sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lo", "bin_hi", "conf", "acc", "count"])
            .map_err(csv_err)?;
        for b in &self.bins {
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.conf.to_string(),
                b.acc.to_string(),
                b.count.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Equal-width bin of a score in `[0, 1]`; 1.0 falls in the last bin.
pub fn width_bin(score: f64, q: usize) -> usize {
    ((score * q as f64).floor().max(0.0) as usize).min(q - 1)
}

fn summarize(members: &[&ScoredSample], lo: f64, hi: f64) -> ReliabilityBin {
    let count = members.len();
    let (conf, acc) = if count == 0 {
        (0.0, 0.0)
    } else {
        let n = count as f64;
        (
            members.iter().map(|s| s.score).sum::<f64>() / n,
            members.iter().map(|s| s.y()).sum::<f64>() / n,
        )
    };
    ReliabilityBin {
        lo,
        hi,
        conf,
        acc,
        count,
    }
}

pub fn reliability(samples: &[ScoredSample], q: usize, scheme: BinScheme) -> Result<ReliabilityBins> {
    if q == 0 {
        return Err(Error::InvalidArgument("bin count must be >= 1".into()));
    }
    let bins = match scheme {
        BinScheme::EqualWidth => {
            let mut groups: Vec<Vec<&ScoredSample>> = vec![Vec::new(); q];
            for s in samples {
                groups[width_bin(s.score, q)].push(s);
            }
            groups
                .iter()
                .enumerate()
                .map(|(j, g)| summarize(g, j as f64 / q as f64, (j + 1) as f64 / q as f64))
                .collect()
        }
        BinScheme::EqualCount => {
            let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
            sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
            let n = sorted.len();
            (0..q)
                .map(|j| {
                    let g = &sorted[j * n / q..(j + 1) * n / q];
                    let lo = g.first().map_or(0.0, |s| s.score);
                    let hi = g.last().map_or(0.0, |s| s.score);
                    summarize(g, lo, hi)
                })
                .collect()
        }
    };
    Ok(ReliabilityBins { bins, q, scheme })
}

pub fn ece(samples: &[ScoredSample], q: usize, scheme: BinScheme) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("ECE needs at least one sample".into()));
    }
    Ok(reliability(samples, q, scheme)?.ece())
}

pub fn brier(samples: &[ScoredSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("Brier score needs at least one sample".into()));
    }
    Ok(samples.iter().map(|s| (s.score - s.y()).powi(2)).sum::<f64>() / samples.len() as f64)
}
