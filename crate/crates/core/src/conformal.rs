//! Per-bin conformal bounds on the gap between mean predicted safety chance
//! and the observed safety rate, and their empirical coverage.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::ScoredSample;
use crate::error::{Error, Result};
use crate::rng::{streams, substream, Rng};

/// Equal-count bins of a score-sorted sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSet {
    pub bins: Vec<Vec<ScoredSample>>,
    pub q: usize,
    /// Highest-scoring samples left over after `q * floor(n / q)`.
    pub discarded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    /// Resamples per bin.
    pub m: usize,
    /// Draws per resample.
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            m: 200,
            n: 100,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("M and N must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Config(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Whether the conformal quantile index exceeds `m`.
    pub fn is_vacuous(&self) -> bool {
        quantile_index(self.m, self.alpha) > self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinBound {
    /// Score range of the validation bin.
    pub lo: f64,
    pub hi: f64,
    pub c: f64,
    /// Set when `ceil((M+1)(1-alpha)) > M`; `c` is then 1.
    pub vacuous: bool,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalBoundSet {
    pub q: usize,
    pub bins: Vec<BinBound>,
    pub config: ResampleConfig,
    pub dataset_hash: String,
    pub discarded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalPrediction {
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    pub bin_index: usize,
}

/// `ceil((m + 1)(1 - alpha))`, robust to the representation error of
/// `1 - alpha` (e.g. 100 * 0.95 must give 95, not 96).
pub fn quantile_index(m: usize, alpha: f64) -> usize {
    let x = (m as f64 + 1.0) * (1.0 - alpha);
    (x - 1e-9 * x.max(1.0)).ceil() as usize
}

/// Sorts by score and slices into `q` equal-count bins.
pub fn adaptive_bin(samples: &[ScoredSample], q: usize) -> Result<BinnedSet> {
    if q == 0 {
        return Err(Error::InvalidArgument("Q must be >= 1".into()));
    }
    if samples.len() < q {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot fill {q} bins",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let size = samples.len() / q;
    let bins = sorted[..q * size].chunks(size).map(|c| c.to_vec()).collect();
    Ok(BinnedSet {
        bins,
        q,
        discarded: samples.len() - q * size,
    })
}

fn resample_gap(bin: &[ScoredSample], n: usize, rng: &mut Rng) -> f64 {
    let mut q = 0.0;
    let mut p = 0.0;
    for _ in 0..n {
        let s = &bin[rng.random_range(0..bin.len())];
        q += s.score;
        p += s.y();
    }
    ((q - p) / n as f64).abs()
}

/// Bound `c` for one bin and whether it is vacuous.
pub fn concali(bin: &[ScoredSample], cfg: &ResampleConfig, rng: &mut Rng) -> Result<(f64, bool)> {
    cfg.validate()?;
    if bin.is_empty() {
        return Err(Error::InvalidArgument("empty bin".into()));
    }
    let mut deltas: Vec<f64> = (0..cfg.m).map(|_| resample_gap(bin, cfg.n, rng)).collect();
    let k = quantile_index(cfg.m, cfg.alpha);
    if k > cfg.m {
        return Ok((1.0, true));
    }
    deltas.sort_by(f64::total_cmp);
    Ok((deltas[k - 1], false))
}

fn bin_rng(seed: u64, base: u64, bin: usize) -> Rng {
    substream(seed, (base << 32) | bin as u64)
}

pub fn dataset_hash(samples: &[ScoredSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.score.to_le_bytes());
        h.update([u8::from(s.label)]);
    }
    hex::encode(&h.finalize()[..8])
}

/// Runs [`concali`] on every bin with its own random substream.
pub fn bounds_for_all_bins(bv: &BinnedSet, cfg: &ResampleConfig) -> Result<ConformalBoundSet> {
    cfg.validate()?;
    let mut bins = Vec::with_capacity(bv.q);
    for (j, bin) in bv.bins.iter().enumerate() {
        let (c, vacuous) = concali(bin, cfg, &mut bin_rng(cfg.seed, streams::CONFORMAL, j))
            .map_err(|e| Error::Bin {
                bin: j,
                source: Box::new(e),
            })?;
        bins.push(BinBound {
            lo: bin.first().map_or(0.0, |s| s.score),
            hi: bin.last().map_or(0.0, |s| s.score),
            c,
            vacuous,
            count: bin.len(),
        });
    }
    let all: Vec<ScoredSample> = bv.bins.iter().flatten().copied().collect();
    Ok(ConformalBoundSet {
        q: bv.q,
        bins,
        config: *cfg,
        dataset_hash: dataset_hash(&all),
        discarded: bv.discarded,
    })
}

impl ConformalBoundSet {
    /// Bin whose score range holds `score`; boundary scores go to the lower
    /// bin, scores in gaps or outside every range to the nearest bin.
    pub fn route(&self, score: f64) -> usize {
        for (j, b) in self.bins.iter().enumerate() {
            if score <= b.hi {
                if j == 0 || score >= b.lo {
                    return j;
                }
                let below = score - self.bins[j - 1].hi;
                let above = b.lo - score;
                return if below <= above { j - 1 } else { j };
            }
        }
        self.bins.len() - 1
    }

    pub fn mean_bound(&self) -> f64 {
        self.bins.iter().map(|b| b.c).sum::<f64>() / self.bins.len().max(1) as f64
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["bin", "lo", "hi", "c", "vacuous", "count"]).map_err(err)?;
        for (j, b) in self.bins.iter().enumerate() {
            w.write_record([
                j.to_string(),
                b.lo.to_string(),
                b.hi.to_string(),
                b.c.to_string(),
                b.vacuous.to_string(),
                b.count.to_string(),
            ])
            .map_err(err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
            .map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn interval_predict(score: f64, bset: &ConformalBoundSet) -> Result<IntervalPrediction> {
    if bset.bins.is_empty() {
        return Err(Error::InvalidArgument("bound set has no bins".into()));
    }
    let j = bset.route(score);
    let c = bset.bins[j].c;
    Ok(IntervalPrediction {
        center: score,
        lo: (score - c).clamp(0.0, 1.0),
        hi: (score + c).clamp(0.0, 1.0),
        bin_index: j,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCoverage {
    pub bin: usize,
    pub bound: f64,
    pub coverage: f64,
    pub count: usize,
    /// Fewer than N distinct samples, so resamples repeat samples heavily.
    pub few_distinct: bool,
    /// Quantiles 0.5, 0.9, 0.95, 0.99 of the observed `|q - p|`.
    pub error_quantiles: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub bins: Vec<BinCoverage>,
    /// Mean per-bin coverage.
    pub aggregate: f64,
    /// Standard deviation of per-bin coverage.
    pub spread: f64,
    pub trials: usize,
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let i = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[i - 1]
}

/// Bins the test samples like the validation set (test bin `j` is checked
/// against bound `j`) and measures how often a fresh size-N resample's gap
/// stays within the bound.
pub fn coverage_eval(
    bset: &ConformalBoundSet,
    test: &[ScoredSample],
    trials: usize,
) -> Result<CoverageReport> {
    let cfg = bset.config;
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("coverage needs at least one trial".into()));
    }
    let tb = adaptive_bin(test, bset.q)?;
    let mut bins = Vec::with_capacity(bset.q);
    for (j, (bin, bound)) in tb.bins.iter().zip(&bset.bins).enumerate() {
        let mut rng = bin_rng(cfg.seed, streams::COVERAGE, j);
        let mut gaps: Vec<f64> = (0..trials).map(|_| resample_gap(bin, cfg.n, &mut rng)).collect();
        let covered = gaps.iter().filter(|&&g| g <= bound.c).count();
        gaps.sort_by(f64::total_cmp);
        let mut distinct: Vec<(u64, bool)> = bin.iter().map(|s| (s.score.to_bits(), s.label)).collect();
        distinct.sort_unstable();
        distinct.dedup();
        bins.push(BinCoverage {
            bin: j,
            bound: bound.c,
            coverage: covered as f64 / trials as f64,
            count: bin.len(),
            few_distinct: distinct.len() < cfg.n,
            error_quantiles: [0.5, 0.9, 0.95, 0.99].map(|p| empirical_quantile(&gaps, p)),
        });
    }
    let q = bins.len() as f64;
    let aggregate = bins.iter().map(|b| b.coverage).sum::<f64>() / q;
    let spread = (bins.iter().map(|b| (b.coverage - aggregate).powi(2)).sum::<f64>() / q).sqrt();
    Ok(CoverageReport {
        bins,
        aggregate,
        spread,
        trials,
    })
}

impl CoverageReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record([
            "bin", "bound", "coverage", "count", "few_distinct", "err_q50", "err_q90", "err_q95", "err_q99",
        ])
        .map_err(err)?;
        for b in &self.bins {
            let mut row = vec![
                b.bin.to_string(),
                b.bound.to_string(),
                b.coverage.to_string(),
                b.count.to_string(),
                b.few_distinct.to_string(),
            ];
            row.extend(b.error_quantiles.iter().map(|q| q.to_string()));
            w.write_record(row).map_err(err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
            .map_err(|e| Error::Format(e.to_string()))
    }
}
