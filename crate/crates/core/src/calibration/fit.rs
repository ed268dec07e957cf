use serde::{Deserialize, Serialize};

use super::metrics::{ece, logit, BinScheme, ScoredSample};
use crate::error::{Error, Result};
use crate::nn::{adam_step, clamp_prob, sigmoid, train, Activation, AdamState, DenseNet, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalKind {
    Temperature,
    Platt,
    Beta,
    Histogram,
    Isotonic,
}

impl CalKind {
    /// Candidate order; earlier kinds win ECE ties.
    pub const ALL: [CalKind; 5] = [
        CalKind::Temperature,
        CalKind::Platt,
        CalKind::Beta,
        CalKind::Histogram,
        CalKind::Isotonic,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedCalibrator {
    /// `sigmoid(margin / t)`.
    Temperature { t: f64 },
    /// `sigmoid(a * margin + b)`.
    Platt { a: f64, b: f64 },
    /// `sigmoid(a * ln s - b * ln(1 - s) + c)` with `a, b >= 0`.
    Beta { a: f64, b: f64, c: f64 },
    /// Equal-width bins on [0, 1], one output per bin.
    Histogram { values: Vec<f64> },
    /// Step function: `values[i]` for scores in `[thresholds[i], thresholds[i + 1])`.
    Isotonic { thresholds: Vec<f64>, values: Vec<f64> },
}

impl FittedCalibrator {
    pub fn kind(&self) -> CalKind {
        match self {
            FittedCalibrator::Temperature { .. } => CalKind::Temperature,
            FittedCalibrator::Platt { .. } => CalKind::Platt,
            FittedCalibrator::Beta { .. } => CalKind::Beta,
            FittedCalibrator::Histogram { .. } => CalKind::Histogram,
            FittedCalibrator::Isotonic { .. } => CalKind::Isotonic,
        }
    }

    pub fn identity(kind: CalKind) -> Self {
        match kind {
            CalKind::Temperature => FittedCalibrator::Temperature { t: 1.0 },
            CalKind::Platt => FittedCalibrator::Platt { a: 1.0, b: 0.0 },
            CalKind::Beta => FittedCalibrator::Beta { a: 1.0, b: 1.0, c: 0.0 },
            CalKind::Histogram => FittedCalibrator::Histogram { values: vec![0.5] },
            CalKind::Isotonic => FittedCalibrator::Isotonic {
                thresholds: vec![0.0],
                values: vec![0.5],
            },
        }
    }

    /// Calibrated probability of a bare score.
    pub fn apply(&self, score: f64) -> f64 {
        self.apply_with_margin(score, logit(score))
    }

    /// Uses the stored logit margin where the map is defined on logits.
    pub fn apply_sample(&self, s: &ScoredSample) -> f64 {
        self.apply_with_margin(s.score, s.margin)
    }

    fn apply_with_margin(&self, score: f64, margin: f64) -> f64 {
        match self {
            FittedCalibrator::Temperature { t } => sigmoid(margin / t),
            FittedCalibrator::Platt { a, b } => sigmoid(a * margin + b),
            FittedCalibrator::Beta { a, b, c } => {
                let (f1, f2) = beta_features(score);
                sigmoid(a * f1 + b * f2 + c)
            }
            FittedCalibrator::Histogram { values } => values[super::metrics::width_bin(score, values.len())],
            FittedCalibrator::Isotonic { thresholds, values } => {
                let i = thresholds.partition_point(|&t| t <= score);
                values[i.saturating_sub(1)]
            }
        }
    }

    /// Calibrated copies of `samples`, labels untouched.
    pub fn calibrate(&self, samples: &[ScoredSample]) -> Vec<ScoredSample> {
        samples
            .iter()
            .map(|s| {
                let p = self.apply_sample(s);
                let margin = match self {
                    FittedCalibrator::Temperature { t } => s.margin / t,
                    FittedCalibrator::Platt { a, b } => a * s.margin + b,
                    _ => logit(p),
                };
                ScoredSample {
                    score: p,
                    label: s.label,
                    margin,
                }
            })
            .collect()
    }
}

/// `(ln s, -ln(1 - s))` with the score clamped into (0, 1).
fn beta_features(score: f64) -> (f64, f64) {
    let s = clamp_prob(score);
    (s.ln(), -(1.0 - s).ln())
}

fn require_both(samples: &[ScoredSample]) -> Result<()> {
    if !samples.iter().any(|s| s.label) {
        return Err(Error::SingleClass { missing: "safe" });
    }
    if !samples.iter().any(|s| !s.label) {
        return Err(Error::SingleClass { missing: "unsafe" });
    }
    Ok(())
}

/// Mean negative log-likelihood of labels under `sigmoid(z)`.
fn nll(zs: impl Iterator<Item = (f64, bool)>) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (z, y) in zs {
        let p = clamp_prob(sigmoid(z));
        total -= if y { p.ln() } else { (1.0 - p).ln() };
        n += 1;
    }
    total / n.max(1) as f64
}

/// Golden-section search for the temperature minimizing NLL, over
/// `ln t` in [-4, 4].
pub fn fit_temperature(samples: &[ScoredSample]) -> Result<FittedCalibrator> {
    require_both(samples)?;
    let f = |ln_t: f64| {
        let t = ln_t.exp();
        nll(samples.iter().map(|s| (s.margin / t, s.label)))
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-4.0f64, 4.0f64);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-6 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    Ok(FittedCalibrator::Temperature {
        t: ((a + b) / 2.0).exp(),
    })
}

fn calibration_train_config(n: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        batch_size: n.max(1),
        max_epochs: 3000,
        plateau_window: 25,
        plateau_eps: 1e-9,
        lr_decay: 0.1,
        seed: 0,
    }
}

/// Logistic regression on the logit margin, trained as a one-input sigmoid
/// unit starting from the identity map.
pub fn fit_platt(samples: &[ScoredSample]) -> Result<FittedCalibrator> {
    require_both(samples)?;
    let mut unit = DenseNet::zeros(&[1, 1], &[Activation::Sigmoid])?;
    unit.set_weight(0, 0, 0, 1.0);
    let n = samples.len() as f64;
    train(&mut unit, samples.len(), &calibration_train_config(samples.len()), |u, batch, _| {
        let mut grad = vec![0.0; u.param_count()];
        let mut loss = 0.0;
        for &i in batch {
            let s = &samples[i];
            let trace = u.forward_trace(&[s.margin])?;
            let p = trace.output()[0];
            let y = s.y();
            let pc = clamp_prob(p);
            loss -= (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()) / n;
            u.backward_params_from_pre_activation(&trace, vec![(p - y) / n], &mut grad);
        }
        Ok((loss, grad))
    })?;
    Ok(FittedCalibrator::Platt {
        a: unit.weight(0, 0, 0),
        b: unit.params()[1],
    })
}

/// Beta calibration by full-batch Adam on the logistic NLL, projecting
/// `a, b` onto the non-negative half-lines after every step.
pub fn fit_beta(samples: &[ScoredSample]) -> Result<FittedCalibrator> {
    require_both(samples)?;
    let feats: Vec<(f64, f64, f64)> = samples
        .iter()
        .map(|s| {
            let (f1, f2) = beta_features(s.score);
            (f1, f2, s.y())
        })
        .collect();
    let n = feats.len() as f64;
    let mut w = vec![1.0, 1.0, 0.0];
    let mut adam = AdamState::new(3);
    let mut lr = 0.05;
    let mut prev = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..5000 {
        let mut grad = vec![0.0; 3];
        let mut loss = 0.0;
        for &(f1, f2, y) in &feats {
            let p = sigmoid(w[0] * f1 + w[1] * f2 + w[2]);
            let pc = clamp_prob(p);
            loss -= (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()) / n;
            let d = (p - y) / n;
            grad[0] += d * f1;
            grad[1] += d * f2;
            grad[2] += d;
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "beta calibration loss",
                value: loss,
            });
        }
        if prev - loss < 1e-12 {
            stalled += 1;
            if stalled == 50 {
                if lr < 0.01 {
                    break;
                }
                lr *= 0.1;
                stalled = 0;
            }
        } else {
            stalled = 0;
        }
        prev = prev.min(loss);
        adam_step(&mut [w.as_mut_slice()], &grad, &mut adam, lr)?;
        w[0] = w[0].max(0.0);
        w[1] = w[1].max(0.0);
    }
    Ok(FittedCalibrator::Beta {
        a: w[0],
        b: w[1],
        c: w[2],
    })
}

pub fn fit_histogram(samples: &[ScoredSample], q: usize) -> Result<FittedCalibrator> {
    if q == 0 {
        return Err(Error::InvalidArgument("histogram binning needs Q >= 1".into()));
    }
    let mut sum = vec![0.0; q];
    let mut count = vec![0usize; q];
    for s in samples {
        let j = super::metrics::width_bin(s.score, q);
        sum[j] += s.y();
        count[j] += 1;
    }
    let values = (0..q)
        .map(|j| {
            if count[j] == 0 {
                (j as f64 + 0.5) / q as f64
            } else {
                sum[j] / count[j] as f64
            }
        })
        .collect();
    Ok(FittedCalibrator::Histogram { values })
}

/// Weighted pool-adjacent-violators: the non-decreasing sequence minimizing
/// `Σ w_i (v_i - y_i)^2`.
pub fn pav(ys: &[f64], weights: &[f64]) -> Vec<f64> {
    // Each block: (weighted mean, total weight, member count).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(ys.len());
    for (&y, &w) in ys.iter().zip(weights) {
        blocks.push((y, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().expect("two blocks") = ((m1 * w1 + m2 * w2) / w, w, c1 + c2);
        }
    }
    blocks
        .iter()
        .flat_map(|&(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

pub fn fit_isotonic(samples: &[ScoredSample]) -> Result<FittedCalibrator> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("isotonic regression needs a sample".into()));
    }
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // Pool tied scores before PAV.
    let mut scores: Vec<f64> = Vec::new();
    let mut means: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for s in sorted {
        if scores.last() == Some(&s.score) {
            let k = means.len() - 1;
            means[k] = (means[k] * weights[k] + s.y()) / (weights[k] + 1.0);
            weights[k] += 1.0;
        } else {
            scores.push(s.score);
            means.push(s.y());
            weights.push(1.0);
        }
    }
    let fitted = pav(&means, &weights);
    let mut thresholds = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (s, v) in scores.iter().zip(fitted) {
        if values.last() != Some(&v) {
            thresholds.push(*s);
            values.push(v);
        }
    }
    Ok(FittedCalibrator::Isotonic { thresholds, values })
}

pub fn fit(kind: CalKind, samples: &[ScoredSample], q: usize) -> Result<FittedCalibrator> {
    match kind {
        CalKind::Temperature => fit_temperature(samples),
        CalKind::Platt => fit_platt(samples),
        CalKind::Beta => fit_beta(samples),
        CalKind::Histogram => fit_histogram(samples, q),
        CalKind::Isotonic => fit_isotonic(samples),
    }
}

/// One candidate's outcome during selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: CalKind,
    /// ECE on the selection samples, or the fitting error.
    pub ece: std::result::Result<f64, String>,
}

/// Fits every candidate kind and returns the one with the smallest ECE on
/// the same samples; ties go to the earlier kind in [`CalKind::ALL`].
pub fn select_best(
    candidates: &[CalKind],
    samples: &[ScoredSample],
    q: usize,
) -> Result<(FittedCalibrator, Vec<Candidate>)> {
    select_held_out(candidates, samples, samples, q)
}

/// Fits every candidate kind on `fit_samples` and returns the one with the
/// smallest ECE on `select_samples`, as fitted on `fit_samples`.
pub fn select_held_out(
    candidates: &[CalKind],
    fit_samples: &[ScoredSample],
    select_samples: &[ScoredSample],
    q: usize,
) -> Result<(FittedCalibrator, Vec<Candidate>)> {
    if candidates.is_empty() {
        return Err(Error::NoCalibrator("no candidate kinds given".into()));
    }
    let mut kinds = candidates.to_vec();
    kinds.sort();
    kinds.dedup();
    let mut best: Option<(f64, FittedCalibrator)> = None;
    let mut report = Vec::new();
    for kind in kinds {
        let outcome = fit(kind, fit_samples, q).and_then(|c| {
            let e = ece(&c.calibrate(select_samples), q, BinScheme::EqualWidth)?;
            Ok((e, c))
        });
        match outcome {
            Ok((e, c)) => {
                report.push(Candidate { kind, ece: Ok(e) });
                if best.as_ref().is_none_or(|(b, _)| e < *b) {
                    best = Some((e, c));
                }
            }
            Err(err) => report.push(Candidate {
                kind,
                ece: Err(err.to_string()),
            }),
        }
    }
    match best {
        Some((_, c)) => Ok((c, report)),
        None => Err(Error::NoCalibrator(
            report
                .iter()
                .map(|c| format!("{:?}: {}", c.kind, c.ece.as_ref().err().cloned().unwrap_or_default()))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn samples(scores: &[f64], labels: &[u8]) -> Vec<ScoredSample> {
        scores
            .iter()
            .zip(labels)
            .map(|(&s, &l)| ScoredSample::new(s, l == 1))
            .collect()
    }

    #[test]
    fn identity_parameters_keep_scores() {
        for kind in [CalKind::Temperature, CalKind::Platt, CalKind::Beta] {
            let c = FittedCalibrator::identity(kind);
            for s in [0.01, 0.3, 0.5, 0.77, 0.999] {
                assert!((c.apply(s) - s).abs() < 1e-12, "{kind:?} at {s}");
            }
        }
    }

    #[test]
    fn isotonic_small_case() {
        let c = fit_isotonic(&samples(&[0.1, 0.2, 0.3], &[1, 0, 1])).unwrap();
        assert_eq!(c.apply(0.1), 0.5);
        assert_eq!(c.apply(0.2), 0.5);
        assert_eq!(c.apply(0.3), 1.0);
        assert_eq!(c.apply(0.25), 0.5);
        assert_eq!(c.apply(0.0), 0.5);
    }

    #[test]
    fn isotonic_fixed_point() {
        let c = fit_isotonic(&samples(&[0.1, 0.4, 0.6, 0.9], &[0, 0, 1, 1])).unwrap();
        assert_eq!(c.apply(0.1), 0.0);
        assert_eq!(c.apply(0.9), 1.0);
    }

    #[test]
    fn isotonic_pools_ties() {
        let c = fit_isotonic(&samples(&[0.5, 0.5, 0.5, 0.9], &[1, 0, 0, 1])).unwrap();
        assert!((c.apply(0.5) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_cases() {
        let one = fit_histogram(&samples(&[0.31, 0.32, 0.33, 0.34, 0.35, 0.36, 0.37, 0.38, 0.39, 0.395], &[1, 1, 1, 0, 0, 0, 0, 0, 0, 0]), 10).unwrap();
        assert!((one.apply(0.35) - 0.3).abs() < 1e-15);
        assert_eq!(one.apply(0.05), 0.05);
        let flat = fit_histogram(&samples(&[0.1, 0.9, 0.5, 0.2], &[1, 0, 0, 0]), 1).unwrap();
        assert_eq!(flat.apply(0.7), 0.25);
        if let FittedCalibrator::Histogram { values } = &one {
            assert_eq!(one.apply(0.999), values[9]);
        }
    }

    #[test]
    fn temperature_recovers_overconfidence() {
        let mut rng = seeded(11);
        let s: Vec<ScoredSample> = (0..20_000)
            .map(|_| {
                let z: f64 = rng.random_range(-4.0..4.0);
                let y = rng.random::<f64>() < sigmoid(z);
                ScoredSample::from_logits([0.0, 3.0 * z], y)
            })
            .collect();
        let FittedCalibrator::Temperature { t } = fit_temperature(&s).unwrap() else {
            unreachable!()
        };
        assert!((t - 3.0).abs() < 0.3, "t = {t}");
    }

    #[test]
    fn single_class_rejected() {
        let s = samples(&[0.2, 0.7], &[1, 1]);
        assert!(matches!(fit_temperature(&s), Err(Error::SingleClass { missing: "unsafe" })));
        assert!(fit_platt(&s).is_err());
        assert!(fit_beta(&s).is_err());
    }

    #[test]
    fn beta_is_monotone() {
        let mut rng = seeded(2);
        let s: Vec<ScoredSample> = (0..2000)
            .map(|_| {
                let p: f64 = rng.random_range(0.0..1.0);
                ScoredSample::new(p, rng.random::<f64>() < p * p)
            })
            .collect();
        let c = fit_beta(&s).unwrap();
        let mut last = 0.0;
        for i in 0..=1000 {
            let v = c.apply(i as f64 / 1000.0);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn selection_prefers_earlier_kind_on_ties() {
        let s = samples(&[0.0, 1.0, 0.0, 1.0], &[0, 1, 0, 1]);
        let (c, report) = select_best(&[CalKind::Isotonic, CalKind::Histogram], &s, 10).unwrap();
        assert_eq!(c.kind(), CalKind::Histogram);
        assert_eq!(report.len(), 2);
    }

    #[test]
    fn held_out_selection_does_not_reward_memorization() {
        // Labels are independent of the scores, so the flexible kinds fit
        // noise: in-sample they look perfect, held out they lose to the
        // smooth maps that flatten towards the base rate.
        let mut rng = seeded(4);
        let mut draw = |n: usize| -> Vec<ScoredSample> {
            (0..n)
                .map(|_| ScoredSample::new(rng.random::<f64>(), rng.random::<f64>() < 0.5))
                .collect()
        };
        let (a, b) = (draw(60), draw(2000));
        let (inside, _) = select_best(&CalKind::ALL, &a, 10).unwrap();
        assert!(matches!(inside.kind(), CalKind::Histogram | CalKind::Isotonic));
        let (held, report) = select_held_out(&CalKind::ALL, &a, &b, 10).unwrap();
        assert!(!matches!(held.kind(), CalKind::Histogram | CalKind::Isotonic), "{report:?}");
    }

    #[test]
    fn selection_reports_all_failures() {
        let s = samples(&[0.2], &[1]);
        let err = select_best(&[CalKind::Temperature, CalKind::Platt], &s, 10).unwrap_err();
        assert!(err.to_string().contains("Temperature"));
        assert!(err.to_string().contains("Platt"));
    }
}
