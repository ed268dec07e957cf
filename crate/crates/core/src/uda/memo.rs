use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::augment::{augment, AugKind, AugMagnitudes, Augmentation};
use crate::error::{Error, Result};
use crate::nn::PROB_CLAMP;
use crate::predictors::{Evaluator, InputKind, Prediction};
use crate::sim::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    /// Number of augmented views per sample.
    pub b: usize,
    pub eta: f64,
    /// Adapt a fresh copy per sample (episodic). When false, updates carry
    /// over from one sample to the next.
    pub copy_semantics: bool,
    pub magnitudes: AugMagnitudes,
    pub seed: u64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            b: 8,
            eta: 0.5,
            copy_semantics: true,
            magnitudes: AugMagnitudes::default(),
            seed: 0,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::Config(format!("MEMO needs B >= 2 views, got {}", self.b)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

/// What happened when adapting to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptEvent {
    pub skipped: bool,
    pub loss_before: f64,
    /// `None` when the step was skipped.
    pub loss_after: Option<f64>,
}

/// Per-frame augmentation seed, so that the views of a frame do not depend
/// on the order in which frames are processed.
fn frame_seed(y: &Observation, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in &y.pixels {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// The `b` views of a frame: the identity first, then the augmentation kinds
/// in order, cycling if `b > 8`.
pub fn views(y: &Observation, cfg: &AdaptationConfig) -> Vec<Observation> {
    let base = frame_seed(y, cfg.seed);
    (0..cfg.b)
        .map(|i| {
            if i == 0 {
                return y.clone();
            }
            let kind = AugKind::ALL[(i - 1) % AugKind::ALL.len()];
            let a = Augmentation::new(kind, &cfg.magnitudes, base.wrapping_add(i as u64));
            augment(y, &a)
        })
        .collect()
}

fn require_image(v: &Evaluator) -> Result<()> {
    if v.input_kind != InputKind::Image {
        return Err(Error::InvalidArgument(
            "test-time adaptation needs an image evaluator".into(),
        ));
    }
    Ok(())
}

/// Averages the evaluator's class probabilities over the given views.
pub fn marginal_over(v: &Evaluator, views: &[Observation]) -> Result<[f64; 2]> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("no views".into()));
    }
    let mut p = [0.0; 2];
    for x in views {
        let q = v.probs(&x.pixels)?;
        p[0] += q[0];
        p[1] += q[1];
    }
    let b = views.len() as f64;
    Ok([p[0] / b, p[1] / b])
}

pub fn marginal_probs(v: &Evaluator, y: &Observation, cfg: &AdaptationConfig) -> Result<[f64; 2]> {
    require_image(v)?;
    marginal_over(v, &views(y, cfg))
}

/// Entropy of the marginal distribution (natural log). Probabilities below
/// the clamp floor are raised to it inside the log.
pub fn memo_loss(p: &[f64; 2]) -> f64 {
    -p.iter().map(|&q| q * q.max(PROB_CLAMP).ln()).sum::<f64>()
}

/// Loss and flat parameter gradient of the marginal entropy over `views`.
pub fn memo_loss_grad(v: &Evaluator, views: &[Observation]) -> Result<(f64, Vec<f64>)> {
    let traces = views
        .iter()
        .map(|x| v.net.forward_trace(&x.pixels))
        .collect::<Result<Vec<_>>>()?;
    let b = views.len() as f64;
    let mut p = [0.0; 2];
    for t in &traces {
        let o = t.output();
        p[0] += o[0] / b;
        p[1] += o[1] / b;
    }
    let loss = memo_loss(&p);
    // d/dp of -p ln p; inside the clamp the log is constant.
    let dp: Vec<f64> = p
        .iter()
        .map(|&q| {
            let c = q.max(PROB_CLAMP);
            if c == q {
                -(q.ln() + 1.0) / b
            } else {
                -c.ln() / b
            }
        })
        .collect();
    let mut grad = vec![0.0; v.net.param_count()];
    for t in &traces {
        v.net.backward_params(t, &dp, &mut grad);
    }
    Ok((loss, grad))
}

fn step_in_place(v: &mut Evaluator, y: &Observation, cfg: &AdaptationConfig) -> Result<AdaptEvent> {
    let vs = views(y, cfg);
    let (loss_before, grad) = memo_loss_grad(v, &vs)?;
    if !loss_before.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Ok(AdaptEvent {
            skipped: true,
            loss_before,
            loss_after: None,
        });
    }
    for (w, g) in v.net.params_mut().iter_mut().zip(&grad) {
        *w -= cfg.eta * g;
    }
    let loss_after = memo_loss(&marginal_over(v, &vs)?);
    Ok(AdaptEvent {
        skipped: false,
        loss_before,
        loss_after: Some(loss_after),
    })
}

/// One gradient step on the marginal entropy of `y`'s views, applied to a
/// copy of `v`. A non-finite gradient leaves the copy unchanged.
pub fn adapt(v: &Evaluator, y: &Observation, cfg: &AdaptationConfig) -> Result<(Evaluator, AdaptEvent)> {
    require_image(v)?;
    let mut out = v.clone();
    let ev = step_in_place(&mut out, y, cfg)?;
    Ok((out, ev))
}

/// Adapts, then predicts on the unaugmented frame with the adapted weights.
pub fn predict_adapted(v: &Evaluator, y: &Observation, cfg: &AdaptationConfig) -> Result<(Prediction, AdaptEvent)> {
    let (a, ev) = adapt(v, y, cfg)?;
    Ok((a.predict(&y.pixels)?, ev))
}

/// Runs MEMO over a stream of frames, honouring `copy_semantics`.
#[derive(Debug, Clone)]
pub struct Adapter {
    base: Evaluator,
    current: Evaluator,
    cfg: AdaptationConfig,
}

impl Adapter {
    pub fn new(v: Evaluator, cfg: AdaptationConfig) -> Result<Self> {
        require_image(&v)?;
        cfg.validate()?;
        Ok(Self {
            current: v.clone(),
            base: v,
            cfg,
        })
    }

    pub fn predict(&mut self, y: &Observation) -> Result<(Prediction, AdaptEvent)> {
        if self.cfg.copy_semantics {
            predict_adapted(&self.base, y, &self.cfg)
        } else {
            let ev = step_in_place(&mut self.current, y, &self.cfg)?;
            Ok((self.current.predict(&y.pixels)?, ev))
        }
    }

    /// The evaluator in its current state (the untouched original in
    /// episodic mode).
    pub fn evaluator(&self) -> &Evaluator {
        if self.cfg.copy_semantics {
            &self.base
        } else {
            &self.current
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{render, SystemState};

    fn evaluator() -> Evaluator {
        Evaluator::new(1024, 8, InputKind::Image, 5).unwrap()
    }

    fn frame() -> Observation {
        render(&SystemState::new(0.1, 0.0, 0.08, 0.0))
    }

    #[test]
    fn entropy_hand_cases() {
        assert_eq!(memo_loss(&[1.0, 0.0]), 0.0);
        assert!((memo_loss(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
        let expected = -(0.7f64 * 0.7f64.ln() + 0.3 * 0.3f64.ln());
        assert!((memo_loss(&[0.7, 0.3]) - expected).abs() < 1e-15);
    }

    #[test]
    fn identical_views_give_plain_probs() {
        let v = evaluator();
        let f = frame();
        let p = marginal_over(&v, &vec![f.clone(); 4]).unwrap();
        let q = v.probs(&f.pixels).unwrap();
        assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_eta_changes_nothing() {
        let v = evaluator();
        let cfg = AdaptationConfig {
            eta: 0.0,
            ..Default::default()
        };
        let (a, ev) = adapt(&v, &frame(), &cfg).unwrap();
        assert_eq!(a, v);
        assert!(!ev.skipped);
    }

    #[test]
    fn first_view_is_identity_and_views_are_valid() {
        let f = frame();
        let vs = views(&f, &AdaptationConfig::default());
        assert_eq!(vs.len(), 8);
        assert_eq!(vs[0], f);
        assert!(vs.iter().all(|x| x.is_valid()));
    }

    #[test]
    fn episodic_adaptation_leaves_original() {
        let v = evaluator();
        let mut ad = Adapter::new(v.clone(), AdaptationConfig::default()).unwrap();
        ad.predict(&frame()).unwrap();
        assert_eq!(ad.evaluator(), &v);
        let mut cum = Adapter::new(
            v.clone(),
            AdaptationConfig {
                copy_semantics: false,
                ..Default::default()
            },
        )
        .unwrap();
        cum.predict(&frame()).unwrap();
        assert_ne!(cum.evaluator(), &v);
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut v = evaluator();
        v.net.params_mut()[0] = f64::NAN;
        let f = Observation::from_pixels(vec![1.0; 1024]);
        let (a, ev) = adapt(&v, &f, &AdaptationConfig::default()).unwrap();
        assert!(ev.skipped);
        assert!(a.net.params()[0].is_nan());
    }

    #[test]
    fn config_validation() {
        let bad = AdaptationConfig {
            b: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
