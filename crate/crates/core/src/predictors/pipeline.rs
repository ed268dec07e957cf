use super::evaluator::{Evaluator, InputKind, Prediction};
use super::forecaster::{Forecast, LatentForecaster};
use super::monolithic::MonolithicPredictor;
use super::vae::FrozenEncoder;
use crate::error::{Error, Result};
use crate::sim::{Action, Observation};

/// Frame ⇄ latent mapping used by the composite pipelines.
pub trait LatentCodec {
    fn latent_dim(&self) -> usize;
    fn encode(&self, y: &Observation) -> Result<Vec<f64>>;
    fn decode(&self, z: &[f64]) -> Result<Observation>;
    fn fingerprint(&self) -> Option<&str> {
        None
    }
}

impl LatentCodec for FrozenEncoder {
    fn latent_dim(&self) -> usize {
        FrozenEncoder::latent_dim(self)
    }

    fn encode(&self, y: &Observation) -> Result<Vec<f64>> {
        FrozenEncoder::encode(self, y)
    }

    fn decode(&self, z: &[f64]) -> Result<Observation> {
        FrozenEncoder::decode(self, z)
    }

    fn fingerprint(&self) -> Option<&str> {
        Some(FrozenEncoder::fingerprint(self))
    }
}

/// Identity codec: the latent is the frame itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct PixelCodec;

impl LatentCodec for PixelCodec {
    fn latent_dim(&self) -> usize {
        crate::sim::FRAME_PIXELS
    }

    fn encode(&self, y: &Observation) -> Result<Vec<f64>> {
        Ok(y.pixels.clone())
    }

    fn decode(&self, z: &[f64]) -> Result<Observation> {
        Ok(Observation::from_pixels(z.to_vec()))
    }
}

/// Links a forecaster to the encoder it was trained against.
pub trait EncoderBound {
    fn encoder_fingerprint(&self) -> Option<&str>;
}

impl EncoderBound for LatentForecaster {
    fn encoder_fingerprint(&self) -> Option<&str> {
        Some(&self.encoder_fingerprint)
    }
}

fn check_binding<C: LatentCodec, F: EncoderBound>(enc: &C, f: &F) -> Result<()> {
    match (enc.fingerprint(), f.encoder_fingerprint()) {
        (Some(a), Some(b)) if a != b => Err(Error::StageOrder(format!(
            "forecaster was trained on encoder {b}, pipeline uses {a}; retrain the forecaster"
        ))),
        _ => Ok(()),
    }
}

fn split_window(window: &[(Observation, Action)]) -> (Vec<&Observation>, Vec<f64>) {
    window.iter().map(|(o, a)| (o, a.sign())).unzip()
}

pub fn predict_monolithic(
    p: &MonolithicPredictor,
    enc: Option<&FrozenEncoder>,
    window: &[(Observation, Action)],
) -> Result<Prediction> {
    p.predict_features(&p.features(enc, window)?)
}

/// Encodes the window and forecasts the latents up to the horizon.
pub fn forecast_window<C: LatentCodec, F: Forecast + EncoderBound>(
    enc: &C,
    f: &F,
    window: &[(Observation, Action)],
) -> Result<Vec<Vec<f64>>> {
    check_binding(enc, f)?;
    if window.len() != f.input_window() {
        return Err(Error::DimensionMismatch {
            stage: "encoder window".into(),
            expected: f.input_window(),
            got: window.len(),
        });
    }
    let (frames, actions) = split_window(window);
    let latents = frames
        .iter()
        .map(|o| enc.encode(o))
        .collect::<Result<Vec<_>>>()?;
    f.forecast(&latents, &actions)
}

/// Runs the evaluator on forecast latents according to its input kind.
pub fn evaluate_latents(v: &Evaluator, forecast: &[Vec<f64>]) -> Result<Prediction> {
    match v.input_kind {
        InputKind::Latent => {
            let last = forecast
                .last()
                .ok_or_else(|| Error::InvalidArgument("empty forecast".into()))?;
            v.predict(last).map_err(|e| stage_error("latent evaluator", e))
        }
        InputKind::LatentWindow => {
            let flat: Vec<f64> = forecast.iter().flatten().copied().collect();
            v.predict(&flat).map_err(|e| stage_error("latent-window evaluator", e))
        }
        InputKind::Image => Err(Error::InvalidArgument(
            "image evaluator cannot consume latents; use the image pipeline".into(),
        )),
    }
}

fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::DimensionMismatch { expected, got, .. } => Error::DimensionMismatch {
            stage: stage.to_string(),
            expected,
            got,
        },
        other => other,
    }
}

/// Encoder → latent forecaster → evaluator.
pub fn predict_composite<C, F>(
    enc: &C,
    f: &F,
    v: &Evaluator,
    window: &[(Observation, Action)],
) -> Result<Prediction>
where
    C: LatentCodec,
    F: Forecast + EncoderBound,
{
    let forecast = forecast_window(enc, f, window)?;
    evaluate_latents(v, &forecast)
}

/// Encoder → latent forecaster → decoder → image evaluator.
pub fn predict_composite_image<C, F>(
    enc: &C,
    f: &F,
    v_img: &Evaluator,
    window: &[(Observation, Action)],
) -> Result<Prediction>
where
    C: LatentCodec,
    F: Forecast + EncoderBound,
{
    if v_img.input_kind != InputKind::Image {
        return Err(Error::InvalidArgument(
            "composite image pipeline needs an image evaluator".into(),
        ));
    }
    let forecast = forecast_window(enc, f, window)?;
    let last = forecast
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty forecast".into()))?;
    let frame = enc.decode(last)?;
    v_img
        .predict(&frame.pixels)
        .map_err(|e| stage_error("image evaluator", e))
}
