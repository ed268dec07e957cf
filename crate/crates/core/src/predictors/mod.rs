//! Monolithic and composite (encoder → forecaster → evaluator) safety
//! predictors.

mod evaluator;
mod features;
mod forecaster;
mod monolithic;
mod pipeline;
mod vae;

pub use evaluator::{class_targets, train_evaluator, Evaluator, InputKind, Prediction, SAFE, UNSAFE};
pub use features::{latent_windows, mono_inputs, state_index, LatentCache};
pub use forecaster::{
    forecast_mse, forecaster_input, train_forecaster, Forecast, ForecasterShape, LatentForecaster,
    LatentWindowSet,
};
pub use monolithic::{mono_input_dim, train_monolithic, window_features, MonoInput, MonolithicPredictor};
pub use pipeline::{
    evaluate_latents, forecast_window, predict_composite, predict_composite_image,
    predict_monolithic, EncoderBound, LatentCodec, PixelCodec,
};
pub use vae::{kl_standard_normal, train_vae, FrozenEncoder, VaeConfig, VaeEncoder, VaeReport};
