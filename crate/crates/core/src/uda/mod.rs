//! Label-free test-time adaptation of the image evaluator by marginal
//! entropy minimization over augmented views.

mod augment;
mod memo;
mod shift;

pub use augment::{
    augment, autocontrast, equalize, posterize, rotate, shear, solarize, translate, AugKind, AugMagnitudes,
    Augmentation,
};
pub use memo::{
    adapt, marginal_over, marginal_probs, memo_loss, memo_loss_grad, predict_adapted, views, AdaptEvent,
    AdaptationConfig, Adapter,
};
pub use shift::{make_normal_set, make_shifted_set, photometric, pick_balanced, LabeledFrames, ShiftConfig, MIN_MINORITY};
