//! Dense networks with hand-derived gradients, Adam, and the shared
//! training loop used by every learned component.

mod adam;
mod dense;
mod loss;
mod train;

pub use adam::{adam_step, AdamState};
pub use dense::{sigmoid, softmax, softmax_in_place, Activation, DenseNet, LayerShape, Trace};
pub use loss::{clamp_prob, external_grad, loss_and_grad, Loss, Target, PROB_CLAMP};
pub use train::{train, train_supervised, StopReason, TrainConfig, TrainReport, Trainable};
