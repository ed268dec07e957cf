use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet};
use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over batch and output components of the squared error.
    Mse,
    /// Mean over the batch of `-ln p[target]`; needs a softmax output.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

/// Loss value and flat parameter gradient over a batch.
pub fn loss_and_grad(
    net: &DenseNet,
    loss: Loss,
    inputs: &[&[f64]],
    targets: &[Target],
) -> Result<(f64, Vec<f64>)> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            stage: "batch targets".into(),
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let n = inputs.len() as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let trace = net.forward_trace(x)?;
        let y = trace.output();
        match (loss, t) {
            (Loss::Mse, Target::Values(tv)) => {
                if tv.len() != y.len() {
                    return Err(Error::DimensionMismatch {
                        stage: "mse target".into(),
                        expected: y.len(),
                        got: tv.len(),
                    });
                }
                let scale = 1.0 / (n * y.len() as f64);
                let mut g = Vec::with_capacity(y.len());
                for (yi, ti) in y.iter().zip(tv) {
                    let d = yi - ti;
                    total += d * d * scale;
                    g.push(2.0 * d * scale);
                }
                net.backward_params(&trace, &g, &mut grad);
            }
            (Loss::CrossEntropy, Target::Class(c)) => {
                if net.layers().last().map(|l| l.activation) != Some(Activation::Softmax) {
                    return Err(Error::InvalidArgument(
                        "cross-entropy needs a softmax output layer".into(),
                    ));
                }
                if *c >= y.len() {
                    return Err(Error::InvalidArgument(format!(
                        "class {c} out of range for {} outputs",
                        y.len()
                    )));
                }
                total -= clamp_prob(y[*c]).ln() / n;
                let mut delta: Vec<f64> = y.iter().map(|p| p / n).collect();
                delta[*c] -= 1.0 / n;
                net.backward_params_from_pre_activation(&trace, delta, &mut grad);
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "target kind does not match the loss".into(),
                ))
            }
        }
    }
    Ok((total, grad))
}

/// Accumulates the gradient for an externally supplied dL/d(output).
pub fn external_grad(net: &DenseNet, input: &[f64], out_grad: &[f64], grad: &mut [f64]) -> Result<()> {
    let trace = net.forward_trace(input)?;
    if out_grad.len() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            stage: "external output gradient".into(),
            expected: net.output_dim(),
            got: out_grad.len(),
        });
    }
    net.backward_params(&trace, out_grad, grad);
    Ok(())
}
