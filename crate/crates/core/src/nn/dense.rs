use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
    /// Only valid on the final layer.
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Turns `grad` (w.r.t. the activation output `a`) into the gradient
    /// w.r.t. the pre-activation, in place.
    fn backprop(self, a: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => grad
                .iter_mut()
                .zip(a)
                .for_each(|(g, a)| *g *= 1.0 - a * a),
            Activation::Relu => grad.iter_mut().zip(a).for_each(|(g, a)| {
                if *a <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Sigmoid => grad
                .iter_mut()
                .zip(a)
                .for_each(|(g, a)| *g *= a * (1.0 - a)),
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(a).map(|(g, p)| g * p).sum();
                grad.iter_mut().zip(a).for_each(|(g, p)| *g = p * (*g - dot));
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Offset of the `in_dim × out_dim` weight block (input-major).
    weight_offset: usize,
    bias_offset: usize,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Fully connected network with all parameters in one flat vector.
///
/// Weights are stored input-major (`w[j * out + i]` connects input `j` to
/// output `i`), so a zero input skips a contiguous row. Frames are mostly
/// background, which makes this the dominant saving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Per-layer activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
    pub values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace has an input")
    }
}

impl DenseNet {
    /// Builds a network with zero parameters; `dims` lists every width
    /// including input and output, `activations` one tag per layer.
    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "need one activation per layer: {} dims, {} activations",
                dims.len(),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if activations[..activations.len() - 1].contains(&Activation::Softmax) {
            return Err(Error::InvalidArgument(
                "softmax is only permitted as the final activation".into(),
            ));
        }
        let mut layers = Vec::with_capacity(activations.len());
        let mut offset = 0;
        for (w, &activation) in dims.windows(2).zip(activations) {
            let weight_offset = offset;
            offset += w[0] * w[1];
            let bias_offset = offset;
            offset += w[1];
            layers.push(LayerShape {
                in_dim: w[0],
                out_dim: w[1],
                activation,
                weight_offset,
                bias_offset,
            });
        }
        Ok(Self {
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Xavier-normal weights, zero biases.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(dims, activations)?;
        for l in net.layers.clone() {
            let std = (2.0 / (l.in_dim + l.out_dim) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut net.params[l.weight_offset..l.bias_offset] {
                *w = normal.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.out_dim));
        d
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                stage: "parameter vector".into(),
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// Weight connecting input `j` to output `i` of `layer`.
    pub fn weight(&self, layer: usize, j: usize, i: usize) -> f64 {
        let l = &self.layers[layer];
        self.params[l.weight_offset + j * l.out_dim + i]
    }

    pub fn set_weight(&mut self, layer: usize, j: usize, i: usize, v: f64) {
        let l = self.layers[layer];
        self.params[l.weight_offset + j * l.out_dim + i] = v;
    }

    pub fn set_bias(&mut self, layer: usize, i: usize, v: f64) {
        let l = self.layers[layer];
        self.params[l.bias_offset + i] = v;
    }

    /// Rounds every parameter through `f32`, matching what the tensor
    /// container stores.
    pub fn round_to_f32(&mut self) {
        self.params
            .iter_mut()
            .for_each(|p| *p = f64::from(*p as f32));
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                stage: "network input".into(),
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn affine(&self, l: &LayerShape, x: &[f64]) -> Vec<f64> {
        let mut z = self.params[l.bias_offset..l.bias_offset + l.out_dim].to_vec();
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let row = &self.params[l.weight_offset + j * l.out_dim..][..l.out_dim];
            z.iter_mut().zip(row).for_each(|(z, w)| *z += xj * w);
        }
        z
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in &self.layers {
            let mut z = self.affine(l, &x);
            l.activation.apply(&mut z);
            x = z;
        }
        Ok(x)
    }

    /// Pre-activation output of the final layer (logits for softmax nets).
    pub fn forward_logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = self.affine(l, &x);
            if i < last {
                l.activation.apply(&mut z);
            }
            x = z;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for l in &self.layers {
            let mut z = self.affine(l, values.last().expect("non-empty"));
            l.activation.apply(&mut z);
            values.push(z);
        }
        Ok(Trace { values })
    }

    /// Reverse-mode pass for one sample.
    ///
    /// `out_grad` is dL/d(output) after the final activation. Parameter
    /// gradients are accumulated into `grad`; dL/d(input) is returned.
    pub fn backward(&self, trace: &Trace, out_grad: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = out_grad.to_vec();
        self.layers[last].activation.backprop(&trace.values[last + 1], &mut delta);
        self.backward_from_pre_activation(trace, delta, grad)
    }

    /// Like [`backward`](Self::backward) but starting from dL/dz of the final
    /// layer (e.g. `p - onehot` for softmax cross-entropy).
    pub fn backward_from_pre_activation(
        &self,
        trace: &Trace,
        delta: Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<f64> {
        self.backprop_layers(trace, delta, grad, true)
    }

    /// Parameter gradients only; skips the input gradient of the first layer.
    pub fn backward_params(&self, trace: &Trace, out_grad: &[f64], grad: &mut [f64]) {
        let last = self.layers.len() - 1;
        let mut delta = out_grad.to_vec();
        self.layers[last].activation.backprop(&trace.values[last + 1], &mut delta);
        self.backprop_layers(trace, delta, grad, false);
    }

    pub fn backward_params_from_pre_activation(&self, trace: &Trace, delta: Vec<f64>, grad: &mut [f64]) {
        self.backprop_layers(trace, delta, grad, false);
    }

    fn backprop_layers(
        &self,
        trace: &Trace,
        mut delta: Vec<f64>,
        grad: &mut [f64],
        input_grad: bool,
    ) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let x = &trace.values[li];
            for (gb, d) in grad[l.bias_offset..l.bias_offset + l.out_dim]
                .iter_mut()
                .zip(&delta)
            {
                *gb += d;
            }
            let want_dx = li > 0 || input_grad;
            let mut dx = vec![0.0; if want_dx { l.in_dim } else { 0 }];
            for j in 0..l.in_dim {
                let w = &self.params[l.weight_offset + j * l.out_dim..][..l.out_dim];
                if want_dx {
                    dx[j] = w.iter().zip(&delta).map(|(w, d)| w * d).sum();
                }
                let xj = x[j];
                if xj != 0.0 {
                    let g = &mut grad[l.weight_offset + j * l.out_dim..][..l.out_dim];
                    g.iter_mut().zip(&delta).for_each(|(g, d)| *g += xj * d);
                }
            }
            if li > 0 {
                self.layers[li - 1]
                    .activation
                    .backprop(&trace.values[li], &mut dx);
            }
            delta = dx;
        }
        delta
    }
}
