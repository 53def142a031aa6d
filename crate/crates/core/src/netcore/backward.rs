use crate::tensor::Tensor;

use super::layer::Layer;
use super::model::{ForwardTrace, Model};
use super::NetError;

/// How a backward signal crosses a ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ReluBackward {
    /// Multiply by the indicator `1{z > 0}` of the forward pre-activation.
    Indicator,
    /// Rectify the signal itself, ignoring the forward pass.
    Rectify,
}

/// Routes a signal living on a pooling layer's output back to the recorded
/// argmax positions of its input.
pub(crate) fn unpool(argmax: &[usize], signal: &[f64], input_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; input_len];
    for (&idx, &v) in argmax.iter().zip(signal) {
        out[idx] += v;
    }
    out
}

/// Pushes `seed` (shaped like the model output) down to the input, applying
/// transposed filters, argmax unpooling and the given ReLU rule.
pub(crate) fn propagate(
    model: &Model,
    trace: &ForwardTrace,
    seed: Tensor,
    relu: ReluBackward,
) -> Result<Tensor, NetError> {
    model.check_trace(trace)?;
    let mut g = seed;
    for (l, layer) in model.layers().iter().enumerate().rev() {
        let input = trace.input(l);
        let data = match layer {
            Layer::Linear(lin) => lin.apply_transposed(lin.weights(), g.data()),
            Layer::Conv2d(conv) => conv.geom(input.shape()).transposed(conv.weights(), g.data()),
            Layer::MaxPool2d(_) => {
                let arg = trace.pool_argmax(l).ok_or(NetError::StaleTrace)?;
                unpool(arg, g.data(), input.len())
            }
            Layer::ReLU => match relu {
                ReluBackward::Indicator => g
                    .data()
                    .iter()
                    .zip(input.data())
                    .map(|(&s, &z)| if z > 0.0 { s } else { 0.0 })
                    .collect(),
                ReluBackward::Rectify => g.data().iter().map(|&s| s.max(0.0)).collect(),
            },
            Layer::Flatten => g.into_data(),
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite { layer: Some(l) });
        }
        g = Tensor::from_parts(input.shape().to_vec(), data);
    }
    Ok(g)
}

fn one_hot(model: &Model, class: usize, value: f64) -> Tensor {
    let mut seed = Tensor::zeros(vec![model.num_classes()]);
    seed.data_mut()[class] = value;
    seed
}

/// Gradient of the class logit with respect to the input.
pub fn gradient_input(model: &Model, trace: &ForwardTrace, class: usize) -> Result<Tensor, NetError> {
    model.check_class(class)?;
    propagate(model, trace, one_hot(model, class, 1.0), ReluBackward::Indicator)
}

/// Deconvolution backward signal for `class`: one-hot seed carrying the class
/// logit, rectified at every ReLU.
pub(crate) fn deconv_signal(
    model: &Model,
    trace: &ForwardTrace,
    class: usize,
) -> Result<Tensor, NetError> {
    model.check_trace(trace)?;
    model.check_class(class)?;
    let f = trace.logits().data()[class];
    propagate(model, trace, one_hot(model, class, f), ReluBackward::Rectify)
}

/// Parameter gradients of one parametrized layer.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Zeroed gradient buffers, one per Linear/Conv2D layer in model order.
pub fn zero_param_grads(model: &Model) -> Vec<ParamGrad> {
    model
        .layers()
        .iter()
        .filter_map(|layer| match layer {
            Layer::Linear(l) => Some((l.weights().len(), l.bias().len())),
            Layer::Conv2d(c) => Some((c.weights().len(), c.bias().len())),
            _ => None,
        })
        .map(|(w, b)| ParamGrad {
            weights: vec![0.0; w],
            bias: vec![0.0; b],
        })
        .collect()
}

/// Backpropagates `dlogits` and accumulates parameter gradients into `grads`.
pub fn accumulate_param_grads(
    model: &Model,
    trace: &ForwardTrace,
    dlogits: &[f64],
    grads: &mut [ParamGrad],
) -> Result<(), NetError> {
    model.check_trace(trace)?;
    let mut g = dlogits.to_vec();
    let mut slot = grads.len();
    for (l, layer) in model.layers().iter().enumerate().rev() {
        let input = trace.input(l);
        g = match layer {
            Layer::Linear(lin) => {
                slot -= 1;
                let pg = &mut grads[slot];
                lin.accumulate_param_grads(input.data(), &g, &mut pg.weights, &mut pg.bias);
                if l == 0 {
                    break;
                }
                lin.apply_transposed(lin.weights(), &g)
            }
            Layer::Conv2d(conv) => {
                slot -= 1;
                let geom = conv.geom(input.shape());
                let pg = &mut grads[slot];
                geom.accumulate_param_grads(input.data(), &g, &mut pg.weights, &mut pg.bias);
                if l == 0 {
                    break;
                }
                geom.transposed(conv.weights(), &g)
            }
            Layer::MaxPool2d(_) => {
                let arg = trace.pool_argmax(l).ok_or(NetError::StaleTrace)?;
                unpool(arg, &g, input.len())
            }
            Layer::ReLU => g
                .iter()
                .zip(input.data())
                .map(|(&s, &z)| if z > 0.0 { s } else { 0.0 })
                .collect(),
            Layer::Flatten => g,
        };
    }
    Ok(())
}
