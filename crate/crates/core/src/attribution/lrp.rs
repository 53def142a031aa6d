//! Layer-wise relevance propagation.
//!
//! Relevance starts as the class logit on the class output neuron and is
//! pushed down layer by layer. Filtering layers (Linear, Conv2D) split each
//! output neuron's relevance over its inputs in proportion to the
//! contributions `z_ij = a_i w_ij` (biases excluded); pooling layers route
//! relevance to the recorded maxima; ReLU and Flatten pass it through.

use crate::netcore::{unpool, ForwardTrace, Layer, Model};
use crate::tensor::Tensor;

use super::AttributionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrpRule {
    /// `R_i = sum_j z_ij / (s_j + eps * sign(s_j)) R_j`, with `sign(0) = +1`.
    Epsilon { epsilon: f64 },
    /// `R_i = sum_j (alpha z+_ij / s+_j + beta z-_ij / s-_j) R_j`, `alpha + beta = 1`.
    AlphaBeta { alpha: f64, beta: f64 },
}

/// Validated LRP configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrpParams {
    rule: LrpRule,
}

impl LrpParams {
    pub fn epsilon(epsilon: f64) -> Result<Self, AttributionError> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(AttributionError::InvalidParams(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(Self {
            rule: LrpRule::Epsilon { epsilon },
        })
    }

    pub fn alpha_beta(alpha: f64, beta: f64) -> Result<Self, AttributionError> {
        if !(alpha.is_finite() && beta.is_finite()) || alpha + beta != 1.0 {
            return Err(AttributionError::InvalidParams(format!(
                "alpha + beta must equal 1, got {alpha} + {beta}"
            )));
        }
        Ok(Self {
            rule: LrpRule::AlphaBeta { alpha, beta },
        })
    }

    /// alpha = 2, beta = -1.
    pub fn alpha2_beta1() -> Self {
        Self {
            rule: LrpRule::AlphaBeta {
                alpha: 2.0,
                beta: -1.0,
            },
        }
    }

    pub fn epsilon_small() -> Self {
        Self {
            rule: LrpRule::Epsilon { epsilon: 0.01 },
        }
    }

    pub fn epsilon_large() -> Self {
        Self {
            rule: LrpRule::Epsilon { epsilon: 100.0 },
        }
    }

    pub fn rule(&self) -> LrpRule {
        self.rule
    }
}

/// Relevance at every layer boundary: entry `l` is the relevance on the
/// input of layer `l`; the last entry is the seed on the logits.
pub fn lrp_relevances(
    model: &Model,
    trace: &ForwardTrace,
    class: usize,
    params: &LrpParams,
) -> Result<Vec<Tensor>, AttributionError> {
    model.check_trace(trace)?;
    model.check_class(class)?;
    let n = model.layers().len();
    let mut seed = Tensor::zeros(vec![model.num_classes()]);
    seed.data_mut()[class] = trace.logits().data()[class];
    let mut rel = vec![Tensor::zeros(vec![0]); n + 1];
    rel[n] = seed;
    for (l, layer) in model.layers().iter().enumerate().rev() {
        let input = trace.input(l);
        let upper = rel[l + 1].data();
        let data = match layer {
            Layer::Linear(lin) => {
                let forward = |w: &[f64], x: &[f64]| lin.apply(w, None, x);
                let transposed = |w: &[f64], g: &[f64]| lin.apply_transposed(w, g);
                redistribute(lin.weights(), input.data(), upper, params.rule, forward, transposed)
            }
            Layer::Conv2d(conv) => {
                let geom = conv.geom(input.shape());
                let forward = |w: &[f64], x: &[f64]| geom.forward(w, None, x);
                let transposed = |w: &[f64], g: &[f64]| geom.transposed(w, g);
                redistribute(conv.weights(), input.data(), upper, params.rule, forward, transposed)
            }
            Layer::MaxPool2d(_) => {
                let arg = trace
                    .pool_argmax(l)
                    .ok_or(crate::netcore::NetError::StaleTrace)?;
                unpool(arg, upper, input.len())
            }
            Layer::ReLU | Layer::Flatten => upper.to_vec(),
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AttributionError::NonFinite {
                layer: l,
                name: layer.name(),
            });
        }
        rel[l] = Tensor::from_parts(input.shape().to_vec(), data);
    }
    Ok(rel)
}

fn split_signs(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    v.iter().map(|&x| (x.max(0.0), x.min(0.0))).unzip()
}

/// One filtering-layer LRP step, expressed through the layer's forward and
/// transposed linear maps so it works for both dense and convolutional
/// weights.
fn redistribute(
    weights: &[f64],
    a: &[f64],
    upper: &[f64],
    rule: LrpRule,
    forward: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    transposed: impl Fn(&[f64], &[f64]) -> Vec<f64>,
) -> Vec<f64> {
    match rule {
        LrpRule::Epsilon { epsilon } => {
            let s = forward(weights, a);
            let c: Vec<f64> = s
                .iter()
                .zip(upper)
                .map(|(&s, &r)| {
                    let sign = if s >= 0.0 { 1.0 } else { -1.0 };
                    if r == 0.0 {
                        0.0
                    } else {
                        r / (s + epsilon * sign)
                    }
                })
                .collect();
            let back = transposed(weights, &c);
            a.iter().zip(back).map(|(ai, b)| ai * b).collect()
        }
        LrpRule::AlphaBeta { alpha, beta } => {
            let (wp, wn) = split_signs(weights);
            let (ap, an) = split_signs(a);
            let has_negative_input = an.iter().any(|&v| v != 0.0);
            let add = |x: Vec<f64>, y: Vec<f64>| -> Vec<f64> {
                x.into_iter().zip(y).map(|(p, q)| p + q).collect()
            };
            // s+ = W+ a+ + W- a-, s- = W- a+ + W+ a-
            let (s_pos, s_neg) = if has_negative_input {
                (
                    add(forward(&wp, &ap), forward(&wn, &an)),
                    add(forward(&wn, &ap), forward(&wp, &an)),
                )
            } else {
                (forward(&wp, &ap), forward(&wn, &ap))
            };
            let mut c_pos = vec![0.0; upper.len()];
            let mut c_neg = vec![0.0; upper.len()];
            for j in 0..upper.len() {
                let r = upper[j];
                if r == 0.0 {
                    continue;
                }
                let (sp, sn) = (s_pos[j], s_neg[j]);
                let (ka, kb) = match (sp > 0.0, sn < 0.0) {
                    (true, true) => (alpha, beta),
                    (true, false) => (1.0, 0.0),
                    (false, true) => (0.0, 1.0),
                    (false, false) => (0.0, 0.0),
                };
                if ka != 0.0 {
                    c_pos[j] = ka * r / sp;
                }
                if kb != 0.0 {
                    c_neg[j] = kb * r / sn;
                }
            }
            // R = a+ (W+^T c+ + W-^T c-) + a- (W-^T c+ + W+^T c-)
            let on_pos = add(transposed(&wp, &c_pos), transposed(&wn, &c_neg));
            let mut out: Vec<f64> = ap.iter().zip(on_pos).map(|(x, y)| x * y).collect();
            if has_negative_input {
                let on_neg = add(transposed(&wn, &c_pos), transposed(&wp, &c_neg));
                for ((o, x), y) in out.iter_mut().zip(&an).zip(on_neg) {
                    *o += x * y;
                }
            }
            out
        }
    }
}
