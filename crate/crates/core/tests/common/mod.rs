#![allow(dead_code)]

use heatmap_eval::netcore::{ForwardTrace, Layer, Model};
use heatmap_eval::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random conv/pool/ReLU/linear stack on an 8x8 input with 1-3
/// channels. Biases are uniform in [-0.5, 0.5] unless `bias` is false.
pub fn random_net(rng: &mut ChaCha8Rng, bias: bool) -> Model {
    let channels = rng.random_range(1..=3);
    let mut b = Model::builder(vec![channels, 8, 8]);
    let c1 = rng.random_range(2..=4);
    b = if rng.random_bool(0.5) {
        b.conv2d(c1, 3, 1, 1)
    } else {
        b.conv2d(c1, 3, 1, 0).conv2d(c1, 1, 1, 1)
    };
    b = b.relu().maxpool(2, 2);
    if rng.random_bool(0.5) {
        b = b.conv2d(rng.random_range(2..=4), 3, 1, 1).relu();
    }
    if rng.random_bool(0.5) {
        b = b.maxpool(2, 2);
    }
    b = b.flatten().linear(rng.random_range(4..=8)).relu().linear(3);
    let mut model = b.build(rng).expect("valid random architecture");
    model.update_params(|params| {
        for p in params.iter_mut() {
            for v in p.bias.iter_mut() {
                *v = if bias { rng.random_range(-0.5..0.5) } else { 0.0 };
            }
        }
    });
    model
}

/// Only Linear and ReLU layers on a flat input.
pub fn random_linear_net(rng: &mut ChaCha8Rng, inputs: usize, with_relu: bool) -> Model {
    let mut b = Model::builder(vec![inputs]).linear(6);
    if with_relu {
        b = b.relu();
    }
    b.linear(5).linear(3).build(rng).expect("valid linear stack")
}

pub fn random_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random::<f64>())
}

/// ReLU sign pattern and pooling argmax positions: the network is a single
/// linear map on the set of inputs sharing this pattern.
pub fn activation_pattern(model: &Model, trace: &ForwardTrace) -> Vec<usize> {
    let mut pattern = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        match layer {
            Layer::ReLU => pattern.extend(trace.input(l).data().iter().map(|&z| (z > 0.0) as usize)),
            Layer::MaxPool2d(_) => pattern.extend_from_slice(trace.pool_argmax(l).unwrap()),
            _ => {}
        }
    }
    pattern
}

/// Smallest |pre-activation| at any ReLU, and smallest gap between the
/// winner and runner-up of any pooling window.
pub fn kink_margin(model: &Model, trace: &ForwardTrace) -> f64 {
    let mut margin = f64::INFINITY;
    for (l, layer) in model.layers().iter().enumerate() {
        match layer {
            Layer::ReLU => {
                for z in trace.input(l).data() {
                    margin = margin.min(z.abs());
                }
            }
            Layer::MaxPool2d(p) => {
                let x = trace.input(l);
                let (c, h, w) = x.chw().unwrap();
                let (k, s) = (p.window(), p.stride());
                for ch in 0..c {
                    for oy in 0..(h - k) / s + 1 {
                        for ox in 0..(w - k) / s + 1 {
                            let mut vals: Vec<f64> = (0..k * k)
                                .map(|i| x.data()[ch * h * w + (oy * s + i / k) * w + ox * s + i % k])
                                .collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            margin = margin.min(vals[0] - vals[1]);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    margin
}

/// `f(x) = w . x + bias` on a one-channel `h x w` image; returns the weights.
pub fn planted_linear(rng: &mut ChaCha8Rng, h: usize, w: usize, bias: f64) -> (Model, Vec<f64>) {
    let weights: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = Model::new(
        vec![1, h, w],
        vec![
            Layer::Flatten,
            Layer::Linear(
                heatmap_eval::netcore::Linear::new(h * w, 1, weights.clone(), vec![bias])
                    .expect("valid linear layer"),
            ),
        ],
    )
    .expect("valid linear model");
    (model, weights)
}
