use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::tensor::Tensor;

use super::layer::{Conv2d, Fnv, Layer, Linear, MaxPool2d};
use super::NetError;

/// A sequential stack of layers mapping an input tensor to class logits.
#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    /// Input shape of every layer, plus the final output shape.
    shapes: Vec<Vec<usize>>,
    num_classes: usize,
    fingerprint: u64,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.input_shape == other.input_shape
    }
}

/// Recorded activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) inputs: Vec<Tensor>,
    pub(crate) outputs: Vec<Tensor>,
    pub(crate) argmax: Vec<Option<Vec<usize>>>,
    pub(crate) fingerprint: u64,
}

impl ForwardTrace {
    /// Input activation of layer `l`.
    pub fn input(&self, l: usize) -> &Tensor {
        &self.inputs[l]
    }

    /// Output activation of layer `l`.
    pub fn output(&self, l: usize) -> &Tensor {
        &self.outputs[l]
    }

    /// Flat input indices selected by pooling layer `l`, one per output element.
    pub fn pool_argmax(&self, l: usize) -> Option<&[usize]> {
        self.argmax[l].as_deref()
    }

    pub fn layer_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn logits(&self) -> &Tensor {
        self.outputs.last().expect("trace of a non-empty model")
    }

    /// The explained input.
    pub fn image(&self) -> &Tensor {
        &self.inputs[0]
    }
}

impl Model {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::InvalidLayer("model needs at least one layer".into()));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NetError::InvalidLayer(format!(
                "invalid input shape {input_shape:?}"
            )));
        }
        let shapes = compose_shapes(&input_shape, &layers)?;
        let out = shapes.last().expect("non-empty");
        let num_classes = match out.as_slice() {
            &[n] => n,
            other => {
                return Err(NetError::LayerShape {
                    layer: layers.len() - 1,
                    reason: format!("final layer must produce a vector of logits, got {other:?}"),
                })
            }
        };
        let mut model = Self {
            layers,
            input_shape,
            shapes,
            num_classes,
            fingerprint: 0,
        };
        model.fingerprint = model.compute_fingerprint();
        Ok(model)
    }

    pub fn builder(input_shape: Vec<usize>) -> ModelBuilder {
        ModelBuilder {
            input_shape: input_shape.clone(),
            current: input_shape,
            specs: Vec::new(),
            error: None,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Input shape of layer `l` (`l == layers().len()` gives the logit shape).
    pub fn shape_at(&self, l: usize) -> &[usize] {
        &self.shapes[l]
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// FNV-1a hash of the architecture and every parameter bit pattern.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn compute_fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for &d in &self.input_shape {
            h.write_u64(d as u64);
        }
        for layer in &self.layers {
            layer.fingerprint_into(&mut h);
        }
        h.finish()
    }

    /// Mutable access to the parameters. Shapes are fixed, so only values
    /// change; the fingerprint is refreshed afterwards so traces recorded
    /// before the update are detected as stale.
    pub fn update_params(&mut self, f: impl FnOnce(&mut [ParamsMut<'_>])) {
        let mut params: Vec<ParamsMut<'_>> = self
            .layers
            .iter_mut()
            .filter_map(|layer| match layer {
                Layer::Linear(l) => {
                    let (weights, bias) = l.params_mut();
                    Some(ParamsMut { weights, bias })
                }
                Layer::Conv2d(c) => {
                    let (weights, bias) = c.params_mut();
                    Some(ParamsMut { weights, bias })
                }
                _ => None,
            })
            .collect();
        f(&mut params);
        drop(params);
        self.fingerprint = self.compute_fingerprint();
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NetError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NetError::InputShape {
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        if !input.is_finite() {
            return Err(NetError::NonFinite { layer: None });
        }
        Ok(())
    }

    /// Traced forward pass.
    pub fn forward(&self, input: &Tensor) -> Result<ForwardTrace, NetError> {
        self.check_input(input)?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut argmax = Vec::with_capacity(n);
        let mut x = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let (y, arg) = layer.forward(&x);
            if !y.is_finite() {
                return Err(NetError::NonFinite { layer: Some(l) });
            }
            inputs.push(x);
            outputs.push(y.clone());
            argmax.push(arg);
            x = y;
        }
        Ok(ForwardTrace {
            inputs,
            outputs,
            argmax,
            fingerprint: self.fingerprint,
        })
    }

    /// Logits without recording a trace; bit-identical to `forward`.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor, NetError> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x).0;
            if !x.is_finite() {
                return Err(NetError::NonFinite { layer: Some(l) });
            }
        }
        Ok(x)
    }

    pub fn predict(&self, input: &Tensor) -> Result<usize, NetError> {
        Ok(argmax(self.logits(input)?.data()))
    }

    pub(crate) fn check_trace(&self, trace: &ForwardTrace) -> Result<(), NetError> {
        if trace.fingerprint != self.fingerprint || trace.inputs.len() != self.layers.len() {
            return Err(NetError::StaleTrace);
        }
        Ok(())
    }

    pub(crate) fn check_class(&self, class: usize) -> Result<(), NetError> {
        if class >= self.num_classes {
            return Err(NetError::ClassOutOfRange {
                class,
                classes: self.num_classes,
            });
        }
        Ok(())
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mutable view of one parametrized layer.
pub struct ParamsMut<'a> {
    pub weights: &'a mut [f64],
    pub bias: &'a mut [f64],
}

fn compose_shapes(input: &[usize], layers: &[Layer]) -> Result<Vec<Vec<usize>>, NetError> {
    let mut shapes = vec![input.to_vec()];
    for (l, layer) in layers.iter().enumerate() {
        let next = layer
            .output_shape(shapes.last().expect("non-empty"))
            .map_err(|reason| NetError::LayerShape { layer: l, reason })?;
        shapes.push(next);
    }
    Ok(shapes)
}

enum LayerSpec {
    Linear { out: usize },
    Conv { out: usize, kernel: usize, stride: usize, padding: usize },
    Pool { window: usize, stride: usize },
    ReLU,
    Flatten,
}

/// Builds a randomly initialized model layer by layer, inferring fan-in
/// from the running shape.
pub struct ModelBuilder {
    input_shape: Vec<usize>,
    current: Vec<usize>,
    specs: Vec<(LayerSpec, Vec<usize>)>,
    error: Option<NetError>,
}

impl ModelBuilder {
    fn push(mut self, spec: LayerSpec, probe: Layer) -> Self {
        if self.error.is_some() {
            return self;
        }
        match probe.output_shape(&self.current) {
            Ok(next) => {
                let input = std::mem::replace(&mut self.current, next);
                self.specs.push((spec, input));
            }
            Err(reason) => {
                self.error = Some(NetError::LayerShape {
                    layer: self.specs.len(),
                    reason,
                })
            }
        }
        self
    }

    pub fn conv2d(self, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        let in_c = self.current.first().copied().unwrap_or(0);
        let probe = Conv2d::new(
            in_c.max(1),
            out_channels.max(1),
            kernel.max(1),
            kernel.max(1),
            stride.max(1),
            padding,
            vec![0.0; in_c.max(1) * out_channels.max(1) * kernel.max(1) * kernel.max(1)],
            vec![0.0; out_channels.max(1)],
        );
        match probe {
            Ok(c) => self.push(
                LayerSpec::Conv {
                    out: out_channels,
                    kernel,
                    stride,
                    padding,
                },
                Layer::Conv2d(c),
            ),
            Err(e) => self.fail(e),
        }
    }

    pub fn maxpool(self, window: usize, stride: usize) -> Self {
        match MaxPool2d::new(window, stride) {
            Ok(p) => self.push(LayerSpec::Pool { window, stride }, Layer::MaxPool2d(p)),
            Err(e) => self.fail(e),
        }
    }

    pub fn relu(self) -> Self {
        self.push(LayerSpec::ReLU, Layer::ReLU)
    }

    pub fn flatten(self) -> Self {
        self.push(LayerSpec::Flatten, Layer::Flatten)
    }

    pub fn linear(self, out_features: usize) -> Self {
        let n_in = match self.current.as_slice() {
            &[n] => n,
            _ => 0,
        };
        match Linear::new(
            n_in.max(1),
            out_features.max(1),
            vec![0.0; n_in.max(1) * out_features.max(1)],
            vec![0.0; out_features.max(1)],
        ) {
            Ok(_) if n_in == 0 => {
                let layer = self.specs.len();
                let shape = self.current.clone();
                self.fail(NetError::LayerShape {
                    layer,
                    reason: format!("linear layer needs a flat input, got {shape:?}"),
                })
            }
            Ok(l) => self.push(LayerSpec::Linear { out: out_features }, Layer::Linear(l)),
            Err(e) => self.fail(e),
        }
    }

    fn fail(mut self, e: NetError) -> Self {
        self.error.get_or_insert(e);
        self
    }

    /// He-uniform weights, zero biases.
    pub fn build<R: Rng + ?Sized>(self, rng: &mut R) -> Result<Model, NetError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let mut layers = Vec::with_capacity(self.specs.len());
        for (spec, input) in self.specs {
            let layer = match spec {
                LayerSpec::Linear { out } => {
                    let n_in = input[0];
                    let weights = he_uniform(rng, n_in, n_in * out);
                    Layer::Linear(Linear::new(n_in, out, weights, vec![0.0; out])?)
                }
                LayerSpec::Conv {
                    out,
                    kernel,
                    stride,
                    padding,
                } => {
                    let in_c = input[0];
                    let fan_in = in_c * kernel * kernel;
                    let weights = he_uniform(rng, fan_in, out * fan_in);
                    Layer::Conv2d(Conv2d::new(
                        in_c,
                        out,
                        kernel,
                        kernel,
                        stride,
                        padding,
                        weights,
                        vec![0.0; out],
                    )?)
                }
                LayerSpec::Pool { window, stride } => Layer::MaxPool2d(MaxPool2d::new(window, stride)?),
                LayerSpec::ReLU => Layer::ReLU,
                LayerSpec::Flatten => Layer::Flatten,
            };
            layers.push(layer);
        }
        Model::new(self.input_shape, layers)
    }
}

fn he_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    (0..n).map(|_| dist.sample(rng)).collect()
}
