use crate::tensor::Tensor;

use super::NetError;

/// Fully connected layer `y_j = sum_i w_ij x_i + b_j`.
///
/// Weights are stored output-major: `weights[j * in_features + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Linear {
    pub fn new(
        in_features: usize,
        out_features: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NetError> {
        if in_features == 0 || out_features == 0 {
            return Err(NetError::InvalidLayer("linear layer needs non-zero extents".into()));
        }
        if weights.len() != in_features * out_features || bias.len() != out_features {
            return Err(NetError::InvalidLayer(format!(
                "linear {in_features}->{out_features} expects {} weights and {} biases, got {} and {}",
                in_features * out_features,
                out_features,
                weights.len(),
                bias.len()
            )));
        }
        check_finite(&weights)?;
        check_finite(&bias)?;
        Ok(Self {
            in_features,
            out_features,
            weights,
            bias,
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    /// `W x (+ b)` with externally supplied weights of this layer's geometry.
    pub(crate) fn apply(&self, weights: &[f64], bias: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
        let n_in = self.in_features;
        (0..self.out_features)
            .map(|j| {
                let row = &weights[j * n_in..(j + 1) * n_in];
                let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                dot + bias.map_or(0.0, |b| b[j])
            })
            .collect()
    }

    /// `W^T g`.
    pub(crate) fn apply_transposed(&self, weights: &[f64], g: &[f64]) -> Vec<f64> {
        let n_in = self.in_features;
        let mut out = vec![0.0; n_in];
        for (j, &gj) in g.iter().enumerate() {
            if gj == 0.0 {
                continue;
            }
            let row = &weights[j * n_in..(j + 1) * n_in];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gj;
            }
        }
        out
    }

    pub(crate) fn accumulate_param_grads(
        &self,
        x: &[f64],
        g: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
    ) {
        let n_in = self.in_features;
        for (j, &gj) in g.iter().enumerate() {
            db[j] += gj;
            if gj == 0.0 {
                continue;
            }
            for (d, v) in dw[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
                *d += gj * v;
            }
        }
    }
}

/// 2-D convolution over `[channels, height, width]` inputs with square
/// stride and symmetric zero padding.
///
/// Filters are stored as `[out_channels, in_channels, kernel_h, kernel_w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    in_channels: usize,
    out_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    padding: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Spatial geometry of one convolution application.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Output columns `ox` for which input column `ox*stride + k - pad` is in range.
    fn valid_range(&self, k: usize, out_len: usize, in_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - self.pad as isize;
        // ox*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // ox*s + off <= in_len - 1
        let max_pos = in_len as isize - 1 - off;
        let hi = if max_pos < 0 { 0 } else { (max_pos / s + 1).min(out_len as isize) };
        let lo = lo.min(out_len as isize);
        (lo as usize, hi.max(lo) as usize)
    }

    pub(crate) fn forward(&self, weights: &[f64], bias: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
        let plane_out = self.out_h * self.out_w;
        let plane_in = self.in_h * self.in_w;
        let mut out = vec![0.0; self.out_c * plane_out];
        for oc in 0..self.out_c {
            let o = &mut out[oc * plane_out..(oc + 1) * plane_out];
            if let Some(b) = bias {
                o.fill(b[oc]);
            }
            for ic in 0..self.in_c {
                let xin = &x[ic * plane_in..(ic + 1) * plane_in];
                let wbase = (oc * self.in_c + ic) * self.kh * self.kw;
                for ky in 0..self.kh {
                    let (oy0, oy1) = self.valid_range(ky, self.out_h, self.in_h);
                    for kx in 0..self.kw {
                        let w = weights[wbase + ky * self.kw + kx];
                        if w == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = self.valid_range(kx, self.out_w, self.in_w);
                        for oy in oy0..oy1 {
                            let iy = oy * self.stride + ky - self.pad;
                            let orow = &mut o[oy * self.out_w..(oy + 1) * self.out_w];
                            let irow = &xin[iy * self.in_w..(iy + 1) * self.in_w];
                            if self.stride == 1 {
                                let ix0 = ox0 + kx - self.pad;
                                for (ov, iv) in orow[ox0..ox1]
                                    .iter_mut()
                                    .zip(&irow[ix0..ix0 + (ox1 - ox0)])
                                {
                                    *ov += w * iv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    orow[ox] += w * irow[ox * self.stride + kx - self.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub(crate) fn transposed(&self, weights: &[f64], g: &[f64]) -> Vec<f64> {
        let plane_out = self.out_h * self.out_w;
        let plane_in = self.in_h * self.in_w;
        let mut out = vec![0.0; self.in_c * plane_in];
        for oc in 0..self.out_c {
            let go = &g[oc * plane_out..(oc + 1) * plane_out];
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            for ic in 0..self.in_c {
                let xin = &mut out[ic * plane_in..(ic + 1) * plane_in];
                let wbase = (oc * self.in_c + ic) * self.kh * self.kw;
                for ky in 0..self.kh {
                    let (oy0, oy1) = self.valid_range(ky, self.out_h, self.in_h);
                    for kx in 0..self.kw {
                        let w = weights[wbase + ky * self.kw + kx];
                        if w == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = self.valid_range(kx, self.out_w, self.in_w);
                        for oy in oy0..oy1 {
                            let iy = oy * self.stride + ky - self.pad;
                            let grow = &go[oy * self.out_w..(oy + 1) * self.out_w];
                            let irow = &mut xin[iy * self.in_w..(iy + 1) * self.in_w];
                            if self.stride == 1 {
                                let ix0 = ox0 + kx - self.pad;
                                for (iv, gv) in irow[ix0..ix0 + (ox1 - ox0)]
                                    .iter_mut()
                                    .zip(&grow[ox0..ox1])
                                {
                                    *iv += w * gv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    irow[ox * self.stride + kx - self.pad] += w * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub(crate) fn accumulate_param_grads(
        &self,
        x: &[f64],
        g: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
    ) {
        let plane_out = self.out_h * self.out_w;
        let plane_in = self.in_h * self.in_w;
        for oc in 0..self.out_c {
            let go = &g[oc * plane_out..(oc + 1) * plane_out];
            db[oc] += go.iter().sum::<f64>();
            for ic in 0..self.in_c {
                let xin = &x[ic * plane_in..(ic + 1) * plane_in];
                let wbase = (oc * self.in_c + ic) * self.kh * self.kw;
                for ky in 0..self.kh {
                    let (oy0, oy1) = self.valid_range(ky, self.out_h, self.in_h);
                    for kx in 0..self.kw {
                        let (ox0, ox1) = self.valid_range(kx, self.out_w, self.in_w);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * self.stride + ky - self.pad;
                            let grow = &go[oy * self.out_w..(oy + 1) * self.out_w];
                            let irow = &xin[iy * self.in_w..(iy + 1) * self.in_w];
                            if self.stride == 1 {
                                let ix0 = ox0 + kx - self.pad;
                                acc += grow[ox0..ox1]
                                    .iter()
                                    .zip(&irow[ix0..ix0 + (ox1 - ox0)])
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            } else {
                                for ox in ox0..ox1 {
                                    acc += grow[ox] * irow[ox * self.stride + kx - self.pad];
                                }
                            }
                        }
                        dw[wbase + ky * self.kw + kx] += acc;
                    }
                }
            }
        }
    }
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NetError> {
        if in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(NetError::InvalidLayer("conv2d extents must be non-zero".into()));
        }
        if stride == 0 {
            return Err(NetError::InvalidLayer("conv2d stride must be >= 1".into()));
        }
        let expected = out_channels * in_channels * kernel_h * kernel_w;
        if weights.len() != expected || bias.len() != out_channels {
            return Err(NetError::InvalidLayer(format!(
                "conv2d expects {expected} weights and {out_channels} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        check_finite(&weights)?;
        check_finite(&bias)?;
        Ok(Self {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            weights,
            bias,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.kernel_h, self.kernel_w)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub(crate) fn geom(&self, input: &[usize]) -> ConvGeom {
        let (in_h, in_w) = (input[1], input[2]);
        ConvGeom {
            in_c: self.in_channels,
            out_c: self.out_channels,
            kh: self.kernel_h,
            kw: self.kernel_w,
            stride: self.stride,
            pad: self.padding,
            in_h,
            in_w,
            out_h: (in_h + 2 * self.padding - self.kernel_h) / self.stride + 1,
            out_w: (in_w + 2 * self.padding - self.kernel_w) / self.stride + 1,
        }
    }
}

/// Max pooling with a square window; the window/stride pair must tile the
/// input exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    window: usize,
    stride: usize,
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> Result<Self, NetError> {
        if window == 0 || stride == 0 {
            return Err(NetError::InvalidLayer(
                "max-pool window and stride must be >= 1".into(),
            ));
        }
        Ok(Self { window, stride })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Pooled output and, for every output element, the flat index of the
    /// input element that won. Ties go to the first in row-major order.
    pub(crate) fn pool(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        let s = x.shape();
        let (c, h, w) = (s[0], s[1], s[2]);
        let oh = (h - self.window) / self.stride + 1;
        let ow = (w - self.window) / self.stride + 1;
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut arg = Vec::with_capacity(c * oh * ow);
        let xd = x.data();
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for dy in 0..self.window {
                        let row = base + (oy * self.stride + dy) * w + ox * self.stride;
                        for dx in 0..self.window {
                            let v = xd[row + dx];
                            if v > best || best_idx == usize::MAX {
                                best = v;
                                best_idx = row + dx;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx);
                }
            }
        }
        (Tensor::from_parts(vec![c, oh, ow], out), arg)
    }
}

/// One stage of a sequential network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(Linear),
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    ReLU,
    Flatten,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "Linear",
            Layer::Conv2d(_) => "Conv2D",
            Layer::MaxPool2d(_) => "MaxPool2D",
            Layer::ReLU => "ReLU",
            Layer::Flatten => "Flatten",
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Linear(l) => l.weights.len() + l.bias.len(),
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            _ => 0,
        }
    }

    /// Output shape for the given input shape, or a description of why the
    /// input does not fit.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            Layer::Linear(l) => match input {
                &[n] if n == l.in_features => Ok(vec![l.out_features]),
                _ => Err(format!(
                    "linear layer expects input [{}], got {input:?}",
                    l.in_features
                )),
            },
            Layer::Conv2d(c) => match input {
                &[ch, h, w] if ch == c.in_channels => {
                    if h + 2 * c.padding < c.kernel_h || w + 2 * c.padding < c.kernel_w {
                        return Err(format!(
                            "conv kernel {}x{} larger than padded input {h}x{w}",
                            c.kernel_h, c.kernel_w
                        ));
                    }
                    let g = c.geom(input);
                    Ok(vec![c.out_channels, g.out_h, g.out_w])
                }
                _ => Err(format!(
                    "conv layer expects [{}, H, W], got {input:?}",
                    c.in_channels
                )),
            },
            Layer::MaxPool2d(p) => match input {
                &[ch, h, w] => {
                    if h < p.window
                        || w < p.window
                        || (h - p.window) % p.stride != 0
                        || (w - p.window) % p.stride != 0
                    {
                        return Err(format!(
                            "max-pool window {} / stride {} does not tile {h}x{w}",
                            p.window, p.stride
                        ));
                    }
                    Ok(vec![
                        ch,
                        (h - p.window) / p.stride + 1,
                        (w - p.window) / p.stride + 1,
                    ])
                }
                _ => Err(format!("max-pool expects [C, H, W], got {input:?}")),
            },
            Layer::ReLU => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Forward application; returns pooling argmax indices for MaxPool2D.
    /// The input shape must already be validated against `output_shape`.
    pub(crate) fn forward(&self, x: &Tensor) -> (Tensor, Option<Vec<usize>>) {
        match self {
            Layer::Linear(l) => {
                let y = l.apply(&l.weights, Some(&l.bias), x.data());
                (Tensor::from_parts(vec![l.out_features], y), None)
            }
            Layer::Conv2d(c) => {
                let g = c.geom(x.shape());
                let y = g.forward(&c.weights, Some(&c.bias), x.data());
                (Tensor::from_parts(vec![g.out_c, g.out_h, g.out_w], y), None)
            }
            Layer::MaxPool2d(p) => {
                let (y, arg) = p.pool(x);
                (y, Some(arg))
            }
            Layer::ReLU => (x.map(|v| v.max(0.0)), None),
            Layer::Flatten => (Tensor::from_parts(vec![x.len()], x.data().to_vec()), None),
        }
    }

    pub(crate) fn fingerprint_into(&self, h: &mut Fnv) {
        match self {
            Layer::Linear(l) => {
                h.write_u64(1);
                h.write_u64(l.in_features as u64);
                h.write_u64(l.out_features as u64);
                h.write_f64s(&l.weights);
                h.write_f64s(&l.bias);
            }
            Layer::Conv2d(c) => {
                h.write_u64(2);
                for v in [
                    c.in_channels,
                    c.out_channels,
                    c.kernel_h,
                    c.kernel_w,
                    c.stride,
                    c.padding,
                ] {
                    h.write_u64(v as u64);
                }
                h.write_f64s(&c.weights);
                h.write_f64s(&c.bias);
            }
            Layer::MaxPool2d(p) => {
                h.write_u64(3);
                h.write_u64(p.window as u64);
                h.write_u64(p.stride as u64);
            }
            Layer::ReLU => h.write_u64(4),
            Layer::Flatten => h.write_u64(5),
        }
    }
}

/// 64-bit FNV-1a, used to fingerprint model parameters.
pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn write_f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.write_u64(v.to_bits());
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

fn check_finite(values: &[f64]) -> Result<(), NetError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(NetError::InvalidLayer(format!(
            "non-finite parameter at index {i}"
        ))),
        None => Ok(()),
    }
}
