//! Heatmap computation from a traced forward pass: sensitivity analysis,
//! deconvolution, LRP, and a random baseline.

mod lrp;
mod render;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::netcore::{self, ForwardTrace, Model, NetError};
use crate::tensor::Tensor;

pub use lrp::{lrp_relevances, LrpParams, LrpRule};
pub use render::{render_heatmap, RenderMode};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("unsupported norm order {0:?} (expected 2 or inf)")]
    UnsupportedNorm(String),
    #[error("invalid LRP parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite relevance below layer {layer} ({name})")]
    NonFinite { layer: usize, name: &'static str },
    #[error("cannot explain input of shape {0:?}; expected [C, H, W] or [N]")]
    UnsupportedInput(Vec<usize>),
    #[error("unknown method {name:?}; valid methods: {}", Method::PRESET_NAMES.join(", "))]
    UnknownMethod { name: String },
    #[error("heatmap extent {found:?} does not match {expected:?}")]
    Extent {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Channel pooling used by sensitivity and deconvolution heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L2,
    Inf,
}

impl Norm {
    pub fn from_order(q: f64) -> Result<Self, AttributionError> {
        if q == 2.0 {
            Ok(Norm::L2)
        } else if q == f64::INFINITY {
            Ok(Norm::Inf)
        } else {
            Err(AttributionError::UnsupportedNorm(q.to_string()))
        }
    }

    fn pool(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::L2 => values.map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Inf => values.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

impl FromStr for Norm {
    type Err = AttributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2" | "q2" => Ok(Norm::L2),
            "inf" | "qinf" => Ok(Norm::Inf),
            other => Err(AttributionError::UnsupportedNorm(other.to_string())),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L2 => "q2",
            Norm::Inf => "qinf",
        })
    }
}

/// A heatmapping method together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Sensitivity(Norm),
    Deconvolution(Norm),
    Lrp(LrpParams),
    Random,
}

impl Method {
    pub const PRESET_NAMES: [&'static str; 8] = [
        "sensitivity-q2",
        "sensitivity-qinf",
        "deconv-q2",
        "deconv-qinf",
        "lrp-eps-0.01",
        "lrp-eps-100",
        "lrp-ab-2",
        "random",
    ];

    pub fn presets() -> Vec<Method> {
        Self::PRESET_NAMES
            .iter()
            .map(|n| n.parse().expect("preset names parse"))
            .collect()
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Method::Random)
    }

    /// Heatmap for `class` on the traced input. `seed` only affects
    /// [`Method::Random`].
    pub fn explain(
        &self,
        model: &Model,
        trace: &ForwardTrace,
        class: usize,
        seed: u64,
    ) -> Result<Heatmap, AttributionError> {
        match *self {
            Method::Sensitivity(q) => {
                let grad = netcore::gradient_input(model, trace, class)?;
                sensitivity_heatmap(&grad, q)
            }
            Method::Deconvolution(q) => {
                let signal = deconv_signal(model, trace, class)?;
                deconv_heatmap(&signal, q)
            }
            Method::Lrp(p) => lrp(model, trace, class, &p),
            Method::Random => {
                let (_, h, w) = spatial(trace.image())?;
                Ok(random_heatmap(h, w, seed))
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Sensitivity(q) => write!(f, "sensitivity-{q}"),
            Method::Deconvolution(q) => write!(f, "deconv-{q}"),
            Method::Lrp(p) => match p.rule() {
                LrpRule::Epsilon { epsilon } => write!(f, "lrp-eps-{epsilon}"),
                LrpRule::AlphaBeta { alpha, .. } => write!(f, "lrp-ab-{alpha}"),
            },
            Method::Random => f.write_str("random"),
        }
    }
}

impl FromStr for Method {
    type Err = AttributionError;

    /// Accepts the preset names plus `lrp-eps-<eps>` and `lrp-ab-<alpha>`
    /// (with `beta = 1 - alpha`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || AttributionError::UnknownMethod { name: s.to_string() };
        if s == "random" {
            return Ok(Method::Random);
        }
        if let Some(q) = s.strip_prefix("sensitivity-") {
            return q.parse().map(Method::Sensitivity).map_err(|_| unknown());
        }
        if let Some(q) = s.strip_prefix("deconv-") {
            return q.parse().map(Method::Deconvolution).map_err(|_| unknown());
        }
        if let Some(e) = s.strip_prefix("lrp-eps-") {
            let eps: f64 = e.parse().map_err(|_| unknown())?;
            return LrpParams::epsilon(eps).map(Method::Lrp);
        }
        if let Some(a) = s.strip_prefix("lrp-ab-") {
            let alpha: f64 = a.parse().map_err(|_| unknown())?;
            return LrpParams::alpha_beta(alpha, 1.0 - alpha).map(Method::Lrp);
        }
        Err(unknown())
    }
}

/// Per-pixel scores over the input's spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    scores: Vec<f64>,
    signal: Option<Tensor>,
    method: String,
}

impl Heatmap {
    pub fn new(
        height: usize,
        width: usize,
        scores: Vec<f64>,
        method: impl Into<String>,
    ) -> Result<Self, AttributionError> {
        if scores.len() != height * width {
            return Err(AttributionError::Extent {
                expected: (height, width),
                found: (scores.len(), 1),
            });
        }
        Ok(Self {
            height,
            width,
            scores,
            signal: None,
            method: method.into(),
        })
    }

    fn with_signal(mut self, signal: Tensor) -> Self {
        self.signal = Some(signal);
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.width + col]
    }

    /// Per-channel signal before channel pooling, when the method has one.
    pub fn signal(&self) -> Option<&Tensor> {
        self.signal.as_ref()
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Heatmap with every score multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Heatmap {
        Heatmap {
            scores: self.scores.iter().map(|s| s * factor).collect(),
            signal: self.signal.as_ref().map(|t| t.map(|v| v * factor)),
            ..self.clone()
        }
    }

    /// Raw export: row-major little-endian `f64`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.scores.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Raw export: one CSV line per row, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.scores.len() * 12);
        for row in self.scores.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn spatial(t: &Tensor) -> Result<(usize, usize, usize), AttributionError> {
    t.chw()
        .ok_or_else(|| AttributionError::UnsupportedInput(t.shape().to_vec()))
}

fn pool_channels(signal: &Tensor, q: Norm) -> Result<Vec<f64>, AttributionError> {
    let (c, h, w) = spatial(signal)?;
    let plane = h * w;
    let d = signal.data();
    Ok((0..plane)
        .map(|p| q.pool((0..c).map(|ch| d[ch * plane + p])))
        .collect())
}

/// `h_p = || (df/dx_{p,c})_c ||_q`.
pub fn sensitivity_heatmap(gradient: &Tensor, q: Norm) -> Result<Heatmap, AttributionError> {
    let (_, h, w) = spatial(gradient)?;
    let scores = pool_channels(gradient, q)?;
    Ok(Heatmap::new(h, w, scores, Method::Sensitivity(q).to_string())?.with_signal(gradient.clone()))
}

/// Deconvolution backward signal: seeded with the class logit, unpooled at
/// the recorded maxima, rectified at every ReLU, and mapped through the
/// transposed filters independently of the forward activations.
pub fn deconv_signal(
    model: &Model,
    trace: &ForwardTrace,
    class: usize,
) -> Result<Tensor, AttributionError> {
    Ok(netcore::deconv_signal(model, trace, class)?)
}

pub fn deconv_heatmap(signal: &Tensor, q: Norm) -> Result<Heatmap, AttributionError> {
    let (_, h, w) = spatial(signal)?;
    let scores = pool_channels(signal, q)?;
    Ok(Heatmap::new(h, w, scores, Method::Deconvolution(q).to_string())?
        .with_signal(signal.clone()))
}

/// LRP heatmap: pixel relevance summed over color channels.
pub fn lrp(
    model: &Model,
    trace: &ForwardTrace,
    class: usize,
    params: &LrpParams,
) -> Result<Heatmap, AttributionError> {
    let mut rel = lrp_relevances(model, trace, class, params)?;
    let input_rel = rel.swap_remove(0);
    let (c, h, w) = spatial(&input_rel)?;
    let plane = h * w;
    let d = input_rel.data();
    let scores = (0..plane)
        .map(|p| (0..c).map(|ch| d[ch * plane + p]).sum())
        .collect();
    Ok(Heatmap::new(h, w, scores, Method::Lrp(*params).to_string())?.with_signal(input_rel))
}

/// I.i.d. uniform scores; identical for identical seeds.
pub fn random_heatmap(height: usize, width: usize, seed: u64) -> Heatmap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..height * width).map(|_| rng.random::<f64>()).collect();
    Heatmap {
        height,
        width,
        scores,
        signal: None,
        method: Method::Random.to_string(),
    }
}
