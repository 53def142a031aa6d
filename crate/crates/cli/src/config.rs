//! Run configuration: built-in defaults, then a flat `key = value` file,
//! then command-line overrides.
//!
//! File syntax: one `key = value` per line, `#` starts a comment line, lists
//! are comma separated. Keys are the long flag names with `_` or `-`.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use heatmap_eval::attribution::{Method, RenderMode};
use heatmap_eval::datahub::DatasetFormat;
use heatmap_eval::perturbeval::{Operator, PerturbationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawFormat {
    F64,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub format: DatasetFormat,
    /// Dataset used for mean image and color model; defaults to `dataset`.
    pub stats_dataset: Option<PathBuf>,
    pub methods: Vec<Method>,
    /// Single method for `perturb-study` and `train-correlation`.
    pub method: Method,
    pub operator: Operator,
    pub steps: usize,
    pub repeats: usize,
    pub window: usize,
    pub seed: u64,
    pub samples: usize,
    pub out: PathBuf,
    pub lerf: bool,
    pub render: RenderMode,
    pub raw_format: RawFormat,
    pub train_dataset: Option<PathBuf>,
    pub arch: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub checkpoint_interval: Option<usize>,
    pub checkpoints: Vec<usize>,
}

pub const DEFAULT_ARCH: &str = "conv12x5,relu,pool2,conv24x5,relu,pool2,flatten,linear100,relu,linear";

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            dataset: None,
            format: DatasetFormat::Idx,
            stats_dataset: None,
            methods: Method::presets(),
            method: Method::Lrp(heatmap_eval::attribution::LrpParams::epsilon_small()),
            operator: Operator::Uniform,
            steps: 100,
            repeats: 10,
            window: 9,
            seed: 0,
            samples: 500,
            out: PathBuf::from("out"),
            lerf: false,
            render: RenderMode::SignedDiverging,
            raw_format: RawFormat::F64,
            train_dataset: None,
            arch: DEFAULT_ARCH.to_string(),
            learning_rate: 0.03,
            batch_size: 32,
            epochs: 1,
            checkpoint_interval: None,
            checkpoints: Vec::new(),
        }
    }
}

fn parse_list<T>(value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect()
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => bail!("expected true or false, got {other:?}"),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Applies one setting; `key` accepts `-` or `_` separators.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let key = key.trim().replace('-', "_");
        let ctx = || format!("invalid value {value:?} for `{key}`");
        match key.as_str() {
            "model" => self.model = optional_path(value),
            "dataset" => self.dataset = optional_path(value),
            "format" => self.format = value.parse().map_err(anyhow::Error::msg).with_context(ctx)?,
            "stats_dataset" => self.stats_dataset = optional_path(value),
            "methods" => {
                self.methods = parse_list(value, |s| Ok(s.parse::<Method>()?))?;
            }
            "method" => self.method = value.parse()?,
            "operator" => self.operator = value.parse().with_context(ctx)?,
            "steps" => self.steps = value.parse().with_context(ctx)?,
            "repeats" => self.repeats = value.parse().with_context(ctx)?,
            "window" => self.window = value.parse().with_context(ctx)?,
            "seed" => self.seed = value.parse().with_context(ctx)?,
            "samples" => self.samples = value.parse().with_context(ctx)?,
            "out" => self.out = PathBuf::from(value),
            "lerf" => self.lerf = parse_bool(value).with_context(ctx)?,
            "render" => self.render = value.parse().with_context(ctx)?,
            "raw_format" => {
                self.raw_format = match value {
                    "f64" => RawFormat::F64,
                    "csv" => RawFormat::Csv,
                    _ => bail!("{}: expected f64 or csv", ctx()),
                }
            }
            "train_dataset" => self.train_dataset = optional_path(value),
            "arch" => self.arch = value.to_string(),
            "learning_rate" | "lr" => self.learning_rate = value.parse().with_context(ctx)?,
            "batch_size" => self.batch_size = value.parse().with_context(ctx)?,
            "epochs" => self.epochs = value.parse().with_context(ctx)?,
            "checkpoint_interval" => {
                self.checkpoint_interval = if value.is_empty() {
                    None
                } else {
                    Some(value.parse().with_context(ctx)?)
                }
            }
            "checkpoints" => {
                self.checkpoints = parse_list(value, |s| s.parse().with_context(ctx))?;
            }
            // recorded in manifests for information only
            "workers" | "version" | "model_fingerprint" => {}
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file's text.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", lineno + 1))?;
            self.set(key, value)
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn perturbation(&self) -> PerturbationConfig {
        PerturbationConfig {
            operator: self.operator,
            steps: self.steps,
            repeats: self.repeats,
            seed: self.seed,
            window: self.window,
        }
    }

    /// The configuration in the same flat format `apply_text` reads.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model", path(&self.model));
        kv("dataset", path(&self.dataset));
        kv("format", self.format.to_string());
        kv("stats_dataset", path(&self.stats_dataset));
        kv("methods", join(self.methods.iter().map(ToString::to_string).collect()));
        kv("method", self.method.to_string());
        kv("operator", self.operator.to_string());
        kv("steps", self.steps.to_string());
        kv("repeats", self.repeats.to_string());
        kv("window", self.window.to_string());
        kv("seed", self.seed.to_string());
        kv("samples", self.samples.to_string());
        kv("out", self.out.display().to_string());
        kv("lerf", self.lerf.to_string());
        kv("render", self.render.to_string());
        kv(
            "raw_format",
            match self.raw_format {
                RawFormat::F64 => "f64",
                RawFormat::Csv => "csv",
            }
            .to_string(),
        );
        kv("train_dataset", path(&self.train_dataset));
        kv("arch", self.arch.clone());
        kv("learning_rate", self.learning_rate.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv(
            "checkpoint_interval",
            self.checkpoint_interval.map(|v| v.to_string()).unwrap_or_default(),
        );
        kv("checkpoints", join(self.checkpoints.iter().map(ToString::to_string).collect()));
        s
    }
}
