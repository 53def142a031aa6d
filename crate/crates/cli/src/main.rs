use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use heatmap_eval_cli::output::mark_failed;
use heatmap_eval_cli::{commands, RunConfig};

/// Explanation heatmaps and their region-perturbation evaluation.
///
/// Settings come from built-in defaults, then `--config FILE`, then flags.
/// The config file holds one `key = value` per line (`#` comments, comma
/// separated lists); keys are the flag names below. Every run writes
/// `manifest.conf` into its output directory, which can be passed back as
/// `--config` to reproduce the run. A `PARTIAL` file marks unfinished output.
#[derive(Parser)]
#[command(name = "hmeval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render and export heatmaps for every (image, method) pair.
    Heatmap(Opts),
    /// MoRF/LeRF curves, AOPC/ABPC report and heatmap complexity per method.
    Evaluate(Opts),
    /// MoRF and LeRF curves plus ABPC for all four perturbation operators.
    PerturbStudy(Opts),
    /// Train with checkpoints and correlate test accuracy with AOPC.
    TrainCorrelation(Opts),
}

#[derive(Args)]
struct Opts {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Model file.
    #[arg(long)]
    model: Option<String>,
    /// Evaluation dataset (IDX image file, CIFAR batch file or image directory).
    #[arg(long)]
    dataset: Option<String>,
    /// idx, cifar-binary or image-directory.
    #[arg(long)]
    format: Option<String>,
    /// Dataset for the mean image and color model (defaults to --dataset).
    #[arg(long)]
    stats_dataset: Option<String>,
    /// Comma separated: sensitivity-q2, sensitivity-qinf, deconv-q2,
    /// deconv-qinf, lrp-eps-<eps>, lrp-ab-<alpha>, random.
    #[arg(long)]
    methods: Option<String>,
    /// Heatmap method for perturb-study and train-correlation.
    #[arg(long)]
    method: Option<String>,
    /// uniform, dirichlet, constant or blur.
    #[arg(long)]
    operator: Option<String>,
    /// Perturbation steps L.
    #[arg(long)]
    steps: Option<String>,
    /// Trajectories averaged per image for stochastic operators.
    #[arg(long)]
    repeats: Option<String>,
    /// Region side length in pixels.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Number of images taken from the start of the dataset.
    #[arg(long)]
    samples: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Also run least-relevant-first curves and report ABPC (true/false).
    #[arg(long)]
    lerf: Option<String>,
    /// signed-diverging or magnitude.
    #[arg(long)]
    render: Option<String>,
    /// Raw heatmap export: f64 (little-endian) or csv.
    #[arg(long)]
    raw_format: Option<String>,
    /// Training dataset for train-correlation.
    #[arg(long)]
    train_dataset: Option<String>,
    /// Architecture, e.g. conv12x5,relu,pool2,conv24x5,relu,pool2,flatten,linear100,relu,linear.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Snapshot every N SGD steps.
    #[arg(long)]
    checkpoint_interval: Option<String>,
    /// Additional comma separated snapshot steps.
    #[arg(long)]
    checkpoints: Option<String>,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        let flags = [
            ("model", &self.model),
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("stats_dataset", &self.stats_dataset),
            ("methods", &self.methods),
            ("method", &self.method),
            ("operator", &self.operator),
            ("steps", &self.steps),
            ("repeats", &self.repeats),
            ("window", &self.window),
            ("seed", &self.seed),
            ("samples", &self.samples),
            ("out", &self.out),
            ("lerf", &self.lerf),
            ("render", &self.render),
            ("raw_format", &self.raw_format),
            ("train_dataset", &self.train_dataset),
            ("arch", &self.arch),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("checkpoint_interval", &self.checkpoint_interval),
            ("checkpoints", &self.checkpoints),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        if cfg.methods.is_empty() {
            anyhow::bail!("`methods` must name at least one method");
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (opts, run): (&Opts, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::Heatmap(o) => (o, commands::cmd_heatmap),
        Command::Evaluate(o) => (o, commands::cmd_evaluate),
        Command::PerturbStudy(o) => (o, commands::cmd_perturb_study),
        Command::TrainCorrelation(o) => (o, commands::cmd_train_correlation),
    };
    let cfg = match opts.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .expect("thread pool");
    match pool.install(|| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            mark_failed(&cfg.out, &e);
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
