use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use heatmap_eval::attribution::{render_heatmap, Heatmap, Method, RenderMode};
use heatmap_eval::complexity::{ComplexityRecord, ComplexityReport};
use heatmap_eval::datahub::{load_dataset, Dataset, DatasetStats};
use heatmap_eval::netcore::{self, load_model, save_model, Model, TrainConfig};
use heatmap_eval::perturbeval::{
    abpc, aopc_profile, build_region_grid, derive_seed, evaluate_curves, mean_and_sem,
    order_regions, Direction, Operator, PerturbationConfig, PerturbationCurve, RegionOrdering,
};
use heatmap_eval::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::arch::build_model;
use crate::config::{RawFormat, RunConfig};
use crate::output::{fmt_f64, RunDir};
use crate::stats::spearman;

/// Repeat index reserved for the random baseline's heatmap seed, outside the
/// range used by perturbation trajectories.
const RANDOM_HEATMAP_STREAM: u64 = u64::MAX;

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .with_context(|| format!("`{key}` is required for this command"))?;
    if !p.exists() {
        bail!("`{key}` path {} does not exist", p.display());
    }
    Ok(p)
}

pub fn load_eval_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = required(&cfg.dataset, "dataset")?;
    load_dataset(path, cfg.format).with_context(|| format!("loading {}", path.display()))
}

pub fn load_stats(cfg: &RunConfig, dataset: &Dataset) -> Result<DatasetStats> {
    let stats = match &cfg.stats_dataset {
        None => DatasetStats::from_dataset(dataset)?,
        Some(p) => {
            let ds = load_dataset(p, cfg.format)
                .with_context(|| format!("loading {}", p.display()))?;
            DatasetStats::from_dataset(&ds)?
        }
    };
    Ok(stats)
}

fn load_eval_model(cfg: &RunConfig) -> Result<Model> {
    let path = required(&cfg.model, "model")?;
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

/// Heatmap seed for the random method on one image.
pub fn random_heatmap_seed(seed: u64, image_id: u64) -> u64 {
    derive_seed(seed, image_id, RANDOM_HEATMAP_STREAM)
}

/// One heatmap per method for every image, explaining the predicted class.
/// Outer index is the image.
pub fn compute_heatmaps(
    model: &Model,
    images: &[Tensor],
    methods: &[Method],
    seed: u64,
) -> Result<Vec<(usize, Vec<Heatmap>)>> {
    images
        .par_iter()
        .enumerate()
        .map(|(id, image)| {
            let trace = model.forward(image)?;
            let class = netcore::argmax(trace.logits().data());
            let maps = methods
                .iter()
                .map(|m| {
                    m.explain(model, &trace, class, random_heatmap_seed(seed, id as u64))
                        .with_context(|| format!("method {m} on image {id}"))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((class, maps))
        })
        .collect()
}

pub fn orderings_for(
    maps: &[(usize, Vec<Heatmap>)],
    method_index: usize,
    window: usize,
) -> Result<Vec<RegionOrdering>> {
    maps.iter()
        .map(|(_, hs)| {
            let h = &hs[method_index];
            let grid = build_region_grid(h.height(), h.width(), window)?;
            Ok(order_regions(h, &grid)?)
        })
        .collect()
}

pub fn curves_for(
    model: &Model,
    images: &[Tensor],
    orderings: &[RegionOrdering],
    direction: Direction,
    config: &PerturbationConfig,
    stats: &DatasetStats,
) -> Result<Vec<PerturbationCurve>> {
    let items: Vec<_> = images
        .iter()
        .zip(orderings)
        .enumerate()
        .map(|(i, (img, o))| (i as u64, img, o))
        .collect();
    Ok(evaluate_curves(model, &items, direction, config, stats)?)
}

/// Per-method evaluation results.
#[derive(Debug, Clone)]
pub struct MethodEval {
    pub method: Method,
    pub morf: Vec<PerturbationCurve>,
    pub lerf: Option<Vec<PerturbationCurve>>,
}

impl MethodEval {
    pub fn per_image_aopc(&self) -> Vec<f64> {
        self.morf.iter().map(PerturbationCurve::aopc).collect()
    }

    pub fn aopc(&self) -> f64 {
        mean_and_sem(&self.per_image_aopc()).0
    }

    pub fn abpc(&self) -> Option<f64> {
        self.lerf.as_ref().map(|l| abpc(l, &self.morf).expect("matched curve sets"))
    }
}

fn write_curves(
    out: &RunDir,
    name: &str,
    rows: &[(String, Operator, &[PerturbationCurve])],
) -> Result<()> {
    let mut csv = out.csv(name, &["image_id", "method", "operator", "k", "f_value"])?;
    for (method, op, curves) in rows {
        for (id, c) in curves.iter().enumerate() {
            for (k, v) in c.values.iter().enumerate() {
                csv.row(&[&id.to_string(), method, &op.to_string(), &k.to_string(), &fmt_f64(*v)])?;
            }
        }
    }
    csv.finish()
}

fn sample(dataset: &Dataset, n: usize) -> Dataset {
    dataset.take(n.min(dataset.len()))
}

/// Writes one rendered and one raw heatmap per (image, method).
pub fn cmd_heatmap(cfg: &RunConfig) -> Result<()> {
    let model = load_eval_model(cfg)?;
    let data = sample(&load_eval_dataset(cfg)?, cfg.samples);
    let out = RunDir::start(&cfg.out, "heatmap", cfg, Some(&model))?;
    let maps = compute_heatmaps(&model, data.images(), &cfg.methods, cfg.seed)?;
    let dir = out.subdir("heatmaps")?;
    let mut index = out.csv(
        "heatmaps/index.csv",
        &["image_id", "label", "predicted", "method", "image", "raw"],
    )?;
    for (id, (class, hs)) in maps.iter().enumerate() {
        for (method, h) in cfg.methods.iter().zip(hs) {
            let stem = format!("{id:05}_{method}");
            let png = format!("{stem}.png");
            render_heatmap(h, cfg.render)
                .save(dir.join(&png))
                .with_context(|| format!("writing {png}"))?;
            let raw = match cfg.raw_format {
                RawFormat::F64 => {
                    let name = format!("{stem}.f64");
                    fs::write(dir.join(&name), h.to_le_bytes())?;
                    name
                }
                RawFormat::Csv => {
                    let name = format!("{stem}.csv");
                    fs::write(dir.join(&name), h.to_csv())?;
                    name
                }
            };
            index.row(&[
                &id.to_string(),
                &data.labels()[id].to_string(),
                &class.to_string(),
                &method.to_string(),
                &png,
                &raw,
            ])?;
        }
    }
    index.finish()?;
    out.finish()
}

/// Runs MoRF (and optionally LeRF) for every method.
pub fn run_evaluation(
    model: &Model,
    images: &[Tensor],
    methods: &[Method],
    cfg: &RunConfig,
    stats: &DatasetStats,
) -> Result<(Vec<MethodEval>, Vec<(usize, Vec<Heatmap>)>)> {
    let maps = compute_heatmaps(model, images, methods, cfg.seed)?;
    let pcfg = cfg.perturbation();
    let mut evals = Vec::with_capacity(methods.len());
    for (mi, method) in methods.iter().enumerate() {
        let orderings = orderings_for(&maps, mi, cfg.window)?;
        let morf = curves_for(model, images, &orderings, Direction::Morf, &pcfg, stats)
            .with_context(|| format!("MoRF curves for {method}"))?;
        let lerf = if cfg.lerf {
            Some(
                curves_for(model, images, &orderings, Direction::Lerf, &pcfg, stats)
                    .with_context(|| format!("LeRF curves for {method}"))?,
            )
        } else {
            None
        };
        evals.push(MethodEval {
            method: *method,
            morf,
            lerf,
        });
    }
    Ok((evals, maps))
}

pub fn complexity_report(
    methods: &[Method],
    maps: &[(usize, Vec<Heatmap>)],
) -> Result<ComplexityReport> {
    let records: Vec<Vec<ComplexityRecord>> = maps
        .par_iter()
        .enumerate()
        .map(|(id, (_, hs))| {
            methods
                .iter()
                .zip(hs)
                .map(|(m, h)| {
                    let img = render_heatmap(h, RenderMode::Magnitude);
                    Ok(ComplexityRecord::measure(id as u64, m.to_string(), &img)?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut report = ComplexityReport::default();
    for r in records.into_iter().flatten() {
        report.push(r);
    }
    Ok(report)
}

/// MoRF curves, AOPC (absolute and relative to random), ABPC when LeRF is
/// enabled, and heatmap complexity.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let model = load_eval_model(cfg)?;
    let full = load_eval_dataset(cfg)?;
    let stats = load_stats(cfg, &full)?;
    let data = sample(&full, cfg.samples);
    let out = RunDir::start(&cfg.out, "evaluate", cfg, Some(&model))?;
    // the random baseline is always evaluated so relative AOPC can be reported
    let mut methods = cfg.methods.clone();
    if !methods.iter().any(Method::is_random) {
        methods.push(Method::Random);
    }
    let (evals, maps) = run_evaluation(&model, data.images(), &methods, cfg, &stats)?;

    fn family(e: &MethodEval, op: Operator, lerf: bool) -> (String, Operator, &[PerturbationCurve]) {
        let curves: &[PerturbationCurve] = if lerf {
            e.lerf.as_deref().unwrap_or(&[])
        } else {
            &e.morf
        };
        (e.method.to_string(), op, curves)
    }
    write_curves(&out, "curves_morf.csv", &evals.iter().map(|e| family(e, cfg.operator, false)).collect::<Vec<_>>())?;
    if cfg.lerf {
        write_curves(&out, "curves_lerf.csv", &evals.iter().map(|e| family(e, cfg.operator, true)).collect::<Vec<_>>())?;
    }

    let mut report = out.csv("report.csv", &["method", "operator", "AOPC", "ABPC", "n_images", "seed"])?;
    let mut aopc_stats = out.csv(
        "aopc_stats.csv",
        &["method", "operator", "AOPC", "AOPC_sem", "AOPC_minus_random", "n_images"],
    )?;
    let random = evals.iter().find(|e| e.method.is_random()).expect("random baseline");
    let random_profile = aopc_profile(&random.morf)?;
    let mut profile = out.csv("aopc_profile.csv", &["method", "k", "AOPC", "AOPC_minus_random"])?;
    for e in &evals {
        let (mean, sem) = mean_and_sem(&e.per_image_aopc());
        let n = e.morf.len().to_string();
        let m = e.method.to_string();
        let op = cfg.operator.to_string();
        report.row(&[
            &m,
            &op,
            &fmt_f64(mean),
            &e.abpc().map(fmt_f64).unwrap_or_else(|| "NA".into()),
            &n,
            &cfg.seed.to_string(),
        ])?;
        aopc_stats.row(&[
            &m,
            &op,
            &fmt_f64(mean),
            &sem.map(fmt_f64).unwrap_or_else(|| "NA".into()),
            &fmt_f64(mean - random.aopc()),
            &n,
        ])?;
        for (k, (a, r)) in aopc_profile(&e.morf)?.iter().zip(&random_profile).enumerate() {
            profile.row(&[&m, &k.to_string(), &fmt_f64(*a), &fmt_f64(a - r)])?;
        }
    }
    report.finish()?;
    aopc_stats.finish()?;
    profile.finish()?;

    let methods: Vec<Method> = evals.iter().map(|e| e.method).collect();
    let complexity = complexity_report(&methods, &maps)?;
    let mut rows = out.csv(
        "complexity.csv",
        &["image_id", "method", "entropy_bits", "png_bytes", "jpeg_bytes"],
    )?;
    for r in &complexity.records {
        rows.row(&[
            &r.image_id.to_string(),
            &r.method,
            &fmt_f64(r.entropy_bits),
            &r.png_bytes.to_string(),
            &r.jpeg_bytes.to_string(),
        ])?;
    }
    rows.finish()?;
    let mut summary = out.csv(
        "complexity_summary.csv",
        &[
            "method",
            "n_images",
            "entropy_mean",
            "entropy_median",
            "png_mean",
            "png_median",
            "jpeg_mean",
            "jpeg_median",
        ],
    )?;
    for s in complexity.summary() {
        summary.row(&[
            &s.method,
            &s.n.to_string(),
            &fmt_f64(s.entropy_bits.mean),
            &fmt_f64(s.entropy_bits.median),
            &fmt_f64(s.png_bytes.mean),
            &fmt_f64(s.png_bytes.median),
            &fmt_f64(s.jpeg_bytes.mean),
            &fmt_f64(s.jpeg_bytes.median),
        ])?;
    }
    summary.finish()?;
    out.finish()
}

/// Per-operator MoRF and LeRF curves for one method, plus ABPC per operator.
pub fn run_perturb_study(
    model: &Model,
    images: &[Tensor],
    cfg: &RunConfig,
    stats: &DatasetStats,
) -> Result<Vec<(Operator, MethodEval)>> {
    let maps = compute_heatmaps(model, images, &[cfg.method], cfg.seed)?;
    let orderings = orderings_for(&maps, 0, cfg.window)?;
    Operator::ALL
        .into_iter()
        .map(|op| {
            let pcfg = PerturbationConfig {
                operator: op,
                ..cfg.perturbation()
            };
            let morf = curves_for(model, images, &orderings, Direction::Morf, &pcfg, stats)
                .with_context(|| format!("{op} MoRF curves"))?;
            let lerf = curves_for(model, images, &orderings, Direction::Lerf, &pcfg, stats)
                .with_context(|| format!("{op} LeRF curves"))?;
            Ok((
                op,
                MethodEval {
                    method: cfg.method,
                    morf,
                    lerf: Some(lerf),
                },
            ))
        })
        .collect()
}

pub fn mean_curve(curves: &[PerturbationCurve]) -> Vec<f64> {
    let n = curves.len() as f64;
    let steps = curves.first().map_or(0, |c| c.values.len());
    (0..steps)
        .map(|k| curves.iter().map(|c| c.values[k]).sum::<f64>() / n)
        .collect()
}

pub fn cmd_perturb_study(cfg: &RunConfig) -> Result<()> {
    let model = load_eval_model(cfg)?;
    let full = load_eval_dataset(cfg)?;
    let stats = load_stats(cfg, &full)?;
    let data = sample(&full, cfg.samples);
    let out = RunDir::start(&cfg.out, "perturb-study", cfg, Some(&model))?;
    let results = run_perturb_study(&model, data.images(), cfg, &stats)?;
    let method = cfg.method.to_string();
    for (dir, name) in [(false, "curves_morf.csv"), (true, "curves_lerf.csv")] {
        let rows: Vec<_> = results
            .iter()
            .map(|(op, e)| {
                let c: &[PerturbationCurve] = if dir { e.lerf.as_deref().unwrap() } else { &e.morf };
                (method.clone(), *op, c)
            })
            .collect();
        write_curves(&out, name, &rows)?;
    }
    let mut mean = out.csv("mean_curves.csv", &["operator", "direction", "k", "f_mean"])?;
    let mut report = out.csv("report.csv", &["method", "operator", "AOPC", "ABPC", "n_images", "seed"])?;
    let mut ops = out.csv("operators.csv", &["operator", "stochastic", "repeats"])?;
    for (op, e) in &results {
        for (d, curves) in [(Direction::Morf, &e.morf), (Direction::Lerf, e.lerf.as_ref().unwrap())] {
            for (k, v) in mean_curve(curves).iter().enumerate() {
                mean.row(&[&op.to_string(), &d.to_string(), &k.to_string(), &fmt_f64(*v)])?;
            }
        }
        report.row(&[
            &method,
            &op.to_string(),
            &fmt_f64(e.aopc()),
            &fmt_f64(e.abpc().unwrap()),
            &e.morf.len().to_string(),
            &cfg.seed.to_string(),
        ])?;
        let pcfg = PerturbationConfig {
            operator: *op,
            ..cfg.perturbation()
        };
        ops.row(&[
            &op.to_string(),
            &op.is_stochastic().to_string(),
            &pcfg.effective_repeats().to_string(),
        ])?;
    }
    mean.finish()?;
    report.finish()?;
    ops.finish()?;
    out.finish()
}

/// Trains from scratch and pairs each checkpoint's test accuracy with its
/// AOPC on the evaluation sample.
pub fn cmd_train_correlation(cfg: &RunConfig) -> Result<()> {
    let train_path = required(&cfg.train_dataset, "train_dataset")?;
    let train = load_dataset(train_path, cfg.format)
        .with_context(|| format!("loading {}", train_path.display()))?;
    let test = load_eval_dataset(cfg)?;
    let stats = load_stats(cfg, &test)?;
    let shape = test.image_shape().context("empty test set")?.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = build_model(&cfg.arch, &shape, test.num_classes().max(train.num_classes()), &mut rng)?;
    let out = RunDir::start(&cfg.out, "train-correlation", cfg, None)?;
    let tcfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        checkpoint_interval: cfg.checkpoint_interval,
        checkpoint_iterations: cfg.checkpoints.clone(),
    };
    let checkpoints = netcore::train_sgd(&init, &train, &test, &tcfg)?;
    let data = sample(&test, cfg.samples);
    let dir = out.subdir("checkpoints")?;
    let mut table = out.csv("checkpoints.csv", &["iteration", "test_accuracy", "AOPC", "model"])?;
    let (mut accs, mut aopcs) = (Vec::new(), Vec::new());
    for cp in &checkpoints {
        let name = format!("iter_{:07}.hbm", cp.iteration);
        save_model(&cp.model, dir.join(&name))?;
        let (evals, _) = run_evaluation(&cp.model, data.images(), &[cfg.method], cfg, &stats)
            .with_context(|| format!("checkpoint at iteration {}", cp.iteration))?;
        let a = evals[0].aopc();
        table.row(&[
            &cp.iteration.to_string(),
            &fmt_f64(cp.test_accuracy),
            &fmt_f64(a),
            &format!("checkpoints/{name}"),
        ])?;
        accs.push(cp.test_accuracy);
        aopcs.push(a);
    }
    table.finish()?;
    let mut corr = out.csv("correlation.csv", &["statistic", "value", "n_checkpoints"])?;
    corr.row(&[
        "spearman_accuracy_aopc",
        &spearman(&accs, &aopcs).map(fmt_f64).unwrap_or_else(|| "undefined".into()),
        &checkpoints.len().to_string(),
    ])?;
    corr.finish()?;
    out.finish()
}
