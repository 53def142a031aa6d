use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datahub::DatasetStats;
use crate::netcore::{argmax, Model};
use crate::tensor::Tensor;

use super::{perturb_region_in_place, Operator, PerturbError, RegionOrdering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Most relevant first.
    Morf,
    /// Least relevant first.
    Lerf,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Morf => "morf",
            Direction::Lerf => "lerf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    pub operator: Operator,
    /// Number of perturbation steps `L`.
    pub steps: usize,
    /// Independent trajectories averaged per image (stochastic operators only).
    pub repeats: usize,
    pub seed: u64,
    /// Side length of the square regions.
    pub window: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            operator: Operator::Uniform,
            steps: 100,
            repeats: 10,
            seed: 0,
            window: 9,
        }
    }
}

impl PerturbationConfig {
    /// Trajectories actually run per image.
    pub fn effective_repeats(&self) -> usize {
        if self.operator.is_stochastic() {
            self.repeats
        } else {
            1
        }
    }

    pub fn validate(&self, regions: usize) -> Result<(), PerturbError> {
        if self.repeats == 0 {
            return Err(PerturbError::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(PerturbError::InvalidConfig("window must be at least 1".into()));
        }
        if self.steps > regions {
            return Err(PerturbError::InvalidConfig(format!(
                "{} steps requested but only {regions} regions available",
                self.steps
            )));
        }
        Ok(())
    }
}

/// f-values at steps `0..=L` for one image, averaged over repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCurve {
    pub direction: Direction,
    /// Class whose logit is tracked (predicted on the unperturbed image).
    pub class: usize,
    pub values: Vec<f64>,
}

impl PerturbationCurve {
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// `1/(L+1) sum_k (f_0 - f_k)` for this curve alone.
    pub fn aopc(&self) -> f64 {
        let f0 = self.values[0];
        self.values.iter().map(|v| f0 - v).sum::<f64>() / self.values.len() as f64
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trajectory seed from (global seed, image id, repeat index); the same
/// triple always yields the same stream regardless of scheduling.
pub fn derive_seed(seed: u64, image: u64, repeat: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ image) ^ repeat)
}

/// Runs one direction's perturbation process on `image`.
pub fn trajectory(
    model: &Model,
    image: &Tensor,
    image_id: u64,
    ordering: &RegionOrdering,
    direction: Direction,
    config: &PerturbationConfig,
    stats: &DatasetStats,
) -> Result<PerturbationCurve, PerturbError> {
    config.validate(ordering.len())?;
    let logits = model.logits(image)?;
    let class = argmax(logits.data());
    let f0 = logits.data()[class];
    let regions: Vec<_> = match direction {
        Direction::Morf => ordering.regions().take(config.steps).collect(),
        Direction::Lerf => ordering.regions().rev().take(config.steps).collect(),
    };
    let repeats = config.effective_repeats();
    let mut sums = vec![0.0; config.steps + 1];
    for rep in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, image_id, rep as u64));
        let mut x = image.clone();
        sums[0] += f0;
        for (k, region) in regions.iter().enumerate() {
            perturb_region_in_place(&mut x, region, config.operator, &mut rng, stats)?;
            sums[k + 1] += model.logits(&x)?.data()[class];
        }
    }
    let values = if repeats == 1 {
        sums
    } else {
        sums.into_iter().map(|s| s / repeats as f64).collect()
    };
    Ok(PerturbationCurve {
        direction,
        class,
        values,
    })
}

pub fn morf_curve(
    model: &Model,
    image: &Tensor,
    image_id: u64,
    ordering: &RegionOrdering,
    config: &PerturbationConfig,
    stats: &DatasetStats,
) -> Result<PerturbationCurve, PerturbError> {
    trajectory(model, image, image_id, ordering, Direction::Morf, config, stats)
}

pub fn lerf_curve(
    model: &Model,
    image: &Tensor,
    image_id: u64,
    ordering: &RegionOrdering,
    config: &PerturbationConfig,
    stats: &DatasetStats,
) -> Result<PerturbationCurve, PerturbError> {
    trajectory(model, image, image_id, ordering, Direction::Lerf, config, stats)
}

/// Curves for many `(image id, image, ordering)` triples, computed in
/// parallel and returned in input order.
pub fn evaluate_curves(
    model: &Model,
    items: &[(u64, &Tensor, &RegionOrdering)],
    direction: Direction,
    config: &PerturbationConfig,
    stats: &DatasetStats,
) -> Result<Vec<PerturbationCurve>, PerturbError> {
    items
        .par_iter()
        .map(|(id, image, ordering)| trajectory(model, image, *id, ordering, direction, config, stats))
        .collect()
}

fn check_steps(curves: &[PerturbationCurve]) -> Result<usize, PerturbError> {
    let first = curves.first().ok_or(PerturbError::Empty)?;
    let steps = first.steps();
    if let Some(c) = curves.iter().find(|c| c.steps() != steps) {
        return Err(PerturbError::Mismatch(format!(
            "curves with {} and {} steps",
            steps,
            c.steps()
        )));
    }
    Ok(steps)
}

/// Area over the MoRF curve, averaged over images.
pub fn aopc(curves: &[PerturbationCurve]) -> Result<f64, PerturbError> {
    check_steps(curves)?;
    Ok(curves.iter().map(PerturbationCurve::aopc).sum::<f64>() / curves.len() as f64)
}

/// AOPC as a function of the step count: entry `k` is the AOPC of the
/// curves truncated after step `k`. The last entry equals [`aopc`].
pub fn aopc_profile(curves: &[PerturbationCurve]) -> Result<Vec<f64>, PerturbError> {
    let steps = check_steps(curves)?;
    let n = curves.len() as f64;
    let mut cumulative = 0.0;
    Ok((0..=steps)
        .map(|k| {
            cumulative += curves.iter().map(|c| c.values[0] - c.values[k]).sum::<f64>() / n;
            cumulative / (k + 1) as f64
        })
        .collect())
}

/// Area between the LeRF and MoRF curves of the same images.
pub fn abpc(lerf: &[PerturbationCurve], morf: &[PerturbationCurve]) -> Result<f64, PerturbError> {
    if lerf.len() != morf.len() {
        return Err(PerturbError::Mismatch(format!(
            "{} LeRF curves vs {} MoRF curves",
            lerf.len(),
            morf.len()
        )));
    }
    let steps = check_steps(lerf)?;
    if check_steps(morf)? != steps {
        return Err(PerturbError::Mismatch("LeRF and MoRF step counts differ".into()));
    }
    let total: f64 = lerf
        .iter()
        .zip(morf)
        .map(|(l, m)| l.values.iter().zip(&m.values).map(|(a, b)| a - b).sum::<f64>())
        .sum();
    Ok(total / ((steps + 1) as f64 * lerf.len() as f64))
}

/// Sample mean and standard error of the mean (`None` below two values).
pub fn mean_and_sem(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}
