use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datahub::Dataset;

use super::backward::{accumulate_param_grads, zero_param_grads};
use super::model::{argmax, Model};
use super::NetError;

/// Plain mini-batch SGD with a fixed learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Snapshot every this many SGD steps.
    pub checkpoint_interval: Option<usize>,
    /// Additional explicit snapshot steps.
    pub checkpoint_iterations: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.03,
            batch_size: 32,
            epochs: 1,
            seed: 0,
            checkpoint_interval: None,
            checkpoint_iterations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub iteration: usize,
    pub test_accuracy: f64,
}

/// Fraction of correctly predicted examples.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (image, &label) in data.images().iter().zip(data.labels()) {
        if model.predict(image)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains a private copy of `model` with softmax cross-entropy.
///
/// Snapshots are taken at step 0, at every configured step, and after the
/// last step; their iteration numbers are strictly increasing.
pub fn train_sgd(
    model: &Model,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
) -> Result<Vec<Checkpoint>, NetError> {
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(NetError::InvalidConfig(format!(
            "learning rate must be > 0, got {}",
            config.learning_rate
        )));
    }
    if config.batch_size == 0 {
        return Err(NetError::InvalidConfig("batch size must be >= 1".into()));
    }
    if config.checkpoint_interval == Some(0) {
        return Err(NetError::InvalidConfig("checkpoint interval must be >= 1".into()));
    }
    if train.is_empty() || test.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    for (i, &label) in train.labels().iter().chain(test.labels()).enumerate() {
        if label >= model.num_classes() {
            return Err(NetError::InvalidConfig(format!(
                "label {label} of example {i} exceeds class count {}",
                model.num_classes()
            )));
        }
    }

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let wants_snapshot = |step: usize| {
        step == total_steps
            || config.checkpoint_interval.is_some_and(|k| step % k == 0)
            || config.checkpoint_iterations.contains(&step)
    };

    let mut checkpoints = vec![Checkpoint {
        test_accuracy: accuracy(&model, test)?,
        model: model.clone(),
        iteration: 0,
    }];
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads = zero_param_grads(&model);
            for &i in batch {
                let trace = model.forward(&train.images()[i])?;
                let dlogits = softmax_xent_grad(trace.logits().data(), train.labels()[i]);
                accumulate_param_grads(&model, &trace, &dlogits, &mut grads)?;
            }
            let scale = config.learning_rate / batch.len() as f64;
            model.update_params(|params| {
                for (p, g) in params.iter_mut().zip(&grads) {
                    for (w, d) in p.weights.iter_mut().zip(&g.weights) {
                        *w -= scale * d;
                    }
                    for (b, d) in p.bias.iter_mut().zip(&g.bias) {
                        *b -= scale * d;
                    }
                }
            });
            step += 1;
            if wants_snapshot(step) {
                checkpoints.push(Checkpoint {
                    test_accuracy: accuracy(&model, test)?,
                    model: model.clone(),
                    iteration: step,
                });
            }
        }
    }
    Ok(checkpoints)
}

/// `softmax(z) - onehot(label)`.
fn softmax_xent_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let max = logits[argmax(logits)];
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter()
        .enumerate()
        .map(|(j, e)| e / total - if j == label { 1.0 } else { 0.0 })
        .collect()
}
