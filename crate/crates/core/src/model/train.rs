use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::GaitClass;
use crate::error::{CoreError, Result};

use super::adam::{adam_step, AdamState};
use super::network::{argmax, cross_entropy, forward, loss_and_gradients, DropoutMode};
use super::params::{ModelConfig, ModelParams};
use super::ModelRng;

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 16,
            epochs: 100,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(CoreError::invalid(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(CoreError::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CoreError::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Metrics recorded after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochMetrics>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

// Independent generator streams derived from the one seed.
const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

fn stream(seed: u64, id: u64) -> ModelRng {
    let mut rng = ModelRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// LeCun-normal weights (variance `1 / fan_in`) and zero biases.
pub fn init_params(config: &ModelConfig, rng: &mut ModelRng) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    for layer in params.conv.iter_mut() {
        let std = (1.0 / (layer.in_maps * layer.kernel) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
    }
    for dense in [&mut params.fc1, &mut params.out] {
        let std = (1.0 / dense.inputs as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive std");
        dense.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
    }
    Ok(params)
}

/// Per-class random split. Every class keeps at least one sample on each side.
pub fn stratified_split(labels: &[GaitClass], validation_fraction: f64, rng: &mut ModelRng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class in GaitClass::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(rng);
        let n_val = if idx.len() < 2 {
            0
        } else {
            ((idx.len() as f64 * validation_fraction).round() as usize).clamp(1, idx.len() - 1)
        };
        validation.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    (train, validation)
}

fn evaluate<T: AsRef<[f64]>>(params: &ModelParams, data: &[(T, GaitClass)], idx: &[usize]) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in idx {
        let (x, label) = &data[i];
        let cache = forward(params, x.as_ref(), DropoutMode::Inference)?;
        loss += cross_entropy(&cache.logits, &cache.probabilities, label.index())?.0;
        if argmax(&cache.probabilities) == label.index() {
            correct += 1;
        }
    }
    Ok((loss / idx.len() as f64, correct as f64 / idx.len() as f64))
}

/// Trains a fresh model. See [`train_with_progress`].
pub fn train<T: AsRef<[f64]>>(
    dataset: &[(T, GaitClass)],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(dataset, model, cfg, |_| {})
}

/// Trains a fresh model with Adam on mean cross-entropy, holding out a
/// stratified validation split. Fully determined by `cfg.seed`.
pub fn train_with_progress<T: AsRef<[f64]>>(
    dataset: &[(T, GaitClass)],
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    for class in GaitClass::ALL {
        let n = dataset.iter().filter(|(_, c)| *c == class).count();
        if n < 2 {
            return Err(CoreError::invalid(format!(
                "class {class} has {n} samples, need at least 2"
            )));
        }
    }
    if let Some((x, _)) = dataset.iter().find(|(x, _)| x.as_ref().len() != model.input_length) {
        return Err(CoreError::invalid(format!(
            "sample of length {} does not match model input {}",
            x.as_ref().len(),
            model.input_length
        )));
    }

    let labels: Vec<GaitClass> = dataset.iter().map(|(_, c)| *c).collect();
    let (train_indices, validation_indices) =
        stratified_split(&labels, cfg.validation_fraction, &mut stream(cfg.seed, STREAM_SPLIT));
    let mut params = init_params(model, &mut stream(cfg.seed, STREAM_INIT))?;
    let mut shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream(cfg.seed, STREAM_DROPOUT);
    let mut adam = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = train_indices.clone();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], GaitClass)> =
                chunk.iter().map(|&i| (dataset[i].0.as_ref(), dataset[i].1)).collect();
            let (loss, grads) = loss_and_gradients(&params, &batch, DropoutMode::Sample(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(CoreError::InvalidModel(format!("loss diverged in epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut params, &grads, &mut adam, cfg);
        }
        let (_, train_accuracy) = evaluate(&params, dataset, &train_indices)?;
        let (validation_loss, validation_accuracy) = evaluate(&params, dataset, &validation_indices)?;
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / order.len() as f64,
            train_accuracy,
            validation_loss,
            validation_accuracy,
        };
        on_epoch(&metrics);
        history.push(metrics);
    }

    Ok(TrainOutcome {
        params,
        history,
        train_indices,
        validation_indices,
    })
}
