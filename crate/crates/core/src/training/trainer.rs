use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, softmax_cross_entropy_grad};
use super::optim::{OptimState, OptimizerSettings};
use crate::data::PatchDataset;
use crate::error::{Error, Result};
use crate::layers::{
    argmax, forward_cached, init_params, model_backward, model_forward, ModelConfig, ModelParams,
};
use crate::metrics::ConfusionMatrix;
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub optimizer: OptimizerSettings,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            optimizer: OptimizerSettings::default(),
            epochs: 100,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: ModelConfig,
    pub settings: TrainSettings,
    pub seed: u64,
    pub params: ModelParams<f32>,
    /// Mean batch loss, one entry per optimizer step.
    pub loss_curve: Vec<f64>,
}

/// Trains from a seeded initialization.
pub fn train(
    dataset: &PatchDataset,
    config: &ModelConfig,
    settings: &TrainSettings,
    seed: u64,
) -> Result<TrainRun> {
    let params = init_params(config, seed)?;
    train_from(params, dataset, config, settings, seed)
}

/// Mini-batch training starting from `params`. Samples are reshuffled every
/// epoch from the seed's shuffle stream; each batch is a forward pass,
/// averaged softmax cross-entropy, backward pass and one optimizer step.
pub fn train_from(
    params: ModelParams<f32>,
    dataset: &PatchDataset,
    config: &ModelConfig,
    settings: &TrainSettings,
    seed: u64,
) -> Result<TrainRun> {
    train_observed(params, dataset, config, settings, seed, |_, _| {})
}

/// [`train_from`] that reports `(epoch, mean batch loss)` after every epoch.
pub fn train_observed(
    mut params: ModelParams<f32>,
    dataset: &PatchDataset,
    config: &ModelConfig,
    settings: &TrainSettings,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainRun> {
    config.validate()?;
    params.audit(config)?;
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if settings.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut opt = OptimState::new(settings.optimizer, &params);
    let mut rng = rng::stream(seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_curve = Vec::new();
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(settings.batch_size).enumerate() {
            let mut grads = ModelParams::<f32>::zeros(config)?;
            let weight = 1.0 / idx.len() as f32;
            let mut probs = Vec::with_capacity(idx.len() * config.num_classes);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx {
                let sample = &dataset.samples[i];
                let label = class_index(sample.label, config)?;
                let diverged = |e| diverged(e, epoch, batch);
                let cache = forward_cached(&sample.patch, &params, config).map_err(diverged)?;
                let dlogits = softmax_cross_entropy_grad(&cache.probs, label, weight)?;
                let g = model_backward(&cache, &params, config, &dlogits).map_err(diverged)?;
                for (acc, gi) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                    acc.add_assign(gi)?;
                }
                probs.extend_from_slice(cache.probs.data());
                labels.push(label);
            }
            let probs = Tensor::new(&[idx.len(), config.num_classes], probs)?;
            let loss = cross_entropy(&probs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch, loss });
            }
            loss_curve.push(loss);
            opt.step(&mut params, &grads)?;
        }
        let recent = &loss_curve[loss_curve.len() - order.len().div_ceil(settings.batch_size)..];
        on_epoch(epoch, recent.iter().sum::<f64>() / recent.len() as f64);
    }
    Ok(TrainRun {
        config: config.clone(),
        settings: settings.clone(),
        seed,
        params,
        loss_curve,
    })
}

/// Non-finite activations or gradients mid-training mean the run diverged.
fn diverged(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFinite { .. } => Error::Divergence {
            epoch,
            batch,
            loss: f64::NAN,
        },
        other => other,
    }
}

fn class_index(label: u16, config: &ModelConfig) -> Result<usize> {
    let l = label as usize;
    if l == 0 || l > config.num_classes {
        return Err(Error::Data(format!(
            "label {label} outside 1..={}",
            config.num_classes
        )));
    }
    Ok(l - 1)
}

/// 1-based predicted class of one patch.
pub fn predict(
    patch: &Tensor<f32>,
    params: &ModelParams<f32>,
    config: &ModelConfig,
) -> Result<usize> {
    model_forward(patch, params, config).map(|p| argmax(&p) + 1)
}

/// Confusion matrix of `params` over every sample of `dataset`.
pub fn evaluate(
    dataset: &PatchDataset,
    params: &ModelParams<f32>,
    config: &ModelConfig,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(config.num_classes);
    for s in &dataset.samples {
        cm.accumulate(s.label as usize, predict(&s.patch, params, config)?)?;
    }
    Ok(cm)
}
