use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Classifier,
    /// Mean training loss over the whole set before the first update.
    pub initial_loss: f64,
    /// Mean per-sample loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// One SGD step on the batch mean loss; returns the mean loss before the step.
pub fn sgd_step(model: &mut Classifier, xs: &[&[f64]], ys: &[usize], lr: f64, weight_decay: f64) -> Result<f64> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let mut grad = vec![0.0; model.params().len()];
    let scale = 1.0 / xs.len() as f64;
    let total = model.accumulate_grad(xs, ys, scale, &mut grad)?;
    for (p, g) in model.params_mut().iter_mut().zip(&grad) {
        *p -= lr * (g + weight_decay * *p);
    }
    Ok(total * scale)
}

/// Plain minibatch SGD with a seeded shuffle each epoch.
pub fn train_sgd(model: &Classifier, train: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, train, cfg, |_, _| None)
}

/// Minibatch SGD where `replace` may substitute the inputs of a batch (given
/// the current model and the batch indices) before the gradient step.
pub fn train_with<F>(model: &Classifier, train: &LabeledDataset, cfg: &TrainConfig, mut replace: F) -> Result<TrainOutcome>
where
    F: FnMut(&Classifier, &[usize]) -> Option<Vec<Vec<f64>>>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if train.dims() != model.dims() || train.class_count() != model.class_count() {
        return Err(Error::Dimension(format!(
            "model is {} with {} classes, data is {} with {} classes",
            model.dims(),
            model.class_count(),
            train.dims(),
            train.class_count()
        )));
    }
    let mut model = model.clone();
    let labels = train.labels();
    let images = train.images();
    let initial_loss = mean_loss(&model, train)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = rng.permutation(train.len());
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let replaced = replace(&model, batch);
            let loss = match &replaced {
                Some(xs) => {
                    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                    sgd_step(&mut model, &refs, &ys, cfg.lr, cfg.weight_decay)?
                }
                None => {
                    let refs: Vec<&[f64]> = batch.iter().map(|&i| images[i].pixels()).collect();
                    sgd_step(&mut model, &refs, &ys, cfg.lr, cfg.weight_decay)?
                }
            };
            sum += loss * batch.len() as f64;
        }
        let mean = sum / train.len() as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        model,
        initial_loss,
        epoch_losses,
    })
}

pub(crate) fn mean_loss(model: &Classifier, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let losses = crate::par::map_indexed(ds.len(), |i| model.loss(ds.images()[i].pixels(), ds.labels()[i]));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / ds.len() as f64)
}

pub fn predict(model: &Classifier, ds: &LabeledDataset) -> Result<Vec<usize>> {
    crate::par::map_indexed(ds.len(), |i| model.predict(ds.images()[i].pixels()))
        .into_iter()
        .collect()
}

/// Fraction of samples whose arg-max prediction equals the label.
pub fn evaluate(model: &Classifier, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let preds = predict(model, ds)?;
    let hits = preds.iter().zip(ds.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / ds.len() as f64)
}
