//! Minibatch training on PGD loss-maximizing inputs.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{train_with, Classifier, TrainConfig, TrainOutcome};
use crate::par;
use crate::poison::{pgd_perturb, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainConfig {
    pub epsilon: f64,
    pub step_size: f64,
    pub steps: usize,
}

impl Default for AdvTrainConfig {
    fn default() -> Self {
        AdvTrainConfig { epsilon: 4.0 / 255.0, step_size: 0.8 / 255.0, steps: 10 }
    }
}

/// Every minibatch is replaced by per-sample PGD ascent examples under the
/// current model before the SGD step.
pub fn adversarial_train(
    model: &Classifier,
    ds: &LabeledDataset,
    adv: &AdvTrainConfig,
    trainer: &TrainConfig,
) -> Result<TrainOutcome> {
    if !(0.0..=1.0).contains(&adv.epsilon) || !(adv.step_size >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "adversarial budget {} / step {} out of range",
            adv.epsilon, adv.step_size
        )));
    }
    let images = ds.images();
    let labels = ds.labels();
    let mut failure = None;
    let out = train_with(model, ds, trainer, |m, batch| {
        if failure.is_some() {
            return None;
        }
        let perturbed = par::map(batch, |&i| {
            let x = images[i].pixels();
            let delta = pgd_perturb(m, x, labels[i], adv.epsilon, adv.step_size, adv.steps, Direction::Ascend, None)?;
            let worst = delta.iter().fold(0.0f64, |a, d| a.max(d.abs()));
            assert!(worst <= adv.epsilon + 1e-12, "inner perturbation {worst} exceeds budget {}", adv.epsilon);
            Ok::<_, Error>(x.iter().zip(&delta).map(|(a, d)| a + d).collect::<Vec<f64>>())
        });
        match perturbed.into_iter().collect::<Result<Vec<_>>>() {
            Ok(xs) => Some(xs),
            Err(e) => {
                failure = Some(e);
                None
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
