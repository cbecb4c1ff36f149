use serde::{Deserialize, Serialize};

use super::pgd::{pgd_perturb, Direction};
use super::{NoiseMode, Perturbation, PerturbationBudget};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{evaluate, Classifier};

/// Label shift of the class-targeted variant: `y -> (y + 3) mod c`.
pub const DEFAULT_TARGET_SHIFT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrMaxConfig {
    pub steps: usize,
    /// PGD step; `None` means `epsilon / 10`.
    pub step_size: Option<f64>,
    /// When set, descend toward label `(y + shift) mod c` instead of ascending on `y`.
    pub target_shift: Option<usize>,
}

impl Default for ErrMaxConfig {
    fn default() -> Self {
        ErrMaxConfig {
            steps: 250,
            step_size: None,
            target_shift: None,
        }
    }
}

impl ErrMaxConfig {
    pub fn targeted() -> Self {
        ErrMaxConfig {
            target_shift: Some(DEFAULT_TARGET_SHIFT),
            ..ErrMaxConfig::default()
        }
    }

    pub fn target_label(&self, y: usize, classes: usize) -> usize {
        match self.target_shift {
            Some(s) => (y + s) % classes,
            None => y,
        }
    }
}

/// Sample-wise error-maximizing noise against a surrogate trained on clean data.
pub fn errmax_noise(
    surrogate: &Classifier,
    ds: &LabeledDataset,
    budget: PerturbationBudget,
    cfg: &ErrMaxConfig,
) -> Result<Perturbation> {
    let c = ds.class_count();
    let floor = 1.0 / c as f64 + 0.05;
    let accuracy = evaluate(surrogate, ds)?;
    if accuracy <= floor {
        return Err(Error::UntrainedSurrogate { accuracy, floor });
    }
    let eps = budget.epsilon();
    if cfg.steps == 0 || eps == 0.0 {
        return Ok(Perturbation::zeros(NoiseMode::SampleWise, ds.dims(), ds.len(), Some(eps)));
    }
    let step = cfg.step_size.unwrap_or(eps / 10.0);
    let direction = if cfg.target_shift.is_some() {
        Direction::Descend
    } else {
        Direction::Ascend
    };
    let fields = crate::par::map_indexed(ds.len(), |i| {
        let y = cfg.target_label(ds.labels()[i], c);
        pgd_perturb(surrogate, ds.images()[i].pixels(), y, eps, step, cfg.steps, direction, None)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Perturbation::new(NoiseMode::SampleWise, ds.dims(), fields, Some(eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_toy, ToySpec};
    use crate::model::{train_sgd, Architecture, TrainConfig};
    use crate::poison::apply;
    use crate::rng::SeededRng;

    fn setup() -> (LabeledDataset, Classifier) {
        let spec = ToySpec {
            train: 200,
            val: 10,
            test: 10,
            ..ToySpec::default()
        };
        let (train, _, _) = generate_toy(&spec).unwrap();
        let m = Classifier::new(Architecture::SoftmaxRegression, train.dims(), 10, &mut SeededRng::new(0)).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        (train.clone(), train_sgd(&m, &train, &cfg).unwrap().model)
    }

    #[test]
    fn zero_steps_give_zero_noise() {
        let (ds, m) = setup();
        let cfg = ErrMaxConfig {
            steps: 0,
            ..ErrMaxConfig::default()
        };
        let p = errmax_noise(&m, &ds, PerturbationBudget::default(), &cfg).unwrap();
        assert_eq!(p.linf(), 0.0);
    }

    #[test]
    fn budget_respected_and_loss_increases() {
        let (ds, m) = setup();
        let cfg = ErrMaxConfig {
            steps: 20,
            ..ErrMaxConfig::default()
        };
        let p = errmax_noise(&m, &ds, PerturbationBudget::default(), &cfg).unwrap();
        assert!(p.linf() <= 8.0 / 255.0 + 1e-12);
        let poisoned = apply(&ds, &p).unwrap();
        let mean = |d: &LabeledDataset| -> f64 {
            d.images().iter().zip(d.labels()).map(|(x, &y)| m.loss(x.pixels(), y).unwrap()).sum::<f64>()
                / d.len() as f64
        };
        assert!(mean(&poisoned) >= mean(&ds));
    }

    #[test]
    fn untrained_surrogate_rejected() {
        let (ds, _) = setup();
        let m = Classifier::zeros(Architecture::SoftmaxRegression, ds.dims(), 10).unwrap();
        let err = errmax_noise(&m, &ds, PerturbationBudget::default(), &ErrMaxConfig::default());
        assert!(matches!(err, Err(Error::UntrainedSurrogate { .. })));
    }

    #[test]
    fn targeted_label_permutation() {
        let cfg = ErrMaxConfig::targeted();
        assert_eq!(cfg.target_label(9, 10), 2);
        assert_eq!(cfg.target_label(0, 10), 3);
        assert_eq!(ErrMaxConfig::default().target_label(9, 10), 9);
    }
}
