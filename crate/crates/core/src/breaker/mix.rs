use crate::dataset::{subset_mix, LabeledDataset};
use crate::error::Result;
use crate::model::{evaluate, train_sgd, Architecture, Classifier, TrainConfig};
use crate::rng::SeededRng;

/// Replaces a seeded `fraction` of `clean` with its poisoned counterpart,
/// trains a fresh model seeded by the trainer seed and scores it on `test`.
pub fn mix_experiment(
    clean: &LabeledDataset,
    poisoned: &LabeledDataset,
    fraction: f64,
    arch: Architecture,
    trainer: &TrainConfig,
    test: &LabeledDataset,
) -> Result<f64> {
    let mixed = subset_mix(clean, poisoned, fraction, trainer.seed)?;
    let init = Classifier::new(arch, clean.dims(), clean.class_count(), &mut SeededRng::new(trainer.seed))?;
    let model = train_sgd(&init, &mixed, trainer)?.model;
    evaluate(&model, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_toy, ToySpec};
    use crate::image::Image;

    #[test]
    fn endpoints_match_plain_runs() {
        let spec = ToySpec { train: 100, val: 10, test: 50, ..ToySpec::default() };
        let (train, _, test) = generate_toy(&spec).unwrap();
        let dark: Vec<Image> = train.images().iter().map(|im| im.map(|v| v * 0.5)).collect();
        let poisoned = train.with_images(dark).unwrap();
        let cfg = TrainConfig { epochs: 2, seed: 9, ..TrainConfig::default() };
        let arch = Architecture::SoftmaxRegression;
        let plain = |ds: &LabeledDataset| {
            let init = Classifier::new(arch, ds.dims(), 10, &mut SeededRng::new(9)).unwrap();
            evaluate(&train_sgd(&init, ds, &cfg).unwrap().model, &test).unwrap()
        };
        assert_eq!(mix_experiment(&train, &poisoned, 0.0, arch, &cfg, &test).unwrap(), plain(&train));
        assert_eq!(mix_experiment(&train, &poisoned, 1.0, arch, &cfg, &test).unwrap(), plain(&poisoned));
    }
}
