//! Greedy search for a transform set that makes a protected training set learnable.
//!
//! Starting from `L = U`, each candidate `A_i` proposes `T_i = L + A_i(U)`. A
//! fresh model is trained on `T_i` and scored on clean validation data.
//! Scores above the target end the search with `T_i` kept; otherwise `T_i`
//! is kept only if it beats the last kept score.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{evaluate, train_sgd, Architecture, Classifier, TrainConfig};
use crate::rng::SeededRng;
use crate::transforms::{expand_dataset, Augmentation};

#[derive(Debug, Clone, PartialEq)]
pub struct BreakerConfig {
    /// Iteration budget; at most this many candidates are tried.
    pub iterations: usize,
    /// Target validation accuracy.
    pub alpha: f64,
    pub space: Vec<Augmentation>,
    pub arch: Architecture,
    pub trainer: TrainConfig,
    /// Seed of every fresh model initialization.
    pub seed: u64,
    /// When false, candidates train on the kept augmented copies only.
    pub include_original: bool,
}

impl BreakerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("target accuracy {} outside (0, 1]", self.alpha)));
        }
        if self.iterations > 0 && self.space.is_empty() {
            return Err(Error::InvalidParameter("transform space is empty".into()));
        }
        self.trainer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub transform: String,
    pub accuracy: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakReport {
    pub v0: f64,
    pub records: Vec<IterationRecord>,
    pub early_stop: bool,
    pub final_size: usize,
    /// Clean-test accuracy of the model behind the last kept score.
    pub final_test_accuracy: Option<f64>,
}

impl BreakReport {
    /// Scores of the initial state and of every kept iteration, in order.
    pub fn kept_accuracies(&self) -> Vec<f64> {
        std::iter::once(self.v0)
            .chain(self.records.iter().filter(|r| r.kept).map(|r| r.accuracy))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `iteration,transform,accuracy,kept`; iteration 0 is the unmodified set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,transform,accuracy,kept\n");
        out.push_str(&format!("0,none,{},true\n", self.v0));
        for r in &self.records {
            let name = r.transform.replace('"', "\"\"");
            out.push_str(&format!("{},\"{}\",{},{}\n", r.iteration, name, r.accuracy, r.kept));
        }
        out
    }
}

/// Result of scoring one training set.
pub struct Scored {
    pub accuracy: f64,
    pub model: Option<Classifier>,
}

/// Trains a model on a candidate set and scores it.
pub trait Evaluator {
    fn score(&mut self, train: &LabeledDataset) -> Result<Scored>;
}

/// Fresh seeded model per candidate, scored on clean validation data.
pub struct TrainingEvaluator<'a> {
    pub val: &'a LabeledDataset,
    pub arch: Architecture,
    pub trainer: TrainConfig,
    pub seed: u64,
}

impl Evaluator for TrainingEvaluator<'_> {
    fn score(&mut self, train: &LabeledDataset) -> Result<Scored> {
        let init = Classifier::new(self.arch, train.dims(), train.class_count(), &mut SeededRng::new(self.seed))?;
        let model = train_sgd(&init, train, &self.trainer)?.model;
        Ok(Scored { accuracy: evaluate(&model, self.val)?, model: Some(model) })
    }
}

pub struct SearchOutcome {
    pub learnable: LabeledDataset,
    pub report: BreakReport,
    pub model: Option<Classifier>,
}

/// The search loop with a pluggable evaluator.
pub fn search_with(u: &LabeledDataset, cfg: &BreakerConfig, evaluator: &mut dyn Evaluator) -> Result<SearchOutcome> {
    cfg.validate()?;
    let initial = evaluator.score(u)?;
    let mut best = initial.accuracy;
    let mut model = initial.model;
    log::info!("search: v0 = {best:.4}");
    let mut kept_copies = LabeledDataset::empty(u.dims(), u.class_count(), u.role());
    let mut learnable = u.clone();
    let mut records = Vec::new();
    let mut early_stop = false;
    for (i, aug) in cfg.space.iter().take(cfg.iterations).enumerate() {
        let copy = expand_dataset(u, std::slice::from_ref(aug), false)?;
        let copies = kept_copies.concat(&copy)?;
        let candidate = if cfg.include_original { u.concat(&copies)? } else { copies.clone() };
        let scored = evaluator.score(&candidate)?;
        let v = scored.accuracy;
        let stop = v > cfg.alpha;
        let kept = stop || v > best;
        log::info!("search: step {} {aug} v = {v:.4} kept = {kept}", i + 1);
        records.push(IterationRecord { iteration: i + 1, transform: aug.to_string(), accuracy: v, kept });
        if kept {
            best = v;
            model = scored.model;
            kept_copies = copies;
            learnable = candidate;
        }
        if stop {
            early_stop = true;
            break;
        }
    }
    let final_size = learnable.len();
    Ok(SearchOutcome {
        learnable,
        report: BreakReport { v0: initial.accuracy, records, early_stop, final_size, final_test_accuracy: None },
        model,
    })
}

/// Runs the search with fresh seeded models scored on `val`; when `test` is
/// given, the model behind the last kept score is evaluated on it.
pub fn generate_learnable(
    u: &LabeledDataset,
    val: &LabeledDataset,
    test: Option<&LabeledDataset>,
    cfg: &BreakerConfig,
) -> Result<(LabeledDataset, BreakReport)> {
    if val.is_empty() {
        return Err(Error::Contract("validation set is empty".into()));
    }
    let mut evaluator = TrainingEvaluator { val, arch: cfg.arch, trainer: cfg.trainer.clone(), seed: cfg.seed };
    let mut out = search_with(u, cfg, &mut evaluator)?;
    if let (Some(test), Some(model)) = (test, &out.model) {
        out.report.final_test_accuracy = Some(evaluate(model, test)?);
    }
    Ok((out.learnable, out.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Role;
    use crate::image::{Dims, Image};
    use crate::transforms::{Channel, TransformSpec};

    struct Stub {
        scores: Vec<f64>,
        sizes: Vec<usize>,
    }

    impl Evaluator for Stub {
        fn score(&mut self, train: &LabeledDataset) -> Result<Scored> {
            self.sizes.push(train.len());
            Ok(Scored { accuracy: self.scores.remove(0), model: None })
        }
    }

    fn data() -> LabeledDataset {
        let d = Dims::new(2, 2, 3);
        let images = (0..4)
            .map(|i| Image::new(d, (0..12).map(|j| ((i * 12 + j) % 7) as f64 / 7.0).collect()).unwrap())
            .collect();
        LabeledDataset::new(d, images, vec![0, 1, 0, 1], 2, Role::Train).unwrap()
    }

    fn cfg(iterations: usize, space: Vec<Augmentation>) -> BreakerConfig {
        BreakerConfig {
            iterations,
            alpha: 0.85,
            space,
            arch: Architecture::SoftmaxRegression,
            trainer: TrainConfig::default(),
            seed: 0,
            include_original: true,
        }
    }

    fn space() -> Vec<Augmentation> {
        [Channel::R, Channel::G, Channel::B, Channel::R]
            .into_iter()
            .map(|src| Augmentation::Fixed(TransformSpec::ChannelMerge { src }))
            .collect()
    }

    #[test]
    fn zero_budget_keeps_input() {
        let u = data();
        let mut stub = Stub { scores: vec![0.3], sizes: vec![] };
        let out = search_with(&u, &cfg(0, vec![]), &mut stub).unwrap();
        assert_eq!(out.learnable, u);
        assert!(out.report.records.is_empty());
        assert_eq!(out.report.v0, 0.3);
    }

    #[test]
    fn hand_traced_sequence() {
        let u = data();
        let sp = space();
        let mut stub = Stub { scores: vec![0.2, 0.5, 0.4, 0.9], sizes: vec![] };
        let out = search_with(&u, &cfg(5, sp.clone()), &mut stub).unwrap();
        let kept: Vec<bool> = out.report.records.iter().map(|r| r.kept).collect();
        assert_eq!(kept, vec![true, false, true]);
        assert!(out.report.early_stop);
        assert_eq!(stub.sizes, vec![4, 8, 12, 12]);
        let a1 = expand_dataset(&u, &sp[0..1], false).unwrap();
        let a3 = expand_dataset(&u, &sp[2..3], false).unwrap();
        assert_eq!(out.learnable, u.concat(&a1).unwrap().concat(&a3).unwrap());
        assert_eq!(out.report.kept_accuracies(), vec![0.2, 0.5, 0.9]);
    }

    #[test]
    fn ties_are_rejected() {
        let u = data();
        let mut stub = Stub { scores: vec![0.4, 0.4, 0.5, 0.5], sizes: vec![] };
        let out = search_with(&u, &cfg(3, space()), &mut stub).unwrap();
        let kept: Vec<bool> = out.report.records.iter().map(|r| r.kept).collect();
        assert_eq!(kept, vec![false, true, false]);
        assert!(!out.report.early_stop);
        assert_eq!(out.report.final_size, 8);
    }

    #[test]
    fn without_original_candidates_skip_u() {
        let u = data();
        let mut c = cfg(2, space());
        c.include_original = false;
        let mut stub = Stub { scores: vec![0.2, 0.3, 0.4], sizes: vec![] };
        let out = search_with(&u, &c, &mut stub).unwrap();
        assert_eq!(stub.sizes, vec![4, 4, 8]);
        assert_eq!(out.learnable.len(), 8);
    }

    #[test]
    fn config_errors() {
        let u = data();
        let mut stub = Stub { scores: vec![0.2], sizes: vec![] };
        assert!(search_with(&u, &cfg(1, vec![]), &mut stub).is_err());
        let mut c = cfg(0, vec![]);
        c.alpha = 0.0;
        assert!(search_with(&u, &c, &mut stub).is_err());
    }

    #[test]
    fn report_formats() {
        let report = BreakReport {
            v0: 0.25,
            records: vec![IterationRecord { iteration: 1, transform: "erode(kernel=3x3,iter=1)".into(), accuracy: 0.5, kept: true }],
            early_stop: false,
            final_size: 8,
            final_test_accuracy: Some(0.5),
        };
        assert_eq!(
            report.to_csv(),
            "iteration,transform,accuracy,kept\n0,none,0.25,true\n1,\"erode(kernel=3x3,iter=1)\",0.5,true\n"
        );
        let back: BreakReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
