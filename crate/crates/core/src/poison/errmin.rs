use serde::{Deserialize, Serialize};

use super::pgd::{pgd_perturb, project, signum, Direction};
use super::{NoiseMode, Perturbation, PerturbationBudget};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{sgd_step, Architecture, Classifier};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrMinConfig {
    /// SGD steps on the surrogate per round.
    pub model_steps: usize,
    /// PGD steps on the noise per round.
    pub pgd_steps: usize,
    /// PGD step; `None` means `epsilon / 5`.
    pub step_size: Option<f64>,
    /// Stop once the surrogate's training error on the perturbed set is below this.
    pub stop_error: f64,
    pub max_rounds: usize,
    pub surrogate: Architecture,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ErrMinConfig {
    fn default() -> Self {
        ErrMinConfig {
            model_steps: 10,
            pgd_steps: 10,
            step_size: None,
            stop_error: 0.10,
            max_rounds: 30,
            surrogate: Architecture::small_cnn(),
            lr: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl ErrMinConfig {
    fn validate(&self) -> Result<()> {
        if self.model_steps == 0 || self.pgd_steps == 0 || self.max_rounds == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("errmin step counts must be positive".into()));
        }
        if !(self.stop_error > 0.0 && self.lr > 0.0) {
            return Err(Error::InvalidParameter("errmin threshold and learning rate must be positive".into()));
        }
        if matches!(self.step_size, Some(s) if !(s > 0.0)) {
            return Err(Error::InvalidParameter("errmin step size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStat {
    pub round: usize,
    pub train_loss: f64,
    pub train_error: f64,
    /// Lowest training loss seen up to and including this round.
    pub best_loss: f64,
}

#[derive(Debug, Clone)]
pub struct ErrMinOutcome {
    pub perturbation: Perturbation,
    pub rounds: Vec<RoundStat>,
    /// Round whose noise was returned.
    pub stop_round: usize,
    pub final_error: f64,
    pub converged: bool,
    pub warning: Option<String>,
}

/// Error-minimizing noise via alternating surrogate training and PGD descent.
pub fn errmin_noise(
    ds: &LabeledDataset,
    budget: PerturbationBudget,
    cfg: &ErrMinConfig,
    mode: NoiseMode,
) -> Result<ErrMinOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Contract("cannot craft noise for an empty dataset".into()));
    }
    let eps = budget.epsilon();
    let step = cfg.step_size.unwrap_or(eps / 5.0);
    let n = ds.len();
    let c = ds.class_count();
    let d = ds.dims().len();
    let mut rng = SeededRng::new(cfg.seed);
    let mut model = Classifier::new(cfg.surrogate, ds.dims(), c, &mut rng.split())?;
    let mut batch_rng = rng.split();

    let field_count = match mode {
        NoiseMode::SampleWise => n,
        NoiseMode::ClassWise => c,
    };
    let mut fields = vec![vec![0.0; d]; field_count];
    let perturbed = |fields: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let f = match mode {
                    NoiseMode::SampleWise => &fields[i],
                    NoiseMode::ClassWise => &fields[ds.labels()[i]],
                };
                ds.images()[i].pixels().iter().zip(f).map(|(x, v)| (x + v).clamp(0.0, 1.0)).collect()
            })
            .collect()
    };

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut rounds = Vec::new();
    let mut best: Option<(f64, f64, usize, Vec<Vec<f64>>)> = None;
    let mut converged = false;

    for round in 1..=cfg.max_rounds {
        let inputs = perturbed(&fields);
        for _ in 0..cfg.model_steps {
            let mut batch = Vec::with_capacity(cfg.batch_size);
            while batch.len() < cfg.batch_size.min(n) {
                if cursor == order.len() {
                    order = batch_rng.permutation(n);
                    cursor = 0;
                }
                batch.push(order[cursor]);
                cursor += 1;
            }
            let xs: Vec<&[f64]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| ds.labels()[i]).collect();
            sgd_step(&mut model, &xs, &ys, cfg.lr, 0.0)?;
        }

        match mode {
            NoiseMode::SampleWise => {
                let updated = crate::par::map_indexed(n, |i| {
                    pgd_perturb(
                        &model,
                        ds.images()[i].pixels(),
                        ds.labels()[i],
                        eps,
                        step,
                        cfg.pgd_steps,
                        Direction::Descend,
                        Some(&fields[i]),
                    )
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                fields = updated;
            }
            NoiseMode::ClassWise => {
                for _ in 0..cfg.pgd_steps {
                    let inputs = perturbed(&fields);
                    let grads = crate::par::map_indexed(n, |i| model.grad_input(&inputs[i], ds.labels()[i]))
                        .into_iter()
                        .collect::<Result<Vec<_>>>()?;
                    let mut sums = vec![vec![0.0; d]; c];
                    let mut counts = vec![0usize; c];
                    for (i, (_, g)) in grads.iter().enumerate() {
                        let y = ds.labels()[i];
                        counts[y] += 1;
                        sums[y].iter_mut().zip(g).for_each(|(s, v)| *s += v);
                    }
                    for (k, field) in fields.iter_mut().enumerate() {
                        if counts[k] == 0 {
                            continue;
                        }
                        for (f, s) in field.iter_mut().zip(&sums[k]) {
                            let mean = s / counts[k] as f64;
                            *f = (*f - step * signum(mean)).clamp(-eps, eps);
                        }
                    }
                }
            }
        }
        if mode == NoiseMode::SampleWise {
            for (i, f) in fields.iter_mut().enumerate() {
                project(f, ds.images()[i].pixels(), eps);
            }
        }

        let inputs = perturbed(&fields);
        let stats = crate::par::map_indexed(n, |i| -> Result<(f64, bool)> {
            let logits = model.logits(&inputs[i])?;
            let y = ds.labels()[i];
            Ok((crate::model::cross_entropy(&logits, y), crate::model::argmax(&logits) != y))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let train_loss = stats.iter().map(|s| s.0).sum::<f64>() / n as f64;
        let train_error = stats.iter().filter(|s| s.1).count() as f64 / n as f64;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch: round });
        }
        let improved = best.as_ref().is_none_or(|b| train_loss < b.0);
        if improved {
            best = Some((train_loss, train_error, round, fields.clone()));
        }
        let best_loss = best.as_ref().map_or(train_loss, |b| b.0);
        rounds.push(RoundStat {
            round,
            train_loss,
            train_error,
            best_loss,
        });
        log::debug!("errmin round {round}: loss {train_loss:.4} error {train_error:.4}");
        if train_error < cfg.stop_error {
            converged = true;
            break;
        }
    }

    let (final_fields, stop_round, final_error, warning) = if converged {
        let last = rounds.last().expect("at least one round");
        (fields, last.round, last.train_error, None)
    } else {
        let (_, err, round, f) = best.expect("at least one round");
        let msg = format!(
            "surrogate error stayed above {:.3} for {} rounds; returning round {round} (error {err:.4})",
            cfg.stop_error, cfg.max_rounds
        );
        log::warn!("{msg}");
        (f, round, err, Some(msg))
    };
    Ok(ErrMinOutcome {
        perturbation: Perturbation::new(mode, ds.dims(), final_fields, Some(eps))?,
        rounds,
        stop_round,
        final_error,
        converged,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_toy, ToySpec};

    fn small() -> LabeledDataset {
        let spec = ToySpec {
            dims: crate::image::Dims::new(8, 8, 3),
            train: 60,
            val: 10,
            test: 10,
            ..ToySpec::default()
        };
        generate_toy(&spec).unwrap().0
    }

    fn quick_cfg() -> ErrMinConfig {
        ErrMinConfig {
            max_rounds: 4,
            ..ErrMinConfig::default()
        }
    }

    #[test]
    fn sample_wise_budget_and_trace() {
        let ds = small();
        let out = errmin_noise(&ds, PerturbationBudget::default(), &quick_cfg(), NoiseMode::SampleWise).unwrap();
        assert!(out.perturbation.linf() <= 8.0 / 255.0 + 1e-12);
        assert!(out.converged || out.warning.is_some());
        if out.converged {
            assert!(out.final_error < 0.10);
        }
        for w in out.rounds.windows(2) {
            assert!(w[1].best_loss <= w[0].best_loss);
        }
    }

    #[test]
    fn class_wise_fields_are_shared() {
        let ds = small();
        let out = errmin_noise(&ds, PerturbationBudget::default(), &quick_cfg(), NoiseMode::ClassWise).unwrap();
        let p = &out.perturbation;
        assert_eq!(p.fields().len(), 10);
        assert!(p.linf() <= 8.0 / 255.0 + 1e-12);
        let expanded = p.expand(&ds).unwrap();
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                if ds.labels()[i] == ds.labels()[j] {
                    assert_eq!(expanded[i], expanded[j]);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = small();
        let cfg = ErrMinConfig {
            max_rounds: 2,
            ..ErrMinConfig::default()
        };
        let a = errmin_noise(&ds, PerturbationBudget::default(), &cfg, NoiseMode::SampleWise).unwrap();
        let b = errmin_noise(&ds, PerturbationBudget::default(), &cfg, NoiseMode::SampleWise).unwrap();
        assert_eq!(a.perturbation, b.perturbation);
    }
}
