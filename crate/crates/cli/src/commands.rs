//! The four subcommands. Every output is a pure function of the inputs and
//! the resolved config, so reruns produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use unlearn_core::breaker::{adversarial_train, generate_learnable, opa_break, BreakerConfig};
use unlearn_core::dataset::{generate_toy, load_uds, save_uds, LabeledDataset};
use unlearn_core::model::{evaluate, train_sgd, Classifier};
use unlearn_core::poison::{
    apply, ar_noise, errmax_noise, errmin_noise, ops_noise, save_upr, synthetic_noise, ArFilter, NoiseMode,
    Perturbation, PerturbationBudget,
};
use unlearn_core::rng::SeededRng;
use unlearn_core::{Error, Result};

use crate::config::{Method, RunConfig};
use crate::report::{ExperimentReport, RunSummary};

pub const RUN_FILE: &str = "run.json";

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    dims: String,
    classes: usize,
    train: usize,
    val: usize,
    test: usize,
}

/// Writes `train.uds`, `val.uds`, `test.uds`, `manifest.json`, `labels.csv`
/// and `resolved.cfg` into `out`.
pub fn gen_data(spec: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(spec)?;
    let (train, val, test) = generate_toy(&cfg.dataset)?;
    fs::create_dir_all(out)?;
    let mut labels = String::from("split,index,label\n");
    for (name, ds) in [("train", &train), ("val", &val), ("test", &test)] {
        save_uds(ds, out.join(format!("{name}.uds")))?;
        for (i, y) in ds.labels().iter().enumerate() {
            labels.push_str(&format!("{name},{i},{y}\n"));
        }
    }
    let manifest = Manifest {
        seed: cfg.dataset.seed,
        dims: cfg.dataset.dims.to_string(),
        classes: cfg.dataset.class_count,
        train: train.len(),
        val: val.len(),
        test: test.len(),
    };
    write(out.join("manifest.json"), json(&manifest))?;
    write(out.join("labels.csv"), labels)?;
    write(out.join("resolved.cfg"), cfg.resolved())?;
    log::info!("wrote {} / {} / {} samples to {}", train.len(), val.len(), test.len(), out.display());
    Ok(())
}

pub struct PoisonArgs<'a> {
    pub method: Method,
    pub input: &'a Path,
    pub out: &'a Path,
    pub epsilon: Option<f64>,
    pub class_wise: bool,
    pub cfg: Option<&'a Path>,
}

#[derive(Serialize)]
struct PoisonSummary {
    method: String,
    mode: String,
    epsilon: f64,
    achieved_linf: f64,
    samples: usize,
    dataset_seed: u64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    details: BTreeMap<String, serde_json::Value>,
}

/// Noise for `train` under `cfg.poison`, plus method-specific summary fields.
pub fn build_perturbation(
    cfg: &RunConfig,
    train: &LabeledDataset,
) -> Result<(Perturbation, BTreeMap<String, serde_json::Value>)> {
    if cfg.poison.class_wise && matches!(cfg.poison.method, Method::ErrMax | Method::Ar) {
        return Err(Error::InvalidParameter(format!("{} noise is sample-wise only", cfg.poison.method.name())));
    }
    let budget = PerturbationBudget::new(cfg.poison.epsilon)?;
    let mut rng = SeededRng::new(cfg.poison.seed);
    let mut details = BTreeMap::new();
    let pert: Perturbation = match cfg.poison.method {
        Method::ErrMax => {
            let p = &cfg.poison;
            let init = Classifier::new(p.surrogate, train.dims(), train.class_count(), &mut SeededRng::new(p.surrogate_seed))?;
            let trainer = unlearn_core::model::TrainConfig {
                lr: p.surrogate.default_lr(),
                seed: p.surrogate_seed,
                ..cfg.trainer.train.clone()
            };
            let surrogate = train_sgd(&init, train, &trainer)?.model;
            let acc = evaluate(&surrogate, train)?;
            details.insert("surrogate".into(), serde_json::json!({ "model": p.surrogate.name(), "train_accuracy": acc }));
            errmax_noise(&surrogate, train, budget, &cfg.errmax())?
        }
        Method::ErrMin => {
            let mode = if cfg.poison.class_wise { NoiseMode::ClassWise } else { NoiseMode::SampleWise };
            let out = errmin_noise(train, budget, &cfg.errmin(), mode)?;
            details.insert("stop_round".into(), out.stop_round.into());
            details.insert("final_error".into(), out.final_error.into());
            details.insert("converged".into(), out.converged.into());
            details.insert("warning".into(), out.warning.clone().into());
            out.perturbation
        }
        Method::Synthetic => {
            details.insert("patches".into(), cfg.poison.synthetic.patch_count(train.dims())?.into());
            synthetic_noise(train, budget, cfg.poison.synthetic, &mut rng)?
        }
        Method::Ar => {
            let filters = ArFilter::per_class(train.class_count(), &mut rng)?;
            ar_noise(train, budget, &filters, &mut rng)?
        }
        Method::Ops => {
            let (p, pixels) = ops_noise(train, &mut rng)?;
            details.insert("pixels".into(), serde_json::to_value(&pixels)?);
            p
        }
    };
    Ok((pert, details))
}

/// Reads `<in>/train.uds`, writes the poisoned `train.uds`, the raw noise as
/// `noise.upr`, `summary.json` and `resolved.cfg` into `out`.
pub fn poison(args: &PoisonArgs) -> Result<()> {
    let mut cfg = load_config(args.cfg)?;
    cfg.poison.method = args.method;
    if let Some(e) = args.epsilon {
        cfg.poison.epsilon = e;
    }
    cfg.poison.class_wise |= args.class_wise;
    cfg.validate()?;
    let train = load_uds(args.input.join("train.uds"))?;
    let (pert, details) = build_perturbation(&cfg, &train)?;
    let poisoned = apply(&train, &pert)?;
    fs::create_dir_all(args.out)?;
    save_uds(&poisoned, args.out.join("train.uds"))?;
    save_upr(&pert, args.out.join("noise.upr"))?;
    let summary = PoisonSummary {
        method: args.method.name().into(),
        mode: match pert.mode() {
            NoiseMode::ClassWise => "class-wise".into(),
            NoiseMode::SampleWise => "sample-wise".into(),
        },
        epsilon: cfg.poison.epsilon,
        achieved_linf: pert.linf(),
        samples: poisoned.len(),
        dataset_seed: cfg.dataset.seed,
        details,
    };
    write(args.out.join("summary.json"), json(&summary))?;
    write(args.out.join("resolved.cfg"), cfg.resolved())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nonlinear,
    Opa,
    AdvTrain,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Nonlinear => "nonlinear",
            Mode::Opa => "opa",
            Mode::AdvTrain => "advtrain",
        }
    }
}

pub struct BreakArgs<'a> {
    pub mode: Mode,
    pub train: &'a Path,
    pub val: &'a Path,
    pub test: &'a Path,
    pub cfg: Option<&'a Path>,
    pub out: &'a Path,
}

fn check_compatible(a: &LabeledDataset, b: &LabeledDataset, what: &str) -> Result<()> {
    if a.dims() != b.dims() || a.class_count() != b.class_count() {
        return Err(Error::Contract(format!(
            "{what} split is {} with {} classes, training split is {} with {}",
            b.dims(),
            b.class_count(),
            a.dims(),
            a.class_count()
        )));
    }
    Ok(())
}

/// Runs one defense; writes `run.json`, `metrics.csv`, `resolved.cfg` and,
/// for the nonlinear search, `break_report.{json,csv}`.
pub fn run_break(args: &BreakArgs) -> Result<RunSummary> {
    let cfg = load_config(args.cfg)?;
    let train = load_uds(args.train)?;
    let val = load_uds(args.val)?;
    let test = load_uds(args.test)?;
    check_compatible(&train, &val, "validation")?;
    check_compatible(&train, &test, "test")?;
    let arch = cfg.trainer.model;
    let trainer = &cfg.trainer.train;
    let fresh = || Classifier::new(arch, train.dims(), train.class_count(), &mut SeededRng::new(cfg.breaker.seed));
    let plain = train_sgd(&fresh()?, &train, trainer)?.model;
    let no_defense = evaluate(&plain, &test)?;
    let mut metrics = BTreeMap::new();
    fs::create_dir_all(args.out)?;
    let defense = match args.mode {
        Mode::Nonlinear => {
            let bc = BreakerConfig {
                iterations: cfg.breaker.iterations,
                alpha: cfg.breaker.alpha,
                space: cfg.space.clone(),
                arch,
                trainer: trainer.clone(),
                seed: cfg.breaker.seed,
                include_original: cfg.breaker.include_original,
            };
            let (learnable, report) = generate_learnable(&train, &val, Some(&test), &bc)?;
            write(args.out.join("break_report.json"), format!("{}\n", report.to_json()))?;
            write(args.out.join("break_report.csv"), report.to_csv())?;
            metrics.insert("v0".into(), report.v0);
            metrics.insert("final_size".into(), learnable.len() as f64);
            metrics.insert("early_stop".into(), f64::from(u8::from(report.early_stop)));
            report.final_test_accuracy.unwrap_or(no_defense)
        }
        Mode::Opa => {
            let out = opa_break(&train, &cfg.breaker.opa)?;
            metrics.insert("orthogonality_residual".into(), out.orthogonality);
            metrics.insert("max_projection_residual".into(), out.max_residual);
            metrics.insert("max_idempotence_gap".into(), out.max_idempotence);
            metrics.insert("dropped_columns".into(), out.dropped.len() as f64);
            metrics.insert("probe_initial_loss".into(), out.probe_initial_loss);
            metrics.insert("probe_final_loss".into(), out.probe_final_loss);
            let model = train_sgd(&fresh()?, &out.data, trainer)?.model;
            evaluate(&model, &test)?
        }
        Mode::AdvTrain => {
            let adv = &cfg.breaker.adv;
            metrics.insert("epsilon".into(), adv.epsilon);
            let model = adversarial_train(&fresh()?, &train, adv, trainer)?.model;
            evaluate(&model, &test)?
        }
    };
    let summary = RunSummary {
        name: cfg.name.clone(),
        mode: args.mode.name().into(),
        dataset_seed: cfg.dataset.seed,
        no_defense_accuracy: no_defense,
        defense_accuracy: defense,
        metrics,
    };
    let mut csv = String::from("metric,value\n");
    csv.push_str(&format!("no_defense_accuracy,{}\ndefense_accuracy,{}\n", no_defense, defense));
    for (k, v) in &summary.metrics {
        csv.push_str(&format!("{k},{v}\n"));
    }
    write(args.out.join(RUN_FILE), json(&summary))?;
    write(args.out.join("metrics.csv"), csv)?;
    write(args.out.join("resolved.cfg"), cfg.resolved())?;
    Ok(summary)
}

/// Aggregates `run.json` files from `runs` into a table at `out`; the
/// extension (`.csv` or `.json`) picks the format.
pub fn report(runs: &[PathBuf], out: &Path) -> Result<ExperimentReport> {
    let summaries = runs
        .iter()
        .map(|dir| {
            let path = if dir.is_dir() { dir.join(RUN_FILE) } else { dir.clone() };
            let text = fs::read_to_string(&path)?;
            serde_json::from_str::<RunSummary>(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = ExperimentReport::aggregate(&summaries)?;
    let body = match out.extension().and_then(|e| e.to_str()) {
        Some("csv") => table.to_csv(),
        Some("json") => format!("{}\n", table.to_json()),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "report output `{}` must end in .csv or .json",
                out.display()
            )))
        }
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write(out, body)?;
    Ok(table)
}
