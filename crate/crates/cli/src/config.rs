//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [dataset]
//! seed = 7
//! [poison]
//! epsilon = 8/255
//! [transforms]
//! space = channel(src=B); erode(kernel=3x3,iter=1)
//! ```
//!
//! Blank lines and `#` comments are ignored. Numbers may be written as
//! fractions. Unknown sections and keys are errors carrying the line number.

use std::fmt::Write as _;
use std::path::Path;

use unlearn_core::breaker::{AdvTrainConfig, OpaConfig};
use unlearn_core::dataset::ToySpec;
use unlearn_core::image::Dims;
use unlearn_core::model::{Architecture, TrainConfig};
use unlearn_core::poison::{ErrMaxConfig, ErrMinConfig, SyntheticConfig, DEFAULT_EPSILON};
use unlearn_core::transforms::Augmentation;
use unlearn_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ErrMax,
    ErrMin,
    Synthetic,
    Ar,
    Ops,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ErrMax => "errmax",
            Method::ErrMin => "errmin",
            Method::Synthetic => "synthetic",
            Method::Ar => "ar",
            Method::Ops => "ops",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "errmax" => Method::ErrMax,
            "errmin" => Method::ErrMin,
            "synthetic" => Method::Synthetic,
            "ar" => Method::Ar,
            "ops" => Method::Ops,
            other => return Err(Error::InvalidParameter(format!("unknown poison method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoisonSection {
    pub method: Method,
    pub epsilon: f64,
    pub class_wise: bool,
    pub seed: u64,
    /// Seed of the clean-trained surrogate used by errmax.
    pub surrogate_seed: u64,
    pub surrogate: Architecture,
    pub errmax: ErrMaxConfig,
    pub errmin: ErrMinConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for PoisonSection {
    fn default() -> Self {
        PoisonSection {
            method: Method::ErrMax,
            epsilon: DEFAULT_EPSILON,
            class_wise: false,
            seed: 11,
            surrogate_seed: 1,
            surrogate: Architecture::SoftmaxRegression,
            errmax: ErrMaxConfig::default(),
            errmin: ErrMinConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakerSection {
    pub iterations: usize,
    pub alpha: f64,
    pub include_original: bool,
    pub seed: u64,
    pub opa: OpaConfig,
    pub adv: AdvTrainConfig,
}

impl Default for BreakerSection {
    fn default() -> Self {
        BreakerSection {
            iterations: 6,
            alpha: 0.85,
            include_original: true,
            seed: 7,
            opa: OpaConfig::default(),
            adv: AdvTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSection {
    pub model: Architecture,
    pub train: TrainConfig,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let model = Architecture::SoftmaxRegression;
        TrainerSection { model, train: TrainConfig { lr: model.default_lr(), seed: 7, ..TrainConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: ToySpec,
    pub poison: PoisonSection,
    pub space: Vec<Augmentation>,
    pub breaker: BreakerSection,
    pub trainer: TrainerSection,
    /// Row label used when runs are aggregated into a table.
    pub name: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: ToySpec::default(),
            poison: PoisonSection::default(),
            space: default_space(),
            breaker: BreakerSection::default(),
            trainer: TrainerSection::default(),
            name: "run".into(),
        }
    }
}

pub fn default_space() -> Vec<Augmentation> {
    [
        "channel(src=R)",
        "channel(src=G)",
        "channel(src=B)",
        "erode(kernel=3x3,iter=1)",
        "dilate(kernel=3x3,iter=1)",
        "blur(kernel=5x5,sigma=1)",
    ]
    .iter()
    .map(|s| s.parse().expect("built-in transform"))
    .collect()
}

/// Parses `8/255`, `0.5` or `3`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?);
            if b == 0.0 {
                return None;
            }
            a / b
        }
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Config { line: self.line, message: message.into() }
    }

    fn num(&self) -> Result<f64> {
        parse_number(self.value).ok_or_else(|| self.err(format!("`{}` expects a number, got `{}`", self.key, self.value)))
    }

    fn int<T: std::str::FromStr>(&self) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("`{}` expects a whole number, got `{}`", self.key, self.value)))
    }

    fn boolean(&self) -> Result<bool> {
        match self.value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(self.err(format!("`{}` expects true or false, got `{v}`", self.key))),
        }
    }

    fn parsed<T: std::str::FromStr<Err = Error>>(&self) -> Result<T> {
        self.value.parse().map_err(|e: Error| self.err(format!("`{}`: {e}", self.key)))
    }

    fn unknown(&self, section: &str) -> Error {
        self.err(format!("unknown key `{}` in [{section}]", self.key))
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        let mut seen: Vec<(String, String)> = Vec::new();
        let mut lr_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
                let name = name.trim();
                if !["dataset", "poison", "transforms", "breaker", "trainer", "output"].contains(&name) {
                    return Err(Error::Config { line, message: format!("unknown section [{name}]") });
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config { line, message: format!("expected `key = value`, got `{body}`") });
            };
            let e = Entry { line, key: key.trim(), value: value.trim() };
            let Some(sec) = section.as_deref() else {
                return Err(e.err("key outside of any section"));
            };
            if seen.iter().any(|(s, k)| s == sec && k == e.key) {
                return Err(e.err(format!("duplicate key `{}` in [{sec}]", e.key)));
            }
            seen.push((sec.to_string(), e.key.to_string()));
            match sec {
                "dataset" => cfg.set_dataset(&e)?,
                "poison" => cfg.set_poison(&e)?,
                "transforms" => cfg.set_transforms(&e)?,
                "breaker" => cfg.set_breaker(&e)?,
                "trainer" => {
                    lr_set |= e.key == "lr";
                    cfg.set_trainer(&e)?
                }
                _ => cfg.set_output(&e)?,
            }
        }
        if !lr_set {
            cfg.trainer.train.lr = cfg.trainer.model.default_lr();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_dataset(&mut self, e: &Entry) -> Result<()> {
        let d = &mut self.dataset;
        match e.key {
            "classes" => d.class_count = e.int()?,
            "size" => d.dims = e.parsed::<Dims>()?,
            "train" => d.train = e.int()?,
            "val" => d.val = e.int()?,
            "test" => d.test = e.int()?,
            "jitter" => d.jitter_px = e.int()?,
            "tint_sigma" => d.tint_sigma = e.num()?,
            "noise_sigma" => d.noise_sigma = e.num()?,
            "contrast" => d.contrast = e.num()?,
            "background" => d.background = e.num()?,
            "seed" => d.seed = e.int()?,
            _ => return Err(e.unknown("dataset")),
        }
        Ok(())
    }

    fn set_poison(&mut self, e: &Entry) -> Result<()> {
        let p = &mut self.poison;
        match e.key {
            "method" => p.method = e.parsed()?,
            "epsilon" => p.epsilon = e.num()?,
            "class_wise" => p.class_wise = e.boolean()?,
            "seed" => p.seed = e.int()?,
            "surrogate" => p.surrogate = e.parsed()?,
            "surrogate_seed" => p.surrogate_seed = e.int()?,
            "errmax_steps" => p.errmax.steps = e.int()?,
            "errmax_step_size" => p.errmax.step_size = Some(e.num()?),
            "errmax_target_shift" => {
                p.errmax.target_shift = match e.value {
                    "none" => None,
                    _ => Some(e.int()?),
                }
            }
            "errmin_model_steps" => p.errmin.model_steps = e.int()?,
            "errmin_pgd_steps" => p.errmin.pgd_steps = e.int()?,
            "errmin_step_size" => p.errmin.step_size = Some(e.num()?),
            "errmin_stop_error" => p.errmin.stop_error = e.num()?,
            "errmin_max_rounds" => p.errmin.max_rounds = e.int()?,
            "errmin_surrogate" => p.errmin.surrogate = e.parsed()?,
            "errmin_lr" => p.errmin.lr = e.num()?,
            "errmin_batch" => p.errmin.batch_size = e.int()?,
            "errmin_seed" => p.errmin.seed = e.int()?,
            "synthetic_patch" => p.synthetic.patch = e.int()?,
            _ => return Err(e.unknown("poison")),
        }
        Ok(())
    }

    fn set_transforms(&mut self, e: &Entry) -> Result<()> {
        match e.key {
            "space" => {
                self.space = e
                    .value
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|err: Error| e.err(format!("bad transform `{s}`: {err}"))))
                    .collect::<Result<_>>()?
            }
            "include_original" => self.breaker.include_original = e.boolean()?,
            _ => return Err(e.unknown("transforms")),
        }
        Ok(())
    }

    fn set_breaker(&mut self, e: &Entry) -> Result<()> {
        let b = &mut self.breaker;
        match e.key {
            "iterations" => b.iterations = e.int()?,
            "alpha" => b.alpha = e.num()?,
            "seed" => b.seed = e.int()?,
            "opa_iterations" => b.opa.iterations = e.int()?,
            "opa_lr" => b.opa.lr = e.num()?,
            "opa_l2" => b.opa.l2 = e.num()?,
            "opa_bias" => b.opa.include_bias = e.boolean()?,
            "adv_epsilon" => b.adv.epsilon = e.num()?,
            "adv_step_size" => b.adv.step_size = e.num()?,
            "adv_steps" => b.adv.steps = e.int()?,
            _ => return Err(e.unknown("breaker")),
        }
        Ok(())
    }

    fn set_trainer(&mut self, e: &Entry) -> Result<()> {
        let t = &mut self.trainer;
        match e.key {
            "model" => t.model = e.parsed()?,
            "lr" => t.train.lr = e.num()?,
            "epochs" => t.train.epochs = e.int()?,
            "batch_size" => t.train.batch_size = e.int()?,
            "seed" => t.train.seed = e.int()?,
            "weight_decay" => t.train.weight_decay = e.num()?,
            _ => return Err(e.unknown("trainer")),
        }
        Ok(())
    }

    fn set_output(&mut self, e: &Entry) -> Result<()> {
        match e.key {
            "name" => self.name = e.value.to_string(),
            _ => return Err(e.unknown("output")),
        }
        Ok(())
    }

    /// Range checks that do not need data. Line 0 marks whole-file problems.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::Config { line: 0, message });
        if !(0.0..=1.0).contains(&self.poison.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.poison.epsilon));
        }
        if !(self.breaker.alpha > 0.0 && self.breaker.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.breaker.alpha));
        }
        if self.breaker.iterations > 0 && self.space.is_empty() {
            return bad("transform space is empty".into());
        }
        if self.name.is_empty() || self.name.contains(['\n', ',', '"']) {
            return bad(format!("output name `{}` must be nonempty without commas or quotes", self.name));
        }
        self.trainer.train.validate().map_err(|e| Error::Config { line: 0, message: e.to_string() })
    }

    /// Step sizes with their epsilon-relative defaults filled in.
    pub fn errmax(&self) -> ErrMaxConfig {
        let mut c = self.poison.errmax.clone();
        c.step_size.get_or_insert(self.poison.epsilon / 10.0);
        c
    }

    pub fn errmin(&self) -> ErrMinConfig {
        let mut c = self.poison.errmin.clone();
        c.step_size.get_or_insert(self.poison.epsilon / 5.0);
        c
    }

    /// Every key with its effective value; parses back to an equal config.
    pub fn resolved(&self) -> String {
        let d = &self.dataset;
        let p = &self.poison;
        let b = &self.breaker;
        let t = &self.trainer;
        let em = self.errmax();
        let en = self.errmin();
        let mut s = String::new();
        let _ = writeln!(s, "[dataset]");
        let _ = writeln!(s, "classes = {}", d.class_count);
        let _ = writeln!(s, "size = {}", d.dims);
        let _ = writeln!(s, "train = {}", d.train);
        let _ = writeln!(s, "val = {}", d.val);
        let _ = writeln!(s, "test = {}", d.test);
        let _ = writeln!(s, "jitter = {}", d.jitter_px);
        let _ = writeln!(s, "tint_sigma = {}", d.tint_sigma);
        let _ = writeln!(s, "noise_sigma = {}", d.noise_sigma);
        let _ = writeln!(s, "contrast = {}", d.contrast);
        let _ = writeln!(s, "background = {}", d.background);
        let _ = writeln!(s, "seed = {}", d.seed);
        let _ = writeln!(s, "\n[poison]");
        let _ = writeln!(s, "method = {}", p.method.name());
        let _ = writeln!(s, "epsilon = {}", p.epsilon);
        let _ = writeln!(s, "class_wise = {}", p.class_wise);
        let _ = writeln!(s, "seed = {}", p.seed);
        let _ = writeln!(s, "surrogate = {}", p.surrogate.name());
        let _ = writeln!(s, "surrogate_seed = {}", p.surrogate_seed);
        let _ = writeln!(s, "errmax_steps = {}", em.steps);
        let _ = writeln!(s, "errmax_step_size = {}", em.step_size.unwrap_or_default());
        match em.target_shift {
            Some(k) => writeln!(s, "errmax_target_shift = {k}"),
            None => writeln!(s, "errmax_target_shift = none"),
        }
        .ok();
        let _ = writeln!(s, "errmin_model_steps = {}", en.model_steps);
        let _ = writeln!(s, "errmin_pgd_steps = {}", en.pgd_steps);
        let _ = writeln!(s, "errmin_step_size = {}", en.step_size.unwrap_or_default());
        let _ = writeln!(s, "errmin_stop_error = {}", en.stop_error);
        let _ = writeln!(s, "errmin_max_rounds = {}", en.max_rounds);
        let _ = writeln!(s, "errmin_surrogate = {}", en.surrogate.name());
        let _ = writeln!(s, "errmin_lr = {}", en.lr);
        let _ = writeln!(s, "errmin_batch = {}", en.batch_size);
        let _ = writeln!(s, "errmin_seed = {}", en.seed);
        let _ = writeln!(s, "synthetic_patch = {}", p.synthetic.patch);
        let _ = writeln!(s, "\n[transforms]");
        let space: Vec<String> = self.space.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "space = {}", space.join("; "));
        let _ = writeln!(s, "include_original = {}", b.include_original);
        let _ = writeln!(s, "\n[breaker]");
        let _ = writeln!(s, "iterations = {}", b.iterations);
        let _ = writeln!(s, "alpha = {}", b.alpha);
        let _ = writeln!(s, "seed = {}", b.seed);
        let _ = writeln!(s, "opa_iterations = {}", b.opa.iterations);
        let _ = writeln!(s, "opa_lr = {}", b.opa.lr);
        let _ = writeln!(s, "opa_l2 = {}", b.opa.l2);
        let _ = writeln!(s, "opa_bias = {}", b.opa.include_bias);
        let _ = writeln!(s, "adv_epsilon = {}", b.adv.epsilon);
        let _ = writeln!(s, "adv_step_size = {}", b.adv.step_size);
        let _ = writeln!(s, "adv_steps = {}", b.adv.steps);
        let _ = writeln!(s, "\n[trainer]");
        let _ = writeln!(s, "model = {}", t.model.name());
        let _ = writeln!(s, "lr = {}", t.train.lr);
        let _ = writeln!(s, "epochs = {}", t.train.epochs);
        let _ = writeln!(s, "batch_size = {}", t.train.batch_size);
        let _ = writeln!(s, "seed = {}", t.train.seed);
        let _ = writeln!(s, "weight_decay = {}", t.train.weight_decay);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "name = {}", self.name);
        s
    }
}
