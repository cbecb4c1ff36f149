//! Stochastic augmentation: a fixed rotate / crop / flip prefix followed by
//! optional steps whose parameters are drawn per image.
//!
//! Text form: `policy(rotate=22.5,crop=5,flip=0.5,seed=1)[brightness(f=1:1.5)@0.5|grayscale@1]`.
//! A parameter written `lo:hi` is drawn uniformly from that range.

use std::fmt;
use std::str::FromStr;

use super::{crop_resize, hflip, parse_call, rotate, TransformSpec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::SeededRng;

/// Parameters that take whole numbers; sampled values are rounded.
const INTEGER_KEYS: [&str; 2] = ["iter", "margin"];

#[derive(Debug, Clone, PartialEq)]
pub enum ParamRange {
    Uniform(f64, f64),
    Text(String),
}

/// A transform name with per-parameter ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecSampler {
    pub name: String,
    pub params: Vec<(String, ParamRange)>,
}

impl SpecSampler {
    fn realize(&self, pick: impl FnMut(f64, f64) -> f64) -> Result<TransformSpec> {
        let mut pick = pick;
        let args: Vec<(String, String)> = self
            .params
            .iter()
            .map(|(k, r)| {
                let v = match r {
                    ParamRange::Text(t) => t.clone(),
                    ParamRange::Uniform(lo, hi) => {
                        let x = pick(*lo, *hi);
                        if INTEGER_KEYS.contains(&k.as_str()) {
                            format!("{}", x.round() as i64)
                        } else {
                            format!("{x}")
                        }
                    }
                };
                (k.clone(), v)
            })
            .collect();
        TransformSpec::from_parts(&self.name, &args)
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Result<TransformSpec> {
        self.realize(|lo, hi| rng.uniform(lo, hi))
    }

    /// Both range endpoints must give valid transforms.
    pub fn validate(&self) -> Result<()> {
        self.realize(|lo, _| lo)?;
        self.realize(|_, hi| hi)?;
        Ok(())
    }
}

impl FromStr for SpecSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s.trim())?;
        let mut params = Vec::with_capacity(args.len());
        for (k, v) in args {
            let range = match v.split_once(':') {
                Some((lo, hi)) => match (lo.trim().parse::<f64>(), hi.trim().parse::<f64>()) {
                    (Ok(lo), Ok(hi)) if lo <= hi => ParamRange::Uniform(lo, hi),
                    _ => return Err(Error::InvalidParameter(format!("bad range '{v}' for {k}"))),
                },
                None => match v.parse::<f64>() {
                    Ok(x) => ParamRange::Uniform(x, x),
                    Err(_) => ParamRange::Text(v),
                },
            };
            params.push((k, range));
        }
        let sampler = SpecSampler { name, params };
        sampler.validate()?;
        Ok(sampler)
    }
}

impl fmt::Display for SpecSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if self.params.is_empty() {
            return Ok(());
        }
        write!(f, "(")?;
        for (i, (k, r)) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            match r {
                ParamRange::Text(t) => write!(f, "{k}={t}")?,
                ParamRange::Uniform(lo, hi) if lo == hi => write!(f, "{k}={lo}")?,
                ParamRange::Uniform(lo, hi) => write!(f, "{k}={lo}:{hi}")?,
            }
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub sampler: SpecSampler,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    /// Rotation angle is drawn from `[0, max_rotate]` degrees.
    pub max_rotate: f64,
    /// Crop margin is drawn from `0..=max_crop` pixels.
    pub max_crop: usize,
    pub flip_p: f64,
    pub steps: Vec<PolicyStep>,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy { max_rotate: 22.5, max_crop: 5, flip_p: 0.5, steps: Vec::new(), seed: 0 }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.max_rotate) {
            return Err(Error::InvalidParameter(format!("policy rotate {} outside [0, 180]", self.max_rotate)));
        }
        let probs = std::iter::once(self.flip_p).chain(self.steps.iter().map(|s| s.probability));
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
            }
        }
        self.steps.iter().try_for_each(|s| s.sampler.validate())
    }
}

/// Applies the prefix and then each step with its probability.
///
/// The crop margin is capped so that at least two pixels survive on the
/// shorter side.
pub fn sample_policy(policy: &AugmentPolicy, img: &Image, rng: &mut SeededRng) -> Result<Image> {
    let angle = rng.uniform(0.0, policy.max_rotate);
    let mut out = rotate(img, angle)?;
    let margin = rng.below(policy.max_crop + 1);
    let cap = (img.height().min(img.width()).saturating_sub(1)) / 2;
    out = crop_resize(&out, margin.min(cap))?;
    if rng.bernoulli(policy.flip_p) {
        out = hflip(&out);
    }
    for step in &policy.steps {
        if rng.bernoulli(step.probability) {
            out = step.sampler.sample(rng)?.apply(&out)?;
        }
    }
    Ok(out)
}

impl FromStr for AugmentPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("malformed policy '{s}'"));
        let (head, tail) = match s.find('[') {
            Some(i) => (&s[..i], Some(&s[i..])),
            None => (s, None),
        };
        let (name, args) = parse_call(head.trim())?;
        if name != "policy" {
            return Err(bad());
        }
        let mut policy = AugmentPolicy::default();
        for (k, v) in &args {
            let num = || v.parse::<f64>().map_err(|_| bad());
            match k.as_str() {
                "rotate" => policy.max_rotate = num()?,
                "crop" => policy.max_crop = v.parse().map_err(|_| bad())?,
                "flip" => policy.flip_p = num()?,
                "seed" => policy.seed = v.parse().map_err(|_| bad())?,
                other => return Err(Error::InvalidParameter(format!("policy: unknown argument '{other}'"))),
            }
        }
        if let Some(tail) = tail {
            let inner = tail.strip_prefix('[').and_then(|t| t.strip_suffix(']')).ok_or_else(bad)?;
            for part in inner.split('|').map(str::trim).filter(|p| !p.is_empty()) {
                let (spec, p) = part.rsplit_once('@').ok_or_else(bad)?;
                policy.steps.push(PolicyStep {
                    sampler: spec.parse()?,
                    probability: p.trim().parse().map_err(|_| bad())?,
                });
            }
        }
        policy.validate()?;
        Ok(policy)
    }
}

impl fmt::Display for AugmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "policy(rotate={},crop={},flip={},seed={})[",
            self.max_rotate, self.max_crop, self.flip_p, self.seed
        )?;
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, "|")?;
            }
            write!(f, "{}@{}", step.sampler, step.probability)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;

    fn img(seed: u64) -> Image {
        let d = Dims::new(16, 16, 3);
        let mut rng = SeededRng::new(seed);
        Image::new(d, (0..d.len()).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_ranges_are_identity() {
        let policy: AugmentPolicy = "policy(rotate=0,crop=0,flip=0,seed=1)[brightness(f=1:2)@0|grayscale@0]"
            .parse()
            .unwrap();
        let x = img(1);
        let out = sample_policy(&policy, &x, &mut SeededRng::new(9)).unwrap();
        let diff = x.pixels().iter().zip(out.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn same_seed_same_output() {
        let policy: AugmentPolicy = "policy(rotate=22.5,crop=5,flip=0.5,seed=1)[saturation(f=0:2)@0.5|hue(o=0:0.5)@0.5]"
            .parse()
            .unwrap();
        let x = img(2);
        let a = sample_policy(&policy, &x, &mut SeededRng::new(4)).unwrap();
        let b = sample_policy(&policy, &x, &mut SeededRng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flip_frequency() {
        let policy = AugmentPolicy { max_rotate: 0.0, max_crop: 0, flip_p: 0.5, steps: Vec::new(), seed: 0 };
        let d = Dims::new(1, 2, 1);
        let x = Image::new(d, vec![0.0, 1.0]).unwrap();
        let mut rng = SeededRng::new(17);
        let flips = (0..10_000)
            .filter(|_| sample_policy(&policy, &x, &mut rng).unwrap().get(0, 0, 0) == 1.0)
            .count();
        let rate = flips as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "flip rate {rate}");
    }

    #[test]
    fn text_round_trip() {
        let text = "policy(rotate=22.5,crop=5,flip=0.5,seed=3)[brightness(f=1:1.5)@0.5|erode(kernel=3x3,iter=1:2)@0.25|grayscale@1]";
        let p: AugmentPolicy = text.parse().unwrap();
        assert_eq!(p.to_string(), text);
        assert_eq!(p.to_string().parse::<AugmentPolicy>().unwrap(), p);
    }

    #[test]
    fn invalid_policies() {
        for bad in [
            "policy(flip=1.5)",
            "policy(rotate=200)",
            "policy(speed=1)",
            "policy()[brightness(f=2:1)@0.5]",
            "policy()[brightness(f=1)@1.5]",
            "policy()[zoom(f=0.1:1)@0.5]",
            "policy()[brightness(f=1)]",
            "augment()",
        ] {
            assert!(bad.parse::<AugmentPolicy>().is_err(), "{bad} parsed");
        }
    }
}
