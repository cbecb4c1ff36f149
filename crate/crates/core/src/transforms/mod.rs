//! Dimension-preserving image transforms and dataset expansion.
//!
//! Every transform has a canonical text form, e.g. `erode(kernel=3x3,iter=1)`
//! or `blur(kernel=55x5,sigma=2)`, which round-trips through `Display` / `FromStr`.

mod blur;
mod color;
mod geometric;
mod morphology;
mod policy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;
use crate::rng::SeededRng;

pub use blur::{convolve_raw, gaussian_blur};
pub use color::{
    brightness, channel_merge, contrast, grayscale, hsv_to_rgb, hue_shift, rgb_to_hsv, saturation,
    threshold_binary, threshold_binary_inv, Channel,
};
pub use geometric::{crop_resize, hflip, rotate, shear, shift, zoom};
pub use morphology::{dilate, erode};
pub use policy::{sample_policy, AugmentPolicy, PolicyStep, SpecSampler};

/// Weighted window anchored at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Kernel {
    /// Flat structuring element.
    pub fn ones(height: usize, width: usize) -> Self {
        Kernel { height, width, values: vec![1.0; height * width] }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width, "kernel values must fill the window");
        Kernel { height, width, values }
    }

    /// `K exp(-(x² + y²) / 2σ²)` over offsets from the anchor, with `K` making the sum 1.
    pub fn gaussian(height: usize, width: usize, sigma: f64) -> Result<Self> {
        blur::validate(height, width, sigma)?;
        let (ar, ac) = ((height / 2) as f64, (width / 2) as f64);
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let (y, x) = (r as f64 - ar, c as f64 - ac);
                values.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
            }
        }
        let k = 1.0 / values.iter().sum::<f64>();
        values.iter_mut().for_each(|v| *v *= k);
        Ok(Kernel { height, width, values })
    }

    pub fn anchor(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }
}

/// A deterministic, parameterized transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    ThresholdBinary { t: f64, m: f64 },
    ThresholdBinaryInv { t: f64, m: f64 },
    ChannelMerge { src: Channel },
    Erode { kh: usize, kw: usize, iterations: usize },
    Dilate { kh: usize, kw: usize, iterations: usize },
    GaussianBlur { kh: usize, kw: usize, sigma: f64 },
    Rotate { deg: f64 },
    Shift { dx: f64, dy: f64 },
    Zoom { factor: f64 },
    Shear { factor: f64 },
    HFlip,
    CropResize { margin: usize },
    Brightness { f: f64 },
    Contrast { f: f64 },
    Saturation { f: f64 },
    HueShift { offset: f64 },
    Grayscale,
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
    }
}

fn odd(kh: usize, kw: usize) -> Result<()> {
    if kh % 2 == 1 && kw % 2 == 1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("kernel must have odd dims, got {kh}x{kw}")))
    }
}

impl TransformSpec {
    /// Checks parameter ranges that do not depend on the image.
    pub fn validate(&self) -> Result<()> {
        use TransformSpec::*;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            ThresholdBinary { t, m } | ThresholdBinaryInv { t, m } => {
                in_unit("t", t)?;
                in_unit("m", m)
            }
            ChannelMerge { .. } | HFlip | Grayscale => Ok(()),
            Erode { kh, kw, iterations } | Dilate { kh, kw, iterations } => {
                odd(kh, kw)?;
                if iterations == 0 {
                    return bad("iterations must be >= 1".into());
                }
                Ok(())
            }
            GaussianBlur { kh, kw, sigma } => blur::validate(kh, kw, sigma),
            Rotate { deg } if !(deg.abs() <= 180.0) => bad(format!("rotation {deg} outside [-180, 180]")),
            Shift { dx, dy } if !(dx.abs() <= 0.5 && dy.abs() <= 0.5) => {
                bad(format!("shift ({dx}, {dy}) outside [-0.5, 0.5]"))
            }
            Zoom { factor } if !(factor > 0.2 && factor < 5.0) => bad(format!("zoom {factor} outside (0.2, 5)")),
            Shear { factor } if !(factor.abs() <= 1.0) => bad(format!("shear {factor} outside [-1, 1]")),
            Brightness { f } | Contrast { f } | Saturation { f } if !(f >= 0.0 && f.is_finite()) => {
                bad(format!("photometric factor {f} must be >= 0"))
            }
            HueShift { offset } if !(0.0..1.0).contains(&offset) => bad(format!("hue offset {offset} outside [0, 1)")),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        use TransformSpec::*;
        self.validate()?;
        Ok(match *self {
            ThresholdBinary { t, m } => threshold_binary(img, t, m),
            ThresholdBinaryInv { t, m } => threshold_binary_inv(img, t, m),
            ChannelMerge { src } => channel_merge(img, src)?,
            Erode { kh, kw, iterations } => erode(img, &Kernel::ones(kh, kw), iterations)?,
            Dilate { kh, kw, iterations } => dilate(img, &Kernel::ones(kh, kw), iterations)?,
            GaussianBlur { kh, kw, sigma } => gaussian_blur(img, kh, kw, sigma)?,
            Rotate { deg } => rotate(img, deg)?,
            Shift { dx, dy } => shift(img, dx, dy)?,
            Zoom { factor } => zoom(img, factor)?,
            Shear { factor } => shear(img, factor)?,
            HFlip => hflip(img),
            CropResize { margin } => crop_resize(img, margin)?,
            Brightness { f } => brightness(img, f),
            Contrast { f } => contrast(img, f),
            Saturation { f } => saturation(img, f),
            HueShift { offset } => hue_shift(img, offset),
            Grayscale => grayscale(img),
        })
    }

    /// Builds a spec from its name and `key=value` arguments.
    pub(crate) fn from_parts(name: &str, args: &[(String, String)]) -> Result<Self> {
        use TransformSpec::*;
        let args = Args::new(name, args);
        let spec = match name {
            "threshold" => ThresholdBinary { t: args.num("t")?, m: args.num("m")? },
            "threshold_inv" => ThresholdBinaryInv { t: args.num("t")?, m: args.num("m")? },
            "channel" => ChannelMerge {
                src: match args.text("src")? {
                    "R" | "r" => Channel::R,
                    "G" | "g" => Channel::G,
                    "B" | "b" => Channel::B,
                    other => return Err(Error::InvalidParameter(format!("unknown channel '{other}'"))),
                },
            },
            "erode" | "dilate" => {
                let (kh, kw) = args.kernel("kernel")?;
                let iterations = args.int("iter")?;
                if name == "erode" {
                    Erode { kh, kw, iterations }
                } else {
                    Dilate { kh, kw, iterations }
                }
            }
            "blur" => {
                let (kh, kw) = args.kernel("kernel")?;
                GaussianBlur { kh, kw, sigma: args.num("sigma")? }
            }
            "rotate" => Rotate { deg: args.num("deg")? },
            "shift" => Shift { dx: args.num("dx")?, dy: args.num("dy")? },
            "zoom" => Zoom { factor: args.num("f")? },
            "shear" => Shear { factor: args.num("s")? },
            "hflip" => HFlip,
            "crop_resize" => CropResize { margin: args.int("margin")? },
            "brightness" => Brightness { f: args.num("f")? },
            "contrast" => Contrast { f: args.num("f")? },
            "saturation" => Saturation { f: args.num("f")? },
            "hue" => HueShift { offset: args.num("o")? },
            "grayscale" => Grayscale,
            other => return Err(Error::InvalidParameter(format!("unknown transform '{other}'"))),
        };
        args.finish()?;
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TransformSpec::*;
        match self {
            ThresholdBinary { t, m } => write!(f, "threshold(t={t},m={m})"),
            ThresholdBinaryInv { t, m } => write!(f, "threshold_inv(t={t},m={m})"),
            ChannelMerge { src } => write!(f, "channel(src={src:?})"),
            Erode { kh, kw, iterations } => write!(f, "erode(kernel={kh}x{kw},iter={iterations})"),
            Dilate { kh, kw, iterations } => write!(f, "dilate(kernel={kh}x{kw},iter={iterations})"),
            GaussianBlur { kh, kw, sigma } => write!(f, "blur(kernel={kh}x{kw},sigma={sigma})"),
            Rotate { deg } => write!(f, "rotate(deg={deg})"),
            Shift { dx, dy } => write!(f, "shift(dx={dx},dy={dy})"),
            Zoom { factor } => write!(f, "zoom(f={factor})"),
            Shear { factor } => write!(f, "shear(s={factor})"),
            HFlip => write!(f, "hflip"),
            CropResize { margin } => write!(f, "crop_resize(margin={margin})"),
            Brightness { f: v } => write!(f, "brightness(f={v})"),
            Contrast { f: v } => write!(f, "contrast(f={v})"),
            Saturation { f: v } => write!(f, "saturation(f={v})"),
            HueShift { offset } => write!(f, "hue(o={offset})"),
            Grayscale => write!(f, "grayscale"),
        }
    }
}

impl FromStr for TransformSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s.trim())?;
        TransformSpec::from_parts(&name, &args)
    }
}

/// Splits `name(k=v,...)` or a bare `name`.
pub(crate) fn parse_call(s: &str) -> Result<(String, Vec<(String, String)>)> {
    let bad = || Error::InvalidParameter(format!("malformed transform '{s}'"));
    let Some(open) = s.find('(') else {
        if s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(bad());
        }
        return Ok((s.to_string(), Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(bad());
    }
    let name = s[..open].trim().to_string();
    let inner = &s[open + 1..s.len() - 1];
    let mut args = Vec::new();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        args.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok((name, args))
}

struct Args<'a> {
    name: &'a str,
    args: &'a [(String, String)],
    used: std::cell::RefCell<Vec<bool>>,
}

impl<'a> Args<'a> {
    fn new(name: &'a str, args: &'a [(String, String)]) -> Self {
        Args { name, args, used: std::cell::RefCell::new(vec![false; args.len()]) }
    }

    fn text(&self, key: &str) -> Result<&'a str> {
        let pos = self
            .args
            .iter()
            .position(|(k, _)| k == key)
            .ok_or_else(|| Error::InvalidParameter(format!("{} needs '{key}'", self.name)))?;
        self.used.borrow_mut()[pos] = true;
        Ok(&self.args[pos].1)
    }

    fn num(&self, key: &str) -> Result<f64> {
        let v = self.text(key)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::InvalidParameter(format!("{}: '{key}' is not a number: {v}", self.name)))
    }

    fn int(&self, key: &str) -> Result<usize> {
        let v = self.text(key)?;
        v.parse::<usize>()
            .map_err(|_| Error::InvalidParameter(format!("{}: '{key}' is not a count: {v}", self.name)))
    }

    fn kernel(&self, key: &str) -> Result<(usize, usize)> {
        let v = self.text(key)?;
        let parsed = v.split_once('x').and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)));
        parsed.ok_or_else(|| Error::InvalidParameter(format!("{}: kernel must look like 3x3, got {v}", self.name)))
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.args.iter().zip(used.iter()).find(|(_, &u)| !u) {
            Some(((k, _), _)) => Err(Error::InvalidParameter(format!("{}: unknown argument '{k}'", self.name))),
            None => Ok(()),
        }
    }
}

/// One entry of an expansion list.
#[derive(Debug, Clone, PartialEq)]
pub enum Augmentation {
    Fixed(TransformSpec),
    Policy(AugmentPolicy),
}

impl Augmentation {
    pub fn apply(&self, img: &Image, rng: &mut SeededRng) -> Result<Image> {
        match self {
            Augmentation::Fixed(spec) => spec.apply(img),
            Augmentation::Policy(p) => sample_policy(p, img, rng),
        }
    }
}

impl From<TransformSpec> for Augmentation {
    fn from(spec: TransformSpec) -> Self {
        Augmentation::Fixed(spec)
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Augmentation::Fixed(s) => s.fmt(f),
            Augmentation::Policy(p) => p.fmt(f),
        }
    }
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with("policy") {
            Ok(Augmentation::Policy(s.parse()?))
        } else {
            Ok(Augmentation::Fixed(s.parse()?))
        }
    }
}

/// One transformed copy per entry, optionally preceded by the original.
///
/// Policy entries draw per-image streams from the policy seed, so the output
/// does not depend on scheduling.
pub fn expand_dataset(
    ds: &LabeledDataset,
    transforms: &[Augmentation],
    include_original: bool,
) -> Result<LabeledDataset> {
    if transforms.is_empty() {
        return Err(Error::InvalidParameter("expansion needs at least one transform".into()));
    }
    let mut out = if include_original { ds.clone() } else { LabeledDataset::empty(ds.dims(), ds.class_count(), ds.role()) };
    for aug in transforms {
        let seed = match aug {
            Augmentation::Policy(p) => p.seed,
            Augmentation::Fixed(_) => 0,
        };
        let mut streams = SeededRng::new(seed).split_n(ds.len());
        let images = par::map_indexed(ds.len(), |i| {
            let mut rng = streams[i].clone();
            aug.apply(&ds.images()[i], &mut rng)
        });
        streams.clear();
        let images: Vec<Image> = images.into_iter().collect::<Result<_>>()?;
        if images.iter().any(|img| img.dims() != ds.dims()) {
            return Err(Error::Dimension(format!("transform {aug} changed image dims")));
        }
        out = out.concat(&ds.with_images(images)?)?;
    }
    Ok(out)
}
