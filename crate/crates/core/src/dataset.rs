//! Labeled image datasets, the UDS on-disk format and the procedural toy set.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Dims, Image};
use crate::rng::SeededRng;

pub const UDS_MAGIC: &[u8; 4] = b"UDS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dims: Dims,
    images: Vec<Image>,
    labels: Vec<usize>,
    class_count: usize,
    role: Role,
}

impl LabeledDataset {
    pub fn new(
        dims: Dims,
        images: Vec<Image>,
        labels: Vec<usize>,
        class_count: usize,
        role: Role,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(img) = images.iter().find(|i| i.dims() != dims) {
            return Err(Error::Dimension(format!("image {} in a {} dataset", img.dims(), dims)));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Contract(format!("label {bad} >= class count {class_count}")));
        }
        Ok(LabeledDataset {
            dims,
            images,
            labels,
            class_count,
            role,
        })
    }

    pub fn empty(dims: Dims, class_count: usize, role: Role) -> Self {
        LabeledDataset {
            dims,
            images: Vec::new(),
            labels: Vec::new(),
            class_count,
            role,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Same labels, new images (must line up one-to-one).
    pub fn with_images(&self, images: Vec<Image>) -> Result<Self> {
        LabeledDataset::new(self.dims, images, self.labels.clone(), self.class_count, self.role)
    }

    /// Appends `other` after `self`.
    pub fn concat(&self, other: &LabeledDataset) -> Result<Self> {
        if other.dims != self.dims || other.class_count != self.class_count {
            return Err(Error::Dimension(format!(
                "cannot concatenate {} ({} classes) with {} ({} classes)",
                self.dims, self.class_count, other.dims, other.class_count
            )));
        }
        let mut out = self.clone();
        out.images.extend(other.images.iter().cloned());
        out.labels.extend_from_slice(&other.labels);
        Ok(out)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Per-class mean image (flattened); classes without samples get zeros.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; self.dims.len()]; self.class_count];
        let counts = self.class_histogram();
        for (img, &l) in self.images.iter().zip(&self.labels) {
            for (s, p) in sums[l].iter_mut().zip(img.pixels()) {
                *s += p;
            }
        }
        for (s, &n) in sums.iter_mut().zip(&counts) {
            if n > 0 {
                s.iter_mut().for_each(|v| *v /= n as f64);
            }
        }
        sums
    }

    /// Copy with every pixel rounded onto the 1/255 grid used on disk.
    pub fn quantized(&self) -> Self {
        let images = self
            .images
            .iter()
            .map(|img| img.map(|v| f64::from(quantize(v)) / 255.0))
            .collect();
        LabeledDataset {
            images,
            ..self.clone()
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_uds(ds: &LabeledDataset) -> Result<Vec<u8>> {
    let d = ds.dims;
    let height = u16::try_from(d.height).map_err(|_| Error::Format("height exceeds u16".into()))?;
    let width = u16::try_from(d.width).map_err(|_| Error::Format("width exceeds u16".into()))?;
    let classes =
        u8::try_from(ds.class_count).map_err(|_| Error::Format("class count exceeds u8".into()))?;
    let count = u32::try_from(ds.len()).map_err(|_| Error::Format("too many images".into()))?;

    let mut out = Vec::with_capacity(14 + ds.len() * (d.len() + 1));
    out.extend_from_slice(UDS_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.push(d.channels as u8);
    out.push(classes);
    for img in &ds.images {
        out.extend(img.pixels().iter().map(|&v| quantize(v)));
    }
    out.extend(ds.labels.iter().map(|&l| l as u8));
    Ok(out)
}

pub fn decode_uds(bytes: &[u8]) -> Result<LabeledDataset> {
    const HEADER: usize = 14;
    if bytes.len() < HEADER {
        return Err(Error::Format(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != UDS_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize;
    let width = u16::from_le_bytes(bytes[10..12].try_into().unwrap()) as usize;
    let channels = bytes[12] as usize;
    let class_count = bytes[13] as usize;
    if channels != 1 && channels != 3 {
        return Err(Error::Format(format!("unsupported channel count {channels}")));
    }
    let dims = Dims::new(height, width, channels);
    let expected = HEADER + count * dims.len() + count;
    if bytes.len() < expected {
        return Err(Error::Format(format!("truncated file: {} of {expected} bytes", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let pix = &bytes[HEADER..HEADER + count * dims.len()];
    let images = pix
        .chunks_exact(dims.len().max(1))
        .take(count)
        .map(|c| Image::new(dims, c.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = bytes[HEADER + count * dims.len()..].iter().map(|&b| b as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::Format(format!("label {bad} >= class count {class_count}")));
    }
    LabeledDataset::new(dims, images, labels, class_count, Role::Train)
}

pub fn save_uds(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_uds(ds)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_uds(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    decode_uds(&fs::read(path)?)
}

/// `index,label` CSV with a header row.
pub fn manifest_csv(ds: &LabeledDataset) -> String {
    let mut s = String::from("index,label\n");
    for (i, l) in ds.labels.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}

/// Replaces the first `ceil(fraction * n)` indices of a seeded shuffle with
/// their poisoned counterparts.
pub fn subset_mix(
    clean: &LabeledDataset,
    poisoned: &LabeledDataset,
    fraction_poisoned: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if clean.len() != poisoned.len() || clean.labels != poisoned.labels {
        return Err(Error::Contract("clean and poisoned sets are not index-aligned".into()));
    }
    if !(0.0..=1.0).contains(&fraction_poisoned) {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction_poisoned} outside [0, 1]"
        )));
    }
    let n = clean.len();
    let take = ((fraction_poisoned * n as f64).ceil() as usize).min(n);
    let order = SeededRng::new(seed).permutation(n);
    let mut from_poison = vec![false; n];
    for &i in &order[..take] {
        from_poison[i] = true;
    }
    let images = (0..n)
        .map(|i| {
            if from_poison[i] {
                poisoned.images[i].clone()
            } else {
                clean.images[i].clone()
            }
        })
        .collect();
    clean.with_images(images)
}

/// Parameters of the procedural glyph dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub class_count: usize,
    pub dims: Dims,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Maximum glyph offset in pixels along each axis.
    pub jitter_px: usize,
    /// Per-channel multiplicative tint spread.
    pub tint_sigma: f64,
    /// Per-pixel additive background noise.
    pub noise_sigma: f64,
    /// Glyph intensity above the background.
    pub contrast: f64,
    /// Background intensity before noise.
    pub background: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            class_count: 10,
            dims: Dims::new(16, 16, 3),
            train: 2000,
            val: 500,
            test: 500,
            jitter_px: 2,
            tint_sigma: 0.1,
            noise_sigma: 0.05,
            contrast: 0.15,
            background: 0.1,
            seed: 7,
        }
    }
}

pub const GLYPH_NAMES: [&str; 10] = [
    "bar", "cross", "disc", "ring", "wedge", "diagonal", "checker", "frame", "tee", "ell",
];

/// Glyph coverage at a point given in units of the glyph box: `u` horizontal,
/// `v` vertical, both in `[-1, 1]` inside the box.
fn glyph(class: usize, u: f64, v: f64) -> bool {
    let inside = u.abs() <= 1.0 && v.abs() <= 1.0;
    if !inside {
        return false;
    }
    let r = (u * u + v * v).sqrt();
    match class % 10 {
        0 => u.abs() <= 0.25,
        1 => u.abs() <= 0.22 || v.abs() <= 0.22,
        2 => r <= 0.75,
        3 => (0.5..=0.95).contains(&r),
        4 => u + v <= -0.2,
        5 => (u - v).abs() <= 0.35,
        6 => ((u + 1.0) * 2.0).floor() as i64 % 2 == ((v + 1.0) * 2.0).floor() as i64 % 2,
        7 => u.abs() >= 0.7 || v.abs() >= 0.7,
        8 => v <= -0.55 || (u.abs() <= 0.22 && v <= 1.0),
        _ => u <= -0.55 || v >= 0.55,
    }
}

fn render(spec: &ToySpec, class: usize, rng: &mut SeededRng) -> Result<Image> {
    let d = spec.dims;
    let jitter = spec.jitter_px as i64;
    let jx = rng.below((2 * jitter + 1) as usize) as i64 - jitter;
    let jy = rng.below((2 * jitter + 1) as usize) as i64 - jitter;
    let tints: Vec<f64> = (0..d.channels).map(|_| 1.0 + spec.tint_sigma * rng.normal()).collect();
    let background = spec.background;
    // Glyph box spans 3/4 of the shorter side.
    let half = 0.375 * d.height.min(d.width) as f64;
    let cy = (d.height as f64 - 1.0) / 2.0 + jy as f64;
    let cx = (d.width as f64 - 1.0) / 2.0 + jx as f64;
    let mut mask = vec![false; d.height * d.width];
    for row in 0..d.height {
        for col in 0..d.width {
            if glyph(class, (col as f64 - cx) / half, (row as f64 - cy) / half) {
                mask[row * d.width + col] = true;
            }
        }
    }
    let mut pixels = vec![0.0; d.len()];
    for row in 0..d.height {
        for col in 0..d.width {
            let m = if mask[row * d.width + col] { 1.0 } else { 0.0 };
            for (ch, tint) in tints.iter().enumerate() {
                let base = background + spec.contrast * tint * m;
                pixels[d.index(row, col, ch)] = base + spec.noise_sigma * rng.normal();
            }
        }
    }
    Image::new(d, pixels)
}

fn generate_split(spec: &ToySpec, n: usize, role: Role, rng: &mut SeededRng) -> Result<LabeledDataset> {
    let c = spec.class_count;
    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let order = rng.permutation(n);
    labels = order.iter().map(|&i| labels[i]).collect();
    let streams = rng.split_n(n);
    let images = crate::par::map_indexed(n, |i| {
        let mut r = streams[i].clone();
        render(spec, labels[i], &mut r)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(spec.dims, images, labels, c, role)
}

/// Train, validation and test splits, each from an independent child stream.
pub fn generate_toy(spec: &ToySpec) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    if spec.class_count == 0 || spec.class_count > GLYPH_NAMES.len() {
        return Err(Error::InvalidParameter(format!(
            "class count must be in 1..={}",
            GLYPH_NAMES.len()
        )));
    }
    for (name, n) in [("train", spec.train), ("val", spec.val), ("test", spec.test)] {
        if n < spec.class_count {
            return Err(Error::InvalidParameter(format!(
                "{name} size {n} is smaller than the class count"
            )));
        }
    }
    if spec.dims.height < 4 || spec.dims.width < 4 {
        return Err(Error::InvalidParameter("toy images must be at least 4x4".into()));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut train_rng = rng.split();
    let mut val_rng = rng.split();
    let mut test_rng = rng.split();
    Ok((
        generate_split(spec, spec.train, Role::Train, &mut train_rng)?,
        generate_split(spec, spec.val, Role::Val, &mut val_rng)?,
        generate_split(spec, spec.test, Role::Test, &mut test_rng)?,
    ))
}
