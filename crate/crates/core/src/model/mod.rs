//! Small differentiable classifiers with hand-written backpropagation.
//!
//! Parameters live in one flat vector per model; gradients use the same
//! layout, so optimizers and finite-difference checks treat every
//! architecture alike.

mod checkpoint;
pub mod gradcheck;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, UMC_MAGIC};
pub use train::{evaluate, predict, sgd_step, train_sgd, train_with, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Dims;
use crate::rng::SeededRng;
use crate::tensor::{axpy, dot, Tensor};

pub const INIT_STD: f64 = 0.01;
pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_FILTERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    SoftmaxRegression,
    /// One ReLU hidden layer.
    Mlp { hidden: usize },
    /// 3x3 same-padded conv, ReLU, 2x2 max-pool, dense.
    SmallCnn { filters: usize },
}

impl Architecture {
    pub fn mlp() -> Self {
        Architecture::Mlp {
            hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn small_cnn() -> Self {
        Architecture::SmallCnn {
            filters: DEFAULT_FILTERS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::SoftmaxRegression => "softmax",
            Architecture::Mlp { .. } => "mlp",
            Architecture::SmallCnn { .. } => "cnn",
        }
    }

    /// Default SGD learning rate for this architecture.
    pub fn default_lr(&self) -> f64 {
        match self {
            Architecture::SoftmaxRegression => 0.1,
            _ => 0.05,
        }
    }

    fn param_count(&self, dims: Dims, classes: usize) -> usize {
        let d = dims.len();
        match *self {
            Architecture::SoftmaxRegression => classes * d + classes,
            Architecture::Mlp { hidden } => hidden * d + hidden + classes * hidden + classes,
            Architecture::SmallCnn { filters } => {
                let pooled = filters * (dims.height / 2) * (dims.width / 2);
                filters * 9 * dims.channels + filters + classes * pooled + classes
            }
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" | "softmax_regression" => Ok(Architecture::SoftmaxRegression),
            "mlp" => Ok(Architecture::mlp()),
            "cnn" | "small_cnn" => Ok(Architecture::small_cnn()),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    arch: Architecture,
    dims: Dims,
    classes: usize,
    params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    logits: Vec<f64>,
    hidden_pre: Vec<f64>,
    pool_argmax: Vec<usize>,
    pooled: Vec<f64>,
}

impl Classifier {
    /// All parameters zero; the forward pass is uniform over classes.
    pub fn zeros(arch: Architecture, dims: Dims, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidParameter("need at least two classes".into()));
        }
        if let Architecture::SmallCnn { filters } = arch {
            if dims.height < 2 || dims.width < 2 || filters == 0 {
                return Err(Error::InvalidParameter("cnn needs images of at least 2x2 and one filter".into()));
            }
        }
        if let Architecture::Mlp { hidden: 0 } = arch {
            return Err(Error::InvalidParameter("mlp needs a hidden layer".into()));
        }
        Ok(Classifier {
            arch,
            dims,
            classes,
            params: vec![0.0; arch.param_count(dims, classes)],
        })
    }

    /// Weights drawn from N(0, 0.01²), biases zero.
    pub fn new(arch: Architecture, dims: Dims, classes: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut m = Classifier::zeros(arch, dims, classes)?;
        for (start, len) in m.weight_blocks() {
            for p in &mut m.params[start..start + len] {
                *p = INIT_STD * rng.normal();
            }
        }
        Ok(m)
    }

    pub fn from_params(arch: Architecture, dims: Dims, classes: usize, params: Vec<f64>) -> Result<Self> {
        let mut m = Classifier::zeros(arch, dims, classes)?;
        if params.len() != m.params.len() {
            return Err(Error::Dimension(format!(
                "{} expects {} parameters, got {}",
                arch.name(),
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(offset, len)` of each weight block (biases excluded).
    fn weight_blocks(&self) -> Vec<(usize, usize)> {
        let d = self.dims.len();
        let c = self.classes;
        match self.arch {
            Architecture::SoftmaxRegression => vec![(0, c * d)],
            Architecture::Mlp { hidden: h } => vec![(0, h * d), (h * d + h, c * h)],
            Architecture::SmallCnn { filters: f } => {
                let k = f * 9 * self.dims.channels;
                vec![(0, k), (k + f, c * self.pooled_len())]
            }
        }
    }

    fn pooled_len(&self) -> usize {
        match self.arch {
            Architecture::SmallCnn { filters } => filters * (self.dims.height / 2) * (self.dims.width / 2),
            _ => 0,
        }
    }

    /// Parameters split into named tensors, in storage order.
    pub fn parameter_tensors(&self) -> Vec<(&'static str, Tensor)> {
        let d = self.dims.len();
        let c = self.classes;
        let shapes: Vec<(&'static str, Vec<usize>)> = match self.arch {
            Architecture::SoftmaxRegression => vec![("weight", vec![c, d]), ("bias", vec![c])],
            Architecture::Mlp { hidden: h } => vec![
                ("hidden.weight", vec![h, d]),
                ("hidden.bias", vec![h]),
                ("out.weight", vec![c, h]),
                ("out.bias", vec![c]),
            ],
            Architecture::SmallCnn { filters: f } => vec![
                ("conv.weight", vec![f, 3, 3, self.dims.channels]),
                ("conv.bias", vec![f]),
                ("out.weight", vec![c, self.pooled_len()]),
                ("out.bias", vec![c]),
            ],
        };
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                let t = Tensor::new(shape, self.params[offset..offset + len].to_vec())
                    .expect("parameter layout");
                offset += len;
                (name, t)
            })
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.len() {
            return Err(Error::Dimension(format!(
                "model expects {} inputs ({}), got {}",
                self.dims.len(),
                self.dims,
                x.len()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let d = self.dims.len();
        let c = self.classes;
        let p = &self.params;
        match self.arch {
            Architecture::SoftmaxRegression => {
                let (w, b) = p.split_at(c * d);
                let logits = (0..c).map(|k| b[k] + dot(&w[k * d..(k + 1) * d], x)).collect();
                Trace {
                    logits,
                    hidden_pre: Vec::new(),
                    pool_argmax: Vec::new(),
                    pooled: Vec::new(),
                }
            }
            Architecture::Mlp { hidden: h } => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                let pre: Vec<f64> = (0..h).map(|j| b1[j] + dot(&w1[j * d..(j + 1) * d], x)).collect();
                let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
                let logits = (0..c).map(|k| b2[k] + dot(&w2[k * h..(k + 1) * h], &act)).collect();
                Trace {
                    logits,
                    hidden_pre: pre,
                    pool_argmax: Vec::new(),
                    pooled: Vec::new(),
                }
            }
            Architecture::SmallCnn { filters: f } => {
                let conv = self.conv_forward(x, f);
                let (pooled, argmax) = self.pool_forward(&conv, f);
                let offset = f * 9 * self.dims.channels + f;
                let n = pooled.len();
                let (w, b) = p[offset..].split_at(c * n);
                let logits = (0..c).map(|k| b[k] + dot(&w[k * n..(k + 1) * n], &pooled)).collect();
                Trace {
                    logits,
                    hidden_pre: conv,
                    pool_argmax: argmax,
                    pooled,
                }
            }
        }
    }

    /// Pre-activation conv output, layout `(row, col, filter)`.
    fn conv_forward(&self, x: &[f64], filters: usize) -> Vec<f64> {
        let Dims {
            height,
            width,
            channels,
        } = self.dims;
        let kernel = &self.params[..filters * 9 * channels];
        let bias = &self.params[filters * 9 * channels..filters * 9 * channels + filters];
        let mut out = vec![0.0; height * width * filters];
        for r in 0..height {
            for col in 0..width {
                let o = &mut out[(r * width + col) * filters..(r * width + col + 1) * filters];
                o.copy_from_slice(bias);
                for dr in 0..3 {
                    let sr = r as isize + dr as isize - 1;
                    if sr < 0 || sr >= height as isize {
                        continue;
                    }
                    for dc in 0..3 {
                        let sc = col as isize + dc as isize - 1;
                        if sc < 0 || sc >= width as isize {
                            continue;
                        }
                        let px = &x[(sr as usize * width + sc as usize) * channels..][..channels];
                        for (fi, ov) in o.iter_mut().enumerate() {
                            let k = &kernel[((fi * 3 + dr) * 3 + dc) * channels..][..channels];
                            *ov += dot(k, px);
                        }
                    }
                }
            }
        }
        out
    }

    /// ReLU then 2x2 max-pool; ties go to the first window element.
    fn pool_forward(&self, conv: &[f64], filters: usize) -> (Vec<f64>, Vec<usize>) {
        let (ph, pw) = (self.dims.height / 2, self.dims.width / 2);
        let width = self.dims.width;
        let mut pooled = vec![0.0; ph * pw * filters];
        let mut argmax = vec![0; ph * pw * filters];
        for pr in 0..ph {
            for pc in 0..pw {
                for fi in 0..filters {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((2 * pr + dr) * width + 2 * pc + dc) * filters + fi;
                        let v = conv[idx].max(0.0);
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                    let o = (pr * pw + pc) * filters + fi;
                    pooled[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        (pooled, argmax)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).logits)
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Cross-entropy `-ln p[y]`.
    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        Ok(cross_entropy(&self.logits(x)?, y))
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes {
            return Err(Error::Contract(format!("label {y} >= class count {}", self.classes)));
        }
        Ok(())
    }

    /// Backward pass for one sample. Adds `scale * dloss/dparams` into
    /// `param_grad` when given and returns the loss plus, when requested,
    /// `dloss/dx`.
    fn backward(
        &self,
        x: &[f64],
        y: usize,
        scale: f64,
        mut param_grad: Option<&mut [f64]>,
        want_input: bool,
    ) -> (f64, Option<Vec<f64>>) {
        let d = self.dims.len();
        let c = self.classes;
        let p = &self.params;
        let tr = self.trace(x);
        let probs = softmax(&tr.logits);
        let loss = cross_entropy(&tr.logits, y);
        let mut dl = probs;
        dl[y] -= 1.0;

        match self.arch {
            Architecture::SoftmaxRegression => {
                let w = &p[..c * d];
                if let Some(g) = param_grad.as_deref_mut() {
                    let (gw, gb) = g.split_at_mut(c * d);
                    for k in 0..c {
                        let s = scale * dl[k];
                        axpy(s, x, &mut gw[k * d..(k + 1) * d]);
                        gb[k] += s;
                    }
                }
                let dx = want_input.then(|| {
                    let mut dx = vec![0.0; d];
                    for k in 0..c {
                        axpy(dl[k], &w[k * d..(k + 1) * d], &mut dx);
                    }
                    dx
                });
                (loss, dx)
            }
            Architecture::Mlp { hidden: h } => {
                let w1 = &p[..h * d];
                let w2 = &p[h * d + h..h * d + h + c * h];
                let act: Vec<f64> = tr.hidden_pre.iter().map(|&v| v.max(0.0)).collect();
                let mut dz = vec![0.0; h];
                for k in 0..c {
                    axpy(dl[k], &w2[k * h..(k + 1) * h], &mut dz);
                }
                for (g, &pre) in dz.iter_mut().zip(&tr.hidden_pre) {
                    if pre <= 0.0 {
                        *g = 0.0;
                    }
                }
                if let Some(g) = param_grad.as_deref_mut() {
                    let (gw1, rest) = g.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(c * h);
                    for j in 0..h {
                        if dz[j] != 0.0 {
                            axpy(scale * dz[j], x, &mut gw1[j * d..(j + 1) * d]);
                        }
                        gb1[j] += scale * dz[j];
                    }
                    for k in 0..c {
                        axpy(scale * dl[k], &act, &mut gw2[k * h..(k + 1) * h]);
                        gb2[k] += scale * dl[k];
                    }
                }
                let dx = want_input.then(|| {
                    let mut dx = vec![0.0; d];
                    for j in 0..h {
                        if dz[j] != 0.0 {
                            axpy(dz[j], &w1[j * d..(j + 1) * d], &mut dx);
                        }
                    }
                    dx
                });
                (loss, dx)
            }
            Architecture::SmallCnn { filters: f } => {
                let Dims {
                    height,
                    width,
                    channels,
                } = self.dims;
                let klen = f * 9 * channels;
                let n = tr.pooled.len();
                let w = &p[klen + f..klen + f + c * n];
                let mut dpool = vec![0.0; n];
                for k in 0..c {
                    axpy(dl[k], &w[k * n..(k + 1) * n], &mut dpool);
                }
                // Route through max-pool and ReLU.
                let mut dconv = vec![0.0; height * width * f];
                for (o, &idx) in tr.pool_argmax.iter().enumerate() {
                    if tr.hidden_pre[idx] > 0.0 {
                        dconv[idx] += dpool[o];
                    }
                }
                if let Some(g) = param_grad.as_deref_mut() {
                    let (gk, rest) = g.split_at_mut(klen);
                    let (gbk, rest) = rest.split_at_mut(f);
                    let (gw, gb) = rest.split_at_mut(c * n);
                    for k in 0..c {
                        axpy(scale * dl[k], &tr.pooled, &mut gw[k * n..(k + 1) * n]);
                        gb[k] += scale * dl[k];
                    }
                    for r in 0..height {
                        for col in 0..width {
                            let dz = &dconv[(r * width + col) * f..][..f];
                            if dz.iter().all(|&v| v == 0.0) {
                                continue;
                            }
                            for (fi, &g) in dz.iter().enumerate() {
                                gbk[fi] += scale * g;
                            }
                            for dr in 0..3 {
                                let sr = r as isize + dr as isize - 1;
                                if sr < 0 || sr >= height as isize {
                                    continue;
                                }
                                for dc in 0..3 {
                                    let sc = col as isize + dc as isize - 1;
                                    if sc < 0 || sc >= width as isize {
                                        continue;
                                    }
                                    let px = &x[(sr as usize * width + sc as usize) * channels..][..channels];
                                    for (fi, &g) in dz.iter().enumerate() {
                                        if g != 0.0 {
                                            let kk = &mut gk[((fi * 3 + dr) * 3 + dc) * channels..][..channels];
                                            axpy(scale * g, px, kk);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                let dx = want_input.then(|| {
                    let kernel = &p[..klen];
                    let mut dx = vec![0.0; d];
                    for r in 0..height {
                        for col in 0..width {
                            let dz = &dconv[(r * width + col) * f..][..f];
                            if dz.iter().all(|&v| v == 0.0) {
                                continue;
                            }
                            for dr in 0..3 {
                                let sr = r as isize + dr as isize - 1;
                                if sr < 0 || sr >= height as isize {
                                    continue;
                                }
                                for dc in 0..3 {
                                    let sc = col as isize + dc as isize - 1;
                                    if sc < 0 || sc >= width as isize {
                                        continue;
                                    }
                                    let base = (sr as usize * width + sc as usize) * channels;
                                    for (fi, &g) in dz.iter().enumerate() {
                                        if g != 0.0 {
                                            let kk = &kernel[((fi * 3 + dr) * 3 + dc) * channels..][..channels];
                                            axpy(g, kk, &mut dx[base..base + channels]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                    dx
                });
                (loss, dx)
            }
        }
    }

    /// Loss and `dloss/dx` for one sample.
    pub fn grad_input(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.check_label(y)?;
        let (loss, dx) = self.backward(x, y, 1.0, None, true);
        Ok((loss, dx.expect("input gradient requested")))
    }

    /// Summed loss and summed parameter gradient over a batch.
    pub fn grad_params(&self, xs: &[&[f64]], ys: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.params.len()];
        let loss = self.accumulate_grad(xs, ys, 1.0, &mut g)?;
        Ok((loss, g))
    }

    /// Adds `scale * sum_i dloss_i/dparams` to `grad`; returns the summed loss.
    pub fn accumulate_grad(&self, xs: &[&[f64]], ys: &[usize], scale: f64, grad: &mut [f64]) -> Result<f64> {
        if xs.len() != ys.len() {
            return Err(Error::Dimension("batch inputs and labels differ in length".into()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Dimension("gradient buffer has the wrong length".into()));
        }
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            self.check_label(y)?;
            total += self.backward(x, y, scale, Some(grad), false).0;
        }
        Ok(total)
    }

    /// Predicted class; ties resolve to the smallest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// `-ln softmax(logits)[y]` via log-sum-exp.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    (lse - logits[y]).max(0.0)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
