//! Orthogonal projection: fit a linear probe to the protected set, then strip
//! the span of its class weight vectors from every image.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{orthogonality_residual, qr_decompose};
use crate::model::{Architecture, Classifier};
use crate::par;
use crate::tensor::Tensor;

/// Rows per parallel gradient chunk.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpaConfig {
    /// Full-batch gradient descent iterations for the probe.
    pub iterations: usize,
    pub lr: f64,
    /// L2 penalty on the probe weights.
    pub l2: f64,
    /// Whether the probe has a bias term. The projection never uses it.
    pub include_bias: bool,
}

impl Default for OpaConfig {
    fn default() -> Self {
        OpaConfig { iterations: 500, lr: 0.5, l2: 1e-4, include_bias: false }
    }
}

#[derive(Debug, Clone)]
pub struct OpaOutcome {
    pub data: LabeledDataset,
    /// Orthonormal basis of the removed subspace, `d x r`.
    pub basis: Tensor,
    /// Class columns dropped as linearly dependent.
    pub dropped: Vec<usize>,
    /// `max |QᵀQ - I|`.
    pub orthogonality: f64,
    /// Largest `|Qᵀx|` over projected images, before clamping.
    pub max_residual: f64,
    /// Largest change from projecting an already projected image, before clamping.
    pub max_idempotence: f64,
    pub probe_initial_loss: f64,
    pub probe_final_loss: f64,
}

/// Multinomial logistic probe from zero init; returns the `d x c` weight
/// matrix and the mean loss before and after training.
pub fn train_probe(ds: &LabeledDataset, cfg: &OpaConfig) -> Result<(Tensor, f64, f64)> {
    if ds.is_empty() {
        return Err(Error::Contract("probe needs a nonempty dataset".into()));
    }
    if !(cfg.lr > 0.0) || !(cfg.l2 >= 0.0) {
        return Err(Error::InvalidParameter("probe needs lr > 0 and l2 >= 0".into()));
    }
    let d = ds.dims().len();
    let c = ds.class_count();
    let mut model = Classifier::zeros(Architecture::SoftmaxRegression, ds.dims(), c)?;
    let n = ds.len();
    let chunks = n.div_ceil(CHUNK);
    let full_grad = |model: &Classifier| -> Result<(f64, Vec<f64>)> {
        let parts = par::map_indexed(chunks, |k| {
            let range = k * CHUNK..((k + 1) * CHUNK).min(n);
            let xs: Vec<&[f64]> = ds.images()[range.clone()].iter().map(Image::pixels).collect();
            let mut g = vec![0.0; model.params().len()];
            let loss = model.accumulate_grad(&xs, &ds.labels()[range], 1.0 / n as f64, &mut g)?;
            Ok::<_, Error>((loss, g))
        });
        let mut total = 0.0;
        let mut grad = vec![0.0; model.params().len()];
        for part in parts {
            let (loss, g) = part?;
            total += loss;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((total / n as f64, grad))
    };
    let mut initial = None;
    for _ in 0..cfg.iterations {
        let (loss, grad) = full_grad(&model)?;
        initial.get_or_insert(loss);
        let params = model.params_mut();
        for (p, g) in params[..c * d].iter_mut().zip(&grad[..c * d]) {
            *p -= cfg.lr * (g + cfg.l2 * *p);
        }
        if cfg.include_bias {
            for (p, g) in params[c * d..].iter_mut().zip(&grad[c * d..]) {
                *p -= cfg.lr * g;
            }
        }
    }
    let final_loss = full_grad(&model)?.0;
    let initial = initial.unwrap_or(final_loss);
    if !final_loss.is_finite() {
        return Err(Error::Numerical("probe loss is not finite".into()));
    }
    if cfg.iterations > 0 && final_loss >= initial {
        return Err(Error::Numerical(format!("probe did not converge: loss {initial} -> {final_loss}")));
    }
    // Storage is c x d row-major; the feature matrix has one column per class.
    let w = Tensor::new(vec![c, d], model.params()[..c * d].to_vec())?.transpose()?;
    Ok((w, initial, final_loss))
}

/// Keeps columns of `w` in order, skipping any that depend on those already kept.
fn independent_columns(w: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (d, c) = w.dims2()?;
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    let mut q = None;
    for j in 0..c {
        let mut trial = kept.clone();
        trial.push(w.column(j));
        let k = trial.len();
        let mut data = vec![0.0; d * k];
        for (col, v) in trial.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                data[i * k + col] = *x;
            }
        }
        match qr_decompose(&Tensor::new(vec![d, k], data)?) {
            Ok((qj, _)) => {
                kept = trial;
                q = Some(qj);
            }
            Err(Error::RankDeficient { .. }) => dropped.push(j),
            Err(e) => return Err(e),
        }
    }
    let q = q.ok_or_else(|| Error::Numerical("probe weights are all zero".into()))?;
    Ok((q, dropped))
}

fn project(q: &Tensor, x: &[f64]) -> (Vec<f64>, f64) {
    let (d, r) = q.dims2().expect("basis is a matrix");
    let qd = q.data();
    let mut coef = vec![0.0; r];
    for i in 0..d {
        for (k, c) in coef.iter_mut().enumerate() {
            *c += qd[i * r + k] * x[i];
        }
    }
    let mut out = x.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        for (k, c) in coef.iter().enumerate() {
            *o -= qd[i * r + k] * c;
        }
    }
    let mut residual: f64 = 0.0;
    for k in 0..r {
        let s: f64 = (0..d).map(|i| qd[i * r + k] * out[i]).sum();
        residual = residual.max(s.abs());
    }
    (out, residual)
}

/// Projects every image onto the orthogonal complement of the probe's weight
/// span and clamps to `[0, 1]`. Labels and size are unchanged.
pub fn opa_break(u: &LabeledDataset, cfg: &OpaConfig) -> Result<OpaOutcome> {
    let (w, probe_initial_loss, probe_final_loss) = train_probe(u, cfg)?;
    let (basis, dropped) = independent_columns(&w)?;
    if !dropped.is_empty() {
        log::warn!("opa: dropped dependent probe columns {dropped:?}");
    }
    let orthogonality = orthogonality_residual(&basis)?;
    let dims = u.dims();
    let results = par::map(u.images(), |img| {
        let (p, residual) = project(&basis, img.pixels());
        let (pp, _) = project(&basis, &p);
        let idem = p.iter().zip(&pp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (Image::new(dims, p), residual, idem)
    });
    let mut images = Vec::with_capacity(u.len());
    let (mut max_residual, mut max_idempotence) = (0.0f64, 0.0f64);
    for (img, r, i) in results {
        images.push(img?);
        max_residual = max_residual.max(r);
        max_idempotence = max_idempotence.max(i);
    }
    Ok(OpaOutcome {
        data: u.with_images(images)?,
        basis,
        dropped,
        orthogonality,
        max_residual,
        max_idempotence,
        probe_initial_loss,
        probe_final_loss,
    })
}
