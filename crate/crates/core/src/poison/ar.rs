//! Class-wise autoregressive noise processes.
//!
//! Each class owns a causal `side x side` window filter. Pixels are generated
//! in raster order per channel: the value at `(i, j)` is the weighted sum of
//! the other window entries (the window's bottom-right corner is `(i, j)`)
//! plus a Gaussian innovation. Pixels outside the image count as zero.

use serde::{Deserialize, Serialize};

use super::{NoiseMode, Perturbation, PerturbationBudget};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Dims;
use crate::rng::SeededRng;

/// Magnitude above which an AR field counts as blown up.
const OVERFLOW: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFilter {
    side: usize,
    /// `side² - 1` coefficients in raster order; the implicit last entry is -1.
    coeffs: Vec<f64>,
    /// Innovation standard deviation.
    sigma: f64,
}

/// One generated field and the innovations that drove it.
#[derive(Debug, Clone)]
pub struct ArSample {
    pub field: Vec<f64>,
    pub innovations: Vec<f64>,
}

impl ArFilter {
    pub fn new(side: usize, coeffs: Vec<f64>, sigma: f64) -> Result<Self> {
        if side < 2 || coeffs.len() != side * side - 1 {
            return Err(Error::InvalidParameter(format!(
                "AR filter of side {side} needs {} coefficients",
                (side * side).saturating_sub(1)
            )));
        }
        if !(sigma > 0.0) || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("AR filter needs finite coefficients and sigma > 0".into()));
        }
        Ok(ArFilter { side, coeffs, sigma })
    }

    /// Coefficients drawn from U(-0.4, 0.4), rescaled so their absolute values sum to `l1`.
    pub fn random(side: usize, l1: f64, rng: &mut SeededRng) -> Result<Self> {
        let mut coeffs: Vec<f64> = (0..side * side - 1).map(|_| rng.uniform(-0.4, 0.4)).collect();
        let total: f64 = coeffs.iter().map(|c| c.abs()).sum();
        if total > 0.0 {
            coeffs.iter_mut().for_each(|c| *c *= l1 / total);
        }
        ArFilter::new(side, coeffs, 1.0)
    }

    /// One random 3x3 filter (order 8, Σ|β| = 0.95) per class.
    pub fn per_class(classes: usize, rng: &mut SeededRng) -> Result<Vec<ArFilter>> {
        (0..classes).map(|_| ArFilter::random(3, 0.95, rng)).collect()
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Full filter `[β..., -1]` in raster order.
    pub fn kernel(&self) -> Vec<f64> {
        let mut k = self.coeffs.clone();
        k.push(-1.0);
        k
    }

    fn predict(&self, plane: &[f64], width: usize, i: usize, j: usize) -> f64 {
        let s = self.side;
        let mut acc = 0.0;
        for a in 0..s {
            for b in 0..s {
                if a == s - 1 && b == s - 1 {
                    continue;
                }
                let (Some(r), Some(c)) = ((i + a).checked_sub(s - 1), (j + b).checked_sub(s - 1)) else {
                    continue;
                };
                if c < width {
                    acc += self.coeffs[a * s + b] * plane[r * width + c];
                }
            }
        }
        acc
    }

    /// Runs the recurrence on a `height x width` plane for every channel.
    pub fn generate(&self, dims: Dims, rng: &mut SeededRng) -> Result<ArSample> {
        let plane = dims.height * dims.width;
        let mut field = vec![0.0; dims.len()];
        let mut innovations = vec![0.0; dims.len()];
        for ch in 0..dims.channels {
            let mut x = vec![0.0; plane];
            for i in 0..dims.height {
                for j in 0..dims.width {
                    let e = self.sigma * rng.normal();
                    let v = self.predict(&x, dims.width, i, j) + e;
                    if !v.is_finite() || v.abs() > OVERFLOW {
                        return Err(Error::Numerical("unstable AR filter: noise overflowed".into()));
                    }
                    x[i * dims.width + j] = v;
                    innovations[dims.index(i, j, ch)] = e;
                }
            }
            for (p, v) in x.iter().enumerate() {
                field[p * dims.channels + ch] = *v;
            }
        }
        Ok(ArSample { field, innovations })
    }

    /// Correlates `field` with `[β..., -1]` over causal windows, per channel.
    /// On a field produced by [`ArFilter::generate`] this is `-innovations`.
    pub fn filter_response(&self, field: &[f64], dims: Dims) -> Vec<f64> {
        let mut out = vec![0.0; dims.len()];
        for ch in 0..dims.channels {
            let plane: Vec<f64> = (0..dims.height * dims.width).map(|p| field[p * dims.channels + ch]).collect();
            for i in 0..dims.height {
                for j in 0..dims.width {
                    out[dims.index(i, j, ch)] = self.predict(&plane, dims.width, i, j) - plane[i * dims.width + j];
                }
            }
        }
        out
    }

    /// Innovations recovered from a generated field.
    pub fn residual(&self, field: &[f64], dims: Dims) -> Vec<f64> {
        self.filter_response(field, dims).into_iter().map(|v| -v).collect()
    }
}

/// Sample-wise fields from each sample's class filter, each rescaled to ℓ∞ = ε.
pub fn ar_noise(
    ds: &LabeledDataset,
    budget: PerturbationBudget,
    filters: &[ArFilter],
    rng: &mut SeededRng,
) -> Result<Perturbation> {
    if filters.len() != ds.class_count() {
        return Err(Error::Contract(format!(
            "{} AR filters for {} classes",
            filters.len(),
            ds.class_count()
        )));
    }
    let eps = budget.epsilon();
    let streams = rng.split_n(ds.len());
    let fields = crate::par::map_indexed(ds.len(), |i| {
        let mut r = streams[i].clone();
        let sample = filters[ds.labels()[i]].generate(ds.dims(), &mut r)?;
        let peak = sample.field.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { eps / peak } else { 0.0 };
        Ok(sample.field.into_iter().map(|v| v * scale).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Perturbation::new(NoiseMode::SampleWise, ds.dims(), fields, Some(eps))
}
