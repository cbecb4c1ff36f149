//! Unlearnable perturbation generators and their application.
//!
//! Every generator except [`ops_noise`] produces fields bounded in ℓ∞ by the
//! budget's epsilon. Applying a perturbation adds it pixel-wise and clamps to
//! `[0, 1]`; labels are never touched.

mod ar;
mod errmax;
mod errmin;
mod ops;
mod pgd;
mod synthetic;
mod upr;

pub use ar::{ar_noise, ArFilter, ArSample};
pub use errmax::{errmax_noise, ErrMaxConfig, DEFAULT_TARGET_SHIFT};
pub use errmin::{errmin_noise, ErrMinConfig, ErrMinOutcome, RoundStat};
pub use ops::{ops_noise, OpsPixel};
pub use pgd::{pgd_perturb, Direction};
pub use synthetic::{synthetic_noise, SyntheticConfig};
pub use upr::{decode_upr, encode_upr, load_upr, save_upr, UPR_MAGIC};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::{Dims, Image};

/// 8/255, the customary ℓ∞ radius.
pub const DEFAULT_EPSILON: f64 = 8.0 / 255.0;

/// ℓ∞ budget with pixel range `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBudget {
    epsilon: f64,
}

impl PerturbationBudget {
    /// `epsilon = 0` is accepted as the degenerate no-op budget.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon must be in [0, 1], got {epsilon}")));
        }
        Ok(PerturbationBudget { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for PerturbationBudget {
    fn default() -> Self {
        PerturbationBudget {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    SampleWise,
    ClassWise,
}

/// Additive noise: one field per sample, or one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    mode: NoiseMode,
    dims: Dims,
    fields: Vec<Vec<f64>>,
    /// ℓ∞ bound the fields were generated under; `None` for unbounded edits.
    epsilon: Option<f64>,
}

impl Perturbation {
    pub fn new(mode: NoiseMode, dims: Dims, fields: Vec<Vec<f64>>, epsilon: Option<f64>) -> Result<Self> {
        if let Some(f) = fields.iter().find(|f| f.len() != dims.len()) {
            return Err(Error::Dimension(format!("field of {} values for {} images", f.len(), dims)));
        }
        if fields.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite perturbation value".into()));
        }
        Ok(Perturbation {
            mode,
            dims,
            fields,
            epsilon,
        })
    }

    pub fn zeros(mode: NoiseMode, dims: Dims, count: usize, epsilon: Option<f64>) -> Self {
        Perturbation {
            mode,
            dims,
            fields: vec![vec![0.0; dims.len()]; count],
            epsilon,
        }
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// Largest absolute value over all fields.
    pub fn linf(&self) -> f64 {
        self.fields.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Field used for sample `index` with label `label`.
    pub fn field_for(&self, index: usize, label: usize) -> &[f64] {
        match self.mode {
            NoiseMode::SampleWise => &self.fields[index],
            NoiseMode::ClassWise => &self.fields[label],
        }
    }

    /// Per-sample noise fields for a dataset (class-wise fields are repeated).
    pub fn expand(&self, ds: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
        self.check(ds)?;
        Ok((0..ds.len()).map(|i| self.field_for(i, ds.labels()[i]).to_vec()).collect())
    }

    fn check(&self, ds: &LabeledDataset) -> Result<()> {
        if ds.dims() != self.dims {
            return Err(Error::Dimension(format!("perturbation is {}, dataset is {}", self.dims, ds.dims())));
        }
        let expected = match self.mode {
            NoiseMode::SampleWise => ds.len(),
            NoiseMode::ClassWise => ds.class_count(),
        };
        if self.fields.len() != expected {
            return Err(Error::Contract(format!(
                "{:?} perturbation has {} fields, dataset needs {}",
                self.mode,
                self.fields.len(),
                expected
            )));
        }
        Ok(())
    }
}

/// `clamp(x + delta, 0, 1)` for every sample; labels unchanged.
pub fn apply(ds: &LabeledDataset, pert: &Perturbation) -> Result<LabeledDataset> {
    pert.check(ds)?;
    let images = crate::par::map_indexed(ds.len(), |i| {
        let img = &ds.images()[i];
        let delta = pert.field_for(i, ds.labels()[i]);
        let pixels = img.pixels().iter().zip(delta).map(|(x, d)| x + d).collect();
        Image::new(img.dims(), pixels)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ds.with_images(images)
}
