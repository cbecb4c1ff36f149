use serde::{Deserialize, Serialize};

use super::{NoiseMode, Perturbation, PerturbationBudget};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Dims;
use crate::rng::SeededRng;

/// Patch-constant class-wise noise. For an `s x s` image with `p x p`
/// patches there are `k = s² / p²` patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub patch: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { patch: 4 }
    }
}

impl SyntheticConfig {
    /// Number of patches `k` for the given image size.
    pub fn patch_count(&self, dims: Dims) -> Result<usize> {
        let p = self.patch;
        if p == 0 || dims.height % p != 0 || dims.width % p != 0 {
            return Err(Error::InvalidParameter(format!(
                "patch side {p} does not divide the {}x{} image plane",
                dims.height, dims.width
            )));
        }
        Ok((dims.height / p) * (dims.width / p))
    }
}

pub fn synthetic_noise(
    ds: &LabeledDataset,
    budget: PerturbationBudget,
    cfg: SyntheticConfig,
    rng: &mut SeededRng,
) -> Result<Perturbation> {
    let dims = ds.dims();
    let k = cfg.patch_count(dims)?;
    let per_row = dims.width / cfg.patch;
    let eps = budget.epsilon();
    let fields = (0..ds.class_count())
        .map(|_| {
            let eta = rng.normal_vec(k);
            let peak = eta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let scale = if peak > 0.0 { eps / peak } else { 0.0 };
            let mut field = vec![0.0; dims.len()];
            for r in 0..dims.height {
                for c in 0..dims.width {
                    let v = eta[(r / cfg.patch) * per_row + c / cfg.patch] * scale;
                    for ch in 0..dims.channels {
                        field[dims.index(r, c, ch)] = v;
                    }
                }
            }
            field
        })
        .collect();
    Perturbation::new(NoiseMode::ClassWise, dims, fields, Some(eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_toy, ToySpec};

    fn ds() -> LabeledDataset {
        let spec = ToySpec {
            train: 40,
            val: 10,
            test: 10,
            ..ToySpec::default()
        };
        generate_toy(&spec).unwrap().0
    }

    #[test]
    fn sixteen_patches_on_sixteen_pixels() {
        assert_eq!(SyntheticConfig { patch: 4 }.patch_count(Dims::new(16, 16, 3)).unwrap(), 16);
        assert!(SyntheticConfig { patch: 5 }.patch_count(Dims::new(16, 16, 3)).is_err());
    }

    #[test]
    fn patches_are_constant_and_peak_is_epsilon() {
        let ds = ds();
        let p = synthetic_noise(&ds, PerturbationBudget::default(), SyntheticConfig::default(), &mut SeededRng::new(3))
            .unwrap();
        let d = ds.dims();
        for f in p.fields() {
            let peak = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!((peak - 8.0 / 255.0).abs() < 1e-15);
            for pr in 0..4 {
                for pc in 0..4 {
                    let first = f[d.index(pr * 4, pc * 4, 0)];
                    for r in 0..4 {
                        for c in 0..4 {
                            for ch in 0..3 {
                                assert_eq!(f[d.index(pr * 4 + r, pc * 4 + c, ch)], first);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn class_wise_sharing() {
        let ds = ds();
        let p = synthetic_noise(&ds, PerturbationBudget::default(), SyntheticConfig::default(), &mut SeededRng::new(3))
            .unwrap();
        let e = p.expand(&ds).unwrap();
        let (a, b) = (0..ds.len())
            .flat_map(|i| (i + 1..ds.len()).map(move |j| (i, j)))
            .find(|&(i, j)| ds.labels()[i] == ds.labels()[j])
            .unwrap();
        assert_eq!(e[a], e[b]);
        assert_ne!(p.fields()[0], p.fields()[1]);
    }
}
