use serde::{Deserialize, Serialize};

use super::{NoiseMode, Perturbation};
use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::rng::SeededRng;

/// The saturated pixel shared by every image of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpsPixel {
    pub row: usize,
    pub col: usize,
    pub channel: usize,
    pub value: f64,
}

/// One-pixel shortcut: per class, one seeded location driven to 1 (even
/// classes) or 0 (odd classes). Not ε-bounded.
pub fn ops_noise(ds: &LabeledDataset, rng: &mut SeededRng) -> Result<(Perturbation, Vec<OpsPixel>)> {
    let dims = ds.dims();
    let pixels: Vec<OpsPixel> = (0..ds.class_count())
        .map(|k| OpsPixel {
            row: rng.below(dims.height),
            col: rng.below(dims.width),
            channel: rng.below(dims.channels),
            value: if k % 2 == 0 { 1.0 } else { 0.0 },
        })
        .collect();
    let fields = pixels
        .iter()
        .map(|p| {
            let mut f = vec![0.0; dims.len()];
            // ±1 saturates after the [0, 1] clamp regardless of the original value.
            f[dims.index(p.row, p.col, p.channel)] = if p.value == 1.0 { 1.0 } else { -1.0 };
            f
        })
        .collect();
    Ok((Perturbation::new(NoiseMode::ClassWise, dims, fields, None)?, pixels))
}
