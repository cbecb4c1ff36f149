//! Central finite-difference checks against the analytic gradients.

use super::Classifier;
use crate::rng::SeededRng;
use crate::Result;

/// Worst disagreement found over the probed coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub coordinates: usize,
    pub max_relative: f64,
}

// Coordinates where both gradients are this small are compared absolutely;
// relative error is meaningless at the level of rounding noise.
const FLOOR: f64 = 1e-7;

fn relative(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn pick(len: usize, count: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx = rng.permutation(len);
    idx.truncate(count.min(len));
    idx
}

/// Compares `d loss / d params` with central differences of step `h` on
/// `count` random parameter coordinates.
pub fn check_params(model: &Classifier, x: &[f64], y: usize, h: f64, count: usize, rng: &mut SeededRng) -> Result<GradCheck> {
    let (_, g) = model.grad_params(&[x], &[y])?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let coords = pick(g.len(), count, rng);
    for &i in &coords {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = probe.loss(x, y)?;
        probe.params_mut()[i] = orig - h;
        let down = probe.loss(x, y)?;
        probe.params_mut()[i] = orig;
        worst = worst.max(relative(g[i], (up - down) / (2.0 * h)));
    }
    Ok(GradCheck { coordinates: coords.len(), max_relative: worst })
}

/// Same check for `d loss / d x`.
pub fn check_input(model: &Classifier, x: &[f64], y: usize, h: f64, count: usize, rng: &mut SeededRng) -> Result<GradCheck> {
    let (_, g) = model.grad_input(x, y)?;
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    let coords = pick(g.len(), count, rng);
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = model.loss(&probe, y)?;
        probe[i] = orig - h;
        let down = model.loss(&probe, y)?;
        probe[i] = orig;
        worst = worst.max(relative(g[i], (up - down) / (2.0 * h)));
    }
    Ok(GradCheck { coordinates: coords.len(), max_relative: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;
    use crate::model::Architecture;

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative(0.0, 0.0), 0.0);
        assert!(relative(1e-12, 2e-12) < 1e-4);
        assert!((relative(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn softmax_gradients_match() {
        let dims = Dims::new(4, 4, 3);
        let mut rng = SeededRng::new(2);
        let m = Classifier::new(Architecture::SoftmaxRegression, dims, 5, &mut rng).unwrap();
        let x: Vec<f64> = (0..dims.len()).map(|_| rng.uniform(0.0, 1.0)).collect();
        assert!(check_params(&m, &x, 3, 1e-5, 20, &mut rng).unwrap().max_relative < 1e-4);
        assert!(check_input(&m, &x, 3, 1e-5, 20, &mut rng).unwrap().max_relative < 1e-4);
    }
}
