use crate::model::Classifier;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Increase the loss of the given label.
    Ascend,
    /// Decrease the loss of the given label.
    Descend,
}

/// Signed-gradient PGD on one input, starting from `delta0` (zeros when `None`).
///
/// After every step the perturbation is projected onto the ℓ∞ ball of radius
/// `epsilon` and then onto the set where `x + delta` stays in `[0, 1]`.
pub fn pgd_perturb(
    model: &Classifier,
    x: &[f64],
    label: usize,
    epsilon: f64,
    step_size: f64,
    steps: usize,
    direction: Direction,
    delta0: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let mut delta = delta0.map_or_else(|| vec![0.0; x.len()], <[f64]>::to_vec);
    let mut adv: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
    let sign = match direction {
        Direction::Ascend => 1.0,
        Direction::Descend => -1.0,
    };
    for _ in 0..steps {
        let (_, g) = model.grad_input(&adv, label)?;
        for i in 0..x.len() {
            let step = sign * step_size * signum(g[i]);
            let d = (delta[i] + step).clamp(-epsilon, epsilon);
            let v = (x[i] + d).clamp(0.0, 1.0);
            delta[i] = v - x[i];
            adv[i] = v;
        }
    }
    Ok(delta)
}

#[inline]
pub(crate) fn signum(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projects `delta` in place onto the ℓ∞ ball and the valid pixel range around `x`.
pub(crate) fn project(delta: &mut [f64], x: &[f64], epsilon: f64) {
    for (d, &xi) in delta.iter_mut().zip(x) {
        let c = d.clamp(-epsilon, epsilon);
        *d = (xi + c).clamp(0.0, 1.0) - xi;
    }
}
