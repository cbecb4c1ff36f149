//! Householder QR.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative tolerance below which a diagonal entry of `R` marks a dependent column.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Thin QR of an `m x n` matrix (`m >= n`) with full column rank.
///
/// Returns `Q` (`m x n`, orthonormal columns) and upper-triangular `R`
/// (`n x n`) with a nonnegative diagonal.
pub fn qr_decompose(a: &Tensor) -> Result<(Tensor, Tensor)> {
    qr_with_tolerance(a, RANK_TOLERANCE)
}

pub(crate) fn qr_with_tolerance(a: &Tensor, tol: f64) -> Result<(Tensor, Tensor)> {
    let (m, n) = a.dims2()?;
    if m < n {
        return Err(Error::Dimension(format!("qr needs rows >= cols, got {m}x{n}")));
    }
    let col_norms: Vec<f64> = (0..n)
        .map(|j| a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();

    // Column-major working copy; reflectors stored separately.
    let mut work: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n {
        let x = &work[k][k..];
        let alpha = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = x.to_vec();
        // Reflect x onto -sign(x0)·|x|·e1 for stability; signs are fixed below.
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for col in work.iter_mut().skip(k) {
                let seg = &mut col[k..];
                let proj = 2.0 * seg.iter().zip(&v).map(|(s, t)| s * t).sum::<f64>() / vnorm2;
                for (s, t) in seg.iter_mut().zip(&v) {
                    *s -= proj * t;
                }
            }
        }
        reflectors.push(v);
        let diag = work[k][k].abs();
        if diag <= tol * col_norms[k].max(f64::MIN_POSITIVE) || col_norms[k] == 0.0 {
            return Err(Error::RankDeficient {
                column: k,
                residual: diag,
                norm: col_norms[k],
            });
        }
    }

    // R from the upper triangle of the working copy.
    let mut r = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..=j {
            r[i * n + j] = work[j][i];
        }
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of the identity.
    let mut q_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for (k, v) in reflectors.iter().enumerate().rev() {
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in q_cols.iter_mut() {
            let seg = &mut col[k..];
            let proj = 2.0 * seg.iter().zip(v).map(|(s, t)| s * t).sum::<f64>() / vnorm2;
            for (s, t) in seg.iter_mut().zip(v) {
                *s -= proj * t;
            }
        }
    }

    // Flip signs so diag(R) >= 0.
    for k in 0..n {
        if r[k * n + k] < 0.0 {
            for j in k..n {
                r[k * n + j] = -r[k * n + j];
            }
            for v in q_cols[k].iter_mut() {
                *v = -*v;
            }
        }
    }

    let mut q = vec![0.0; m * n];
    for (j, col) in q_cols.iter().enumerate() {
        for i in 0..m {
            q[i * n + j] = col[i];
        }
    }
    Ok((Tensor::new(vec![m, n], q)?, Tensor::new(vec![n, n], r)?))
}

/// `max |QᵀQ - I|`.
pub fn orthogonality_residual(q: &Tensor) -> Result<f64> {
    let qtq = crate::tensor::matmul(&q.transpose()?, q)?;
    let n = q.dims2()?.1;
    Ok(qtq.max_abs_diff(&Tensor::identity(n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, SeededRng};
    use crate::tensor::matmul;

    #[test]
    fn identity_factors_trivially() {
        let (q, r) = qr_decompose(&Tensor::identity(4)).unwrap();
        assert!(q.max_abs_diff(&Tensor::identity(4)) < 1e-15);
        assert!(r.max_abs_diff(&Tensor::identity(4)) < 1e-15);
    }

    #[test]
    fn single_column_normalizes() {
        let a = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let (q, r) = qr_decompose(&a).unwrap();
        assert!((q.data()[0] - 0.6).abs() < 1e-15);
        assert!((q.data()[1] - 0.8).abs() < 1e-15);
        assert!((r.data()[0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn random_tall_residuals() {
        let a = standard_normal(&mut SeededRng::new(11), &[8, 3]).unwrap();
        let (q, r) = qr_decompose(&a).unwrap();
        assert!(orthogonality_residual(&q).unwrap() < 1e-10);
        assert!(matmul(&q, &r).unwrap().max_abs_diff(&a) < 1e-10);
        for i in 0..3 {
            assert!(r.at(i, i) >= 0.0);
            for j in 0..i {
                assert_eq!(r.at(i, j), 0.0);
            }
        }
    }

    #[test]
    fn dependent_columns_rejected() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(qr_decompose(&a), Err(Error::RankDeficient { column: 1, .. })));
    }

    #[test]
    fn wide_matrix_rejected() {
        assert!(matches!(qr_decompose(&Tensor::zeros(&[2, 3])), Err(Error::Dimension(_))));
    }
}
