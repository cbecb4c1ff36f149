use super::Kernel;
use crate::error::{Error, Result};
use crate::image::{Dims, Image};

/// Gaussian blur with an odd `kh x kw` kernel and edge replication.
///
/// Square kernels run as two 1-D passes; other shapes use the full 2-D kernel.
pub fn gaussian_blur(img: &Image, kh: usize, kw: usize, sigma: f64) -> Result<Image> {
    let out = if kh == kw {
        let k1 = gaussian_1d(kh, sigma)?;
        let tmp = convolve_raw(img.pixels(), img.dims(), &Kernel::from_values(1, kw, k1.clone()));
        convolve_raw(&tmp, img.dims(), &Kernel::from_values(kh, 1, k1))
    } else {
        convolve_raw(img.pixels(), img.dims(), &Kernel::gaussian(kh, kw, sigma)?)
    };
    Image::new(img.dims(), out)
}

fn gaussian_1d(len: usize, sigma: f64) -> Result<Vec<f64>> {
    Ok(Kernel::gaussian(1, len, sigma)?.values)
}

/// Correlation of a channel-last buffer with `kernel`, edge-replicated, no clamping.
pub fn convolve_raw(pixels: &[f64], d: Dims, kernel: &Kernel) -> Vec<f64> {
    let (ar, ac) = kernel.anchor();
    let mut out = vec![0.0; d.len()];
    for r in 0..d.height {
        for c in 0..d.width {
            for ch in 0..d.channels {
                let mut acc = 0.0;
                for kr in 0..kernel.height {
                    let sr = (r as isize + kr as isize - ar as isize).clamp(0, d.height as isize - 1) as usize;
                    for kc in 0..kernel.width {
                        let w = kernel.values[kr * kernel.width + kc];
                        let sc = (c as isize + kc as isize - ac as isize).clamp(0, d.width as isize - 1) as usize;
                        acc += w * pixels[d.index(sr, sc, ch)];
                    }
                }
                out[d.index(r, c, ch)] = acc;
            }
        }
    }
    out
}

pub(crate) fn validate(kh: usize, kw: usize, sigma: f64) -> Result<()> {
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidParameter(format!("blur kernel must have odd dims, got {kh}x{kw}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("blur sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn constant_image_unchanged() {
        let img = Image::filled(Dims::new(9, 9, 3), 0.37);
        for (kh, kw) in [(5, 5), (55, 5), (3, 7)] {
            let out = gaussian_blur(&img, kh, kw, 1.3).unwrap();
            for (a, b) in out.pixels().iter().zip(img.pixels()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let d = Dims::new(11, 11, 1);
        let mut px = vec![0.0; d.len()];
        px[d.index(5, 5, 0)] = 1.0;
        let img = Image::new(d, px).unwrap();
        let sigma = 1.1;
        let out = gaussian_blur(&img, 5, 5, sigma).unwrap();
        // Direct evaluation of K exp(-(x²+y²)/2σ²) over the 5x5 support.
        let raw = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-2..=2).flat_map(|y| (-2..=2).map(move |x| raw(x as f64, y as f64))).sum();
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                let v = out.get((5 + dy) as usize, (5 + dx) as usize, 0);
                assert!((v - raw(dx as f64, dy as f64) / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_and_direct_paths_agree() {
        let mut rng = SeededRng::new(1);
        let d = Dims::new(10, 8, 3);
        let px: Vec<f64> = (0..d.len()).map(|_| rng.uniform(0.0, 1.0)).collect();
        let img = Image::new(d, px.clone()).unwrap();
        let sep = gaussian_blur(&img, 5, 5, 0.9).unwrap();
        let direct = convolve_raw(&px, d, &Kernel::gaussian(5, 5, 0.9).unwrap());
        for (a, b) in sep.pixels().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linearity() {
        let mut rng = SeededRng::new(2);
        let d = Dims::new(7, 7, 1);
        let k = Kernel::gaussian(5, 3, 1.0).unwrap();
        let x: Vec<f64> = (0..d.len()).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..d.len()).map(|_| rng.normal()).collect();
        let (a, b) = (0.7, -1.9);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = convolve_raw(&mix, d, &k);
        let bx = convolve_raw(&x, d, &k);
        let by = convolve_raw(&y, d, &k);
        for i in 0..d.len() {
            assert!((lhs[i] - (a * bx[i] + b * by[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn bad_parameters() {
        let img = Image::filled(Dims::new(4, 4, 1), 0.5);
        assert!(gaussian_blur(&img, 4, 5, 1.0).is_err());
        assert!(gaussian_blur(&img, 5, 5, 0.0).is_err());
    }
}
