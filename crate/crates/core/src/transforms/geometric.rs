//! Inverse-mapped geometric transforms.
//!
//! Affine maps sample the source bilinearly with zero fill outside the image.
//! Coordinates are pixel centers; rotation, zoom and shear act about the image
//! center. Positive angles rotate counter-clockwise as displayed (rows grow
//! downward).

use crate::error::{Error, Result};
use crate::image::Image;

fn bilinear(img: &Image, x: f64, y: f64, ch: usize) -> f64 {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let fetch = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h || c >= w {
            0.0
        } else {
            img.get(r as usize, c as usize, ch)
        }
    };
    let mut acc = 0.0;
    for (dr, wy) in [(0, 1.0 - fy), (1, fy)] {
        if wy == 0.0 {
            continue;
        }
        for (dc, wx) in [(0, 1.0 - fx), (1, fx)] {
            if wx == 0.0 {
                continue;
            }
            acc += wy * wx * fetch(y0 + dr, x0 + dc);
        }
    }
    acc
}

/// Output pixel `(x, y)` takes the source value at `map(x - cx, y - cy) + (cx, cy)`.
fn inverse_map(img: &Image, map: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let d = img.dims();
    let cx = (d.width as f64 - 1.0) / 2.0;
    let cy = (d.height as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; d.len()];
    for r in 0..d.height {
        for c in 0..d.width {
            let (sx, sy) = map(c as f64 - cx, r as f64 - cy);
            for ch in 0..d.channels {
                out[d.index(r, c, ch)] = bilinear(img, sx + cx, sy + cy, ch);
            }
        }
    }
    Image::new(d, out).expect("dims preserved")
}

pub fn rotate(img: &Image, deg: f64) -> Result<Image> {
    if !(deg.abs() <= 180.0) {
        return Err(Error::InvalidParameter(format!("rotation {deg} outside [-180, 180]")));
    }
    if deg == 0.0 {
        return Ok(img.clone());
    }
    let (s, c) = deg.to_radians().sin_cos();
    Ok(inverse_map(img, |x, y| (c * x - s * y, s * x + c * y)))
}

/// Translation by `dx * width` columns and `dy * height` rows.
pub fn shift(img: &Image, dx: f64, dy: f64) -> Result<Image> {
    if !(dx.abs() <= 0.5 && dy.abs() <= 0.5) {
        return Err(Error::InvalidParameter(format!("shift ({dx}, {dy}) outside [-0.5, 0.5]")));
    }
    let tx = dx * img.width() as f64;
    let ty = dy * img.height() as f64;
    Ok(inverse_map(img, |x, y| (x - tx, y - ty)))
}

/// Scales about the center; `factor > 1` zooms in.
pub fn zoom(img: &Image, factor: f64) -> Result<Image> {
    if !(factor > 0.2 && factor < 5.0) {
        return Err(Error::InvalidParameter(format!("zoom factor {factor} outside (0.2, 5)")));
    }
    Ok(inverse_map(img, |x, y| (x / factor, y / factor)))
}

/// Horizontal shear: column offset proportional to the row's distance from center.
pub fn shear(img: &Image, factor: f64) -> Result<Image> {
    if !(factor.abs() <= 1.0) {
        return Err(Error::InvalidParameter(format!("shear factor {factor} outside [-1, 1]")));
    }
    Ok(inverse_map(img, |x, y| (x - factor * y, y)))
}

pub fn hflip(img: &Image) -> Image {
    let d = img.dims();
    let mut out = vec![0.0; d.len()];
    for r in 0..d.height {
        for c in 0..d.width {
            for ch in 0..d.channels {
                out[d.index(r, c, ch)] = img.get(r, d.width - 1 - c, ch);
            }
        }
    }
    Image::new(d, out).expect("dims preserved")
}

/// Catmull-Rom cubic weight (a = -0.5).
fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t.powi(3) - (A + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        A * t.powi(3) - 5.0 * A * t.powi(2) + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Trims `margin` pixels from every edge, then resizes back with bicubic interpolation.
pub fn crop_resize(img: &Image, margin: usize) -> Result<Image> {
    let d = img.dims();
    if 2 * margin >= d.height.min(d.width) {
        return Err(Error::InvalidParameter(format!("crop margin {margin} too large for {d}")));
    }
    if margin == 0 {
        return Ok(img.clone());
    }
    let ch_ = d.height - 2 * margin;
    let cw = d.width - 2 * margin;
    let sy = ch_ as f64 / d.height as f64;
    let sx = cw as f64 / d.width as f64;
    let fetch = |r: isize, c: isize, ch: usize| {
        let r = r.clamp(0, ch_ as isize - 1) as usize + margin;
        let c = c.clamp(0, cw as isize - 1) as usize + margin;
        img.get(r, c, ch)
    };
    let mut out = vec![0.0; d.len()];
    for r in 0..d.height {
        let fy = (r as f64 + 0.5) * sy - 0.5;
        let y0 = fy.floor();
        let ty = fy - y0;
        let wy: Vec<f64> = (-1..=2).map(|k| cubic(ty - k as f64)).collect();
        for c in 0..d.width {
            let fx = (c as f64 + 0.5) * sx - 0.5;
            let x0 = fx.floor();
            let tx = fx - x0;
            let wx: Vec<f64> = (-1..=2).map(|k| cubic(tx - k as f64)).collect();
            for ch in 0..d.channels {
                let mut acc = 0.0;
                for (i, wyv) in wy.iter().enumerate() {
                    for (j, wxv) in wx.iter().enumerate() {
                        acc += wyv * wxv * fetch(y0 as isize + i as isize - 1, x0 as isize + j as isize - 1, ch);
                    }
                }
                out[d.index(r, c, ch)] = acc;
            }
        }
    }
    Image::new(d, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;
    use crate::rng::SeededRng;

    fn pattern(d: Dims) -> Image {
        Image::new(d, (0..d.len()).map(|i| i as f64 / d.len() as f64).collect()).unwrap()
    }

    fn close(a: &Image, b: &Image, tol: f64) -> bool {
        a.pixels().iter().zip(b.pixels()).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn neutral_parameters_are_identity() {
        let img = pattern(Dims::new(6, 5, 3));
        assert!(close(&rotate(&img, 0.0).unwrap(), &img, 1e-12));
        assert!(close(&shift(&img, 0.0, 0.0).unwrap(), &img, 1e-12));
        assert!(close(&zoom(&img, 1.0).unwrap(), &img, 1e-12));
        assert!(close(&shear(&img, 0.0).unwrap(), &img, 1e-12));
        assert!(close(&crop_resize(&img, 0).unwrap(), &img, 1e-12));
    }

    #[test]
    fn hflip_involution() {
        let img = pattern(Dims::new(4, 7, 3));
        assert_eq!(hflip(&hflip(&img)), img);
        assert_ne!(hflip(&img), img);
    }

    #[test]
    fn right_angle_rotation_is_a_permutation() {
        let d = Dims::new(4, 4, 1);
        let img = pattern(d);
        let out = rotate(&img, 90.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!((out.get(r, c, 0) - img.get(c, 3 - r, 0)).abs() < 1e-12);
            }
        }
        let back = rotate(&out, -90.0).unwrap();
        assert!(close(&back, &img, 1e-12));
        let half = rotate(&img, 180.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert!((half.get(r, c, 0) - img.get(3 - r, 3 - c, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integer_shift_moves_pixels() {
        let d = Dims::new(4, 4, 1);
        let img = pattern(d);
        let out = shift(&img, 0.25, 0.0).unwrap();
        for r in 0..4 {
            assert_eq!(out.get(r, 0, 0), 0.0);
            for c in 1..4 {
                assert!((out.get(r, c, 0) - img.get(r, c - 1, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_parameters() {
        let img = pattern(Dims::new(4, 4, 1));
        assert!(rotate(&img, 181.0).is_err());
        assert!(shift(&img, 0.6, 0.0).is_err());
        assert!(zoom(&img, 0.1).is_err());
        assert!(zoom(&img, 5.0).is_err());
        assert!(crop_resize(&img, 2).is_err());
    }

    #[test]
    fn crop_resize_of_constant_is_constant() {
        let img = Image::filled(Dims::new(16, 16, 3), 0.6);
        let out = crop_resize(&img, 5).unwrap();
        assert!(close(&out, &img, 1e-12));
    }

    #[test]
    fn outputs_stay_in_range() {
        let mut rng = SeededRng::new(8);
        let d = Dims::new(8, 8, 3);
        for _ in 0..20 {
            let img = Image::new(d, (0..d.len()).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
            for out in [
                rotate(&img, 33.0).unwrap(),
                zoom(&img, 0.7).unwrap(),
                shear(&img, 0.4).unwrap(),
                crop_resize(&img, 2).unwrap(),
            ] {
                assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
