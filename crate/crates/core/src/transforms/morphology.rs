//! Flat-kernel grayscale morphology: erosion is a windowed minimum, dilation
//! a windowed maximum, per channel, with edge replication at the border.

use super::Kernel;
use crate::error::{Error, Result};
use crate::image::Image;

fn check(kernel: &Kernel, iterations: usize) -> Result<()> {
    if kernel.height % 2 == 0 || kernel.width % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "morphology kernel must have odd dims, got {}x{}",
            kernel.height, kernel.width
        )));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("morphology needs at least one iteration".into()));
    }
    Ok(())
}

fn windowed(img: &Image, kernel: &Kernel, pick: fn(f64, f64) -> f64, init: f64) -> Image {
    let d = img.dims();
    let (ar, ac) = kernel.anchor();
    let mut out = vec![0.0; d.len()];
    for r in 0..d.height {
        for c in 0..d.width {
            for ch in 0..d.channels {
                let mut acc = init;
                for kr in 0..kernel.height {
                    for kc in 0..kernel.width {
                        if kernel.values[kr * kernel.width + kc] <= 0.0 {
                            continue;
                        }
                        let sr = (r as isize + kr as isize - ar as isize).clamp(0, d.height as isize - 1) as usize;
                        let sc = (c as isize + kc as isize - ac as isize).clamp(0, d.width as isize - 1) as usize;
                        acc = pick(acc, img.get(sr, sc, ch));
                    }
                }
                out[d.index(r, c, ch)] = acc;
            }
        }
    }
    Image::new(d, out).expect("morphology preserves dims")
}

pub fn erode(img: &Image, kernel: &Kernel, iterations: usize) -> Result<Image> {
    check(kernel, iterations)?;
    let mut cur = img.clone();
    for _ in 0..iterations {
        cur = windowed(&cur, kernel, f64::min, f64::INFINITY);
    }
    Ok(cur)
}

pub fn dilate(img: &Image, kernel: &Kernel, iterations: usize) -> Result<Image> {
    check(kernel, iterations)?;
    let mut cur = img.clone();
    for _ in 0..iterations {
        cur = windowed(&cur, kernel, f64::max, f64::NEG_INFINITY);
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;
    use crate::rng::SeededRng;

    fn impulse() -> Image {
        let d = Dims::new(5, 5, 1);
        let mut px = vec![0.0; 25];
        px[12] = 1.0;
        Image::new(d, px).unwrap()
    }

    #[test]
    fn constant_image_is_fixed() {
        let img = Image::filled(Dims::new(6, 7, 3), 0.42);
        let k = Kernel::ones(3, 3);
        assert_eq!(erode(&img, &k, 2).unwrap(), img);
        assert_eq!(dilate(&img, &k, 2).unwrap(), img);
    }

    #[test]
    fn impulse_response() {
        let k = Kernel::ones(3, 3);
        assert!(erode(&impulse(), &k, 1).unwrap().pixels().iter().all(|&v| v == 0.0));
        let dil = dilate(&impulse(), &k, 1).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let inside = (1..=3).contains(&r) && (1..=3).contains(&c);
                assert_eq!(dil.get(r, c, 0), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(erode(&impulse(), &Kernel::ones(2, 3), 1).is_err());
        assert!(dilate(&impulse(), &Kernel::ones(3, 3), 0).is_err());
    }

    #[test]
    fn order_and_duality_on_random_images() {
        let mut rng = SeededRng::new(4);
        let d = Dims::new(8, 9, 3);
        let k = Kernel::ones(3, 5);
        for _ in 0..50 {
            let img = Image::new(d, (0..d.len()).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
            let e = erode(&img, &k, 1).unwrap();
            let g = dilate(&img, &k, 1).unwrap();
            let inv = img.map(|v| 1.0 - v);
            let dual = erode(&inv, &k, 1).unwrap().map(|v| 1.0 - v);
            for i in 0..d.len() {
                assert!(e.pixels()[i] <= img.pixels()[i] && img.pixels()[i] <= g.pixels()[i]);
                assert!((g.pixels()[i] - dual.pixels()[i]).abs() < 1e-12);
            }
        }
    }
}
