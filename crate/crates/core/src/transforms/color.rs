//! Point-wise transforms: thresholds, channel manipulation and photometric adjustments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Source channel for [`channel_merge`]. Images are stored RGB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// `m` where the pixel exceeds `t`, else 0. A pixel equal to `t` maps to 0.
pub fn threshold_binary(img: &Image, t: f64, m: f64) -> Image {
    img.map(|v| if v > t { m } else { 0.0 })
}

/// 0 where the pixel exceeds `t`, else `m`.
pub fn threshold_binary_inv(img: &Image, t: f64, m: f64) -> Image {
    img.map(|v| if v > t { 0.0 } else { m })
}

/// Replaces every channel by `src`.
pub fn channel_merge(img: &Image, src: Channel) -> Result<Image> {
    let d = img.dims();
    if d.channels != 3 {
        return Err(Error::Dimension("channel merge needs a 3-channel image".into()));
    }
    let mut px = img.pixels().to_vec();
    for p in px.chunks_exact_mut(3) {
        let v = p[src.index()];
        p.fill(v);
    }
    Image::new(d, px)
}

pub fn brightness(img: &Image, f: f64) -> Image {
    img.map(|v| v * f)
}

pub fn contrast(img: &Image, f: f64) -> Image {
    img.map(|v| 0.5 + f * (v - 0.5))
}

fn luma(p: &[f64]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn per_pixel(img: &Image, f: impl Fn(&mut [f64])) -> Image {
    if img.channels() != 3 {
        return img.clone();
    }
    let mut px = img.pixels().to_vec();
    px.chunks_exact_mut(3).for_each(&f);
    Image::new(img.dims(), px).expect("dims preserved")
}

/// Luma `0.299 r + 0.587 g + 0.114 b` on every channel. Single-channel images pass through.
pub fn grayscale(img: &Image) -> Image {
    per_pixel(img, |p| {
        let y = luma(p);
        p.fill(y);
    })
}

pub fn saturation(img: &Image, f: f64) -> Image {
    per_pixel(img, |p| {
        let y = luma(p);
        for v in p.iter_mut() {
            *v = (y + f * (*v - y)).clamp(0.0, 1.0);
        }
    })
}

/// Rotates hue by `offset` turns in HSV space.
pub fn hue_shift(img: &Image, offset: f64) -> Image {
    per_pixel(img, |p| {
        let (h, s, v) = rgb_to_hsv(p[0], p[1], p[2]);
        let (r, g, b) = hsv_to_rgb((h + offset).rem_euclid(1.0), s, v);
        p[0] = r.clamp(0.0, 1.0);
        p[1] = g.clamp(0.0, 1.0);
        p[2] = b.clamp(0.0, 1.0);
    })
}

pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Dims;
    use crate::rng::SeededRng;

    fn pixel(r: f64, g: f64, b: f64) -> Image {
        Image::new(Dims::new(1, 1, 3), vec![r, g, b]).unwrap()
    }

    fn random(rng: &mut SeededRng) -> Image {
        let d = Dims::new(4, 4, 3);
        Image::new(d, (0..d.len()).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let img = Image::new(Dims::new(1, 1, 1), vec![0.4]).unwrap();
        assert_eq!(threshold_binary(&img, 0.5, 1.0).pixels(), &[0.0]);
        assert_eq!(threshold_binary_inv(&img, 0.5, 1.0).pixels(), &[1.0]);
        let flat = Image::filled(Dims::new(2, 2, 1), 0.5);
        assert!(threshold_binary(&flat, 0.5, 1.0).pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_complementarity() {
        let mut rng = SeededRng::new(0);
        let img = random(&mut rng);
        let a = threshold_binary(&img, 0.3, 0.8);
        let b = threshold_binary_inv(&img, 0.3, 0.8);
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            assert_eq!(x + y, 0.8);
        }
    }

    #[test]
    fn channel_merge_examples() {
        assert_eq!(channel_merge(&pixel(0.1, 0.5, 0.9), Channel::B).unwrap().pixels(), &[0.9, 0.9, 0.9]);
        let gray = pixel(0.3, 0.3, 0.3);
        for src in [Channel::R, Channel::G, Channel::B] {
            assert_eq!(channel_merge(&gray, src).unwrap(), gray);
        }
        let img = pixel(0.1, 0.5, 0.9);
        let outs: Vec<Image> = [Channel::R, Channel::G, Channel::B]
            .iter()
            .map(|&s| channel_merge(&img, s).unwrap())
            .collect();
        assert_ne!(outs[0], outs[1]);
        assert_ne!(outs[1], outs[2]);
        assert_ne!(outs[0], outs[2]);
        assert!(channel_merge(&Image::filled(Dims::new(1, 1, 1), 0.2), Channel::R).is_err());
    }

    #[test]
    fn unit_factors_are_identity() {
        let img = random(&mut SeededRng::new(1));
        assert_eq!(brightness(&img, 1.0), img);
        assert_eq!(contrast(&img, 1.0), img);
        for (a, b) in saturation(&img, 1.0).pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn grayscale_idempotent() {
        let img = random(&mut SeededRng::new(2));
        let g = grayscale(&img);
        let gg = grayscale(&g);
        for (a, b) in g.pixels().iter().zip(gg.pixels()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hue_examples() {
        let img = random(&mut SeededRng::new(3));
        for (a, b) in hue_shift(&img, 0.0).pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
        let cyan = hue_shift(&pixel(1.0, 0.0, 0.0), 0.5);
        for (a, b) in cyan.pixels().iter().zip(&[0.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hsv_round_trip() {
        let mut rng = SeededRng::new(4);
        for _ in 0..1000 {
            let (r, g, b) = (rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }
}
