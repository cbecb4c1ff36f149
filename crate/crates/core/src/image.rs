use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height, width and channel count of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Dims {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl std::str::FromStr for Dims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('x').map(str::trim).collect();
        let parse = |p: &str| {
            p.parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad image size `{s}`")))
        };
        match parts.as_slice() {
            [h, w, c] => Ok(Dims::new(parse(h)?, parse(w)?, parse(c)?)),
            [h, w] => Ok(Dims::new(parse(h)?, parse(w)?, 1)),
            _ => Err(Error::InvalidParameter(format!("bad image size `{s}`, expected HxWxC"))),
        }
    }
}

/// Row-major, channel-last image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    dims: Dims,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, clamping every pixel into `[0, 1]`.
    pub fn new(dims: Dims, mut pixels: Vec<f64>) -> Result<Self> {
        if dims.len() != pixels.len() {
            return Err(Error::Dimension(format!(
                "image {dims} needs {} pixels, got {}",
                dims.len(),
                pixels.len()
            )));
        }
        if !(dims.channels == 1 || dims.channels == 3) {
            return Err(Error::Dimension(format!("channels must be 1 or 3, got {}", dims.channels)));
        }
        for p in pixels.iter_mut() {
            if !p.is_finite() {
                return Err(Error::Numerical("non-finite pixel".into()));
            }
            *p = p.clamp(0.0, 1.0);
        }
        Ok(Image { dims, pixels })
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        Image {
            dims,
            pixels: vec![value.clamp(0.0, 1.0); dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn channels(&self) -> usize {
        self.dims.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.pixels[self.dims.index(row, col, ch)]
    }

    /// Applies `f` to every pixel and clamps the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            dims: self.dims,
            pixels: self.pixels.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }
}
