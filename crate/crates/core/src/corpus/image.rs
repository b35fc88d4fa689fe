use super::CorpusError;

/// Grayscale image with row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, CorpusError> {
        if width == 0 || height == 0 {
            return Err(CorpusError::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(CorpusError::InvalidImage(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CorpusError::InvalidImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image, clamping every value into `[0, 1]` (NaN becomes 0).
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "zero image dimension");
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(clamp_unit(f(r, c)));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn max_value(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    /// Applies `f` to every pixel and clamps the result into `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    /// Row-major copy of the `side`×`side` window whose top-left corner is
    /// `(row, col)`.
    pub fn patch(&self, row: usize, col: usize, side: usize) -> Vec<f64> {
        assert!(row + side <= self.height && col + side <= self.width, "patch out of bounds");
        let mut out = Vec::with_capacity(side * side);
        for r in row..row + side {
            let start = r * self.width + col;
            out.extend_from_slice(&self.pixels[start..start + side]);
        }
        out
    }

    pub fn mirrored_horizontally(&self) -> Self {
        Self::from_fn(self.width, self.height, |r, c| self.get(r, self.width - 1 - c))
    }

    /// Bilinear resample to `width`×`height` using pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let coord = |dst: usize, scale: f64, len: usize| {
            let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (lo, hi, src - lo as f64)
        };
        Self::from_fn(width, height, |r, c| {
            let (r0, r1, fy) = coord(r, sy, self.height);
            let (c0, c1, fx) = coord(c, sx, self.width);
            let top = self.get(r0, c0) * (1.0 - fx) + self.get(r0, c1) * fx;
            let bottom = self.get(r1, c0) * (1.0 - fx) + self.get(r1, c1) * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
