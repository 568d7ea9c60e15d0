//! Gray-scale raster with normalized intensities in `[0, 1]`.
//!
//! Storage is row-major; every per-pixel iteration in this crate walks rows
//! top to bottom, columns left to right. Out-of-range reads (patches,
//! convolution windows) use edge replication.

use crate::error::{Error, Result};

/// Row/column position of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelIndex {
    pub row: usize,
    pub col: usize,
}

impl PixelIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Single-channel image, intensities normalized from the 0-255 range.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Build from row-major data. Values are stored as given; call
    /// [`Image::clamped`] before handing the image to another module if
    /// they may leave `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let n = width.checked_mul(height).ok_or(Error::DimensionOverflow {
            width: width as u64,
            height: height as u64,
        })?;
        if data.len() != n {
            return Err(Error::InvalidParameter(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Build by evaluating `f(row, col)` in row-major order.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn at(&self, p: PixelIndex) -> f64 {
        self.get(p.row, p.col)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let i = self.index(row, col);
        self.data[i] = v;
    }

    /// Read with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_replicated(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn contains(&self, p: PixelIndex) -> bool {
        p.row < self.height && p.col < self.width
    }

    /// Same-size image produced by mapping every intensity.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy with every intensity clipped into `[0, 1]`.
    pub fn clamped(&self) -> Image {
        clamp(self)
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Sub-image `[row0, row0+height) x [col0, col0+width)`.
    pub fn crop(&self, row0: usize, col0: usize, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || row0 + height > self.height || col0 + width > self.width {
            return Err(Error::InvalidParameter(format!(
                "crop {width}x{height} at ({row0},{col0}) outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(width, height, |r, c| self.get(row0 + r, col0 + c)))
    }

    /// Centered crop of at most `size x size` pixels.
    pub fn center_crop(&self, size: usize) -> Image {
        let w = size.min(self.width);
        let h = size.min(self.height);
        let row0 = (self.height - h) / 2;
        let col0 = (self.width - w) / 2;
        Image::from_fn(w, h, |r, c| self.get(row0 + r, col0 + c))
    }

    /// Largest and smallest intensity.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Flattened square neighborhood around a pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub center: PixelIndex,
    pub radius: usize,
    pub values: Vec<f64>,
}

impl Patch {
    /// Side length `2 * radius + 1`.
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }
}

/// Patch of side `2 * radius + 1` centred on `p`, flattened row-major, with
/// edge replication outside the image.
pub fn extract_patch(img: &Image, p: PixelIndex, radius: usize) -> Patch {
    let r = radius as isize;
    let side = 2 * radius + 1;
    let mut values = Vec::with_capacity(side * side);
    for dr in -r..=r {
        for dc in -r..=r {
            values.push(img.get_replicated(p.row as isize + dr, p.col as isize + dc));
        }
    }
    Patch {
        center: p,
        radius,
        values,
    }
}

/// Clip every intensity into `[0, 1]`. NaN maps to 0.
pub fn clamp(img: &Image) -> Image {
    img.map(clamp_unit)
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
