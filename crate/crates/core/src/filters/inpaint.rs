//! Harmonic inpainting of masked pixels.

use crate::error::{Error, Result};
use crate::image::{Image, PixelIndex};

/// Stop once no masked pixel moves by more than this in a sweep.
const CONVERGENCE: f64 = 1e-6;

/// Boolean pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self { width, height, bits }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn pixels(&self) -> impl Iterator<Item = PixelIndex> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| PixelIndex::new(i / self.width, i % self.width))
    }

    /// Every pixel set in `other` is set here.
    pub fn contains_mask(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }
}

/// Pixels at (or within one 8-bit level of) pure white.
pub fn detect_white_mask(img: &Image) -> Mask {
    let thresh = 1.0 - 1.0 / 255.0;
    Mask::from_fn(img.width(), img.height(), |r, c| img.get(r, c) >= thresh)
}

/// Pixels within one 8-bit level of pure black or pure white.
pub fn detect_extreme_mask(img: &Image) -> Mask {
    let lo = 1.0 / 255.0;
    let hi = 1.0 - lo;
    Mask::from_fn(img.width(), img.height(), |r, c| {
        let v = img.get(r, c);
        v <= lo || v >= hi
    })
}

/// Replace masked pixels by iterated 4-neighbour averaging (Gauss-Seidel,
/// row-major sweeps) until the largest update falls below `1e-6` or
/// `n_iter` sweeps have run. Unmasked pixels are untouched.
pub fn inpaint(img: &Image, mask: &Mask, n_iter: usize) -> Result<Image> {
    if mask.dims() != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: mask.dims(),
        });
    }
    if mask.is_empty() {
        return Ok(img.clone());
    }
    if mask.is_full() {
        return Err(Error::InvalidParameter(
            "inpainting mask covers the entire image".into(),
        ));
    }
    let (w, h) = img.dims();
    let known: Vec<f64> = img
        .data()
        .iter()
        .zip(&mask.bits)
        .filter(|(_, &m)| !m)
        .map(|(&v, _)| v)
        .collect();
    let start = known.iter().sum::<f64>() / known.len() as f64;
    let mut out = img.clone();
    let targets: Vec<PixelIndex> = mask.pixels().collect();
    for p in &targets {
        out.set(p.row, p.col, start);
    }
    for _ in 0..n_iter {
        let mut max_change: f64 = 0.0;
        for p in &targets {
            let (r, c) = (p.row, p.col);
            let mut sum = 0.0;
            let mut n = 0.0;
            if r > 0 {
                sum += out.get(r - 1, c);
                n += 1.0;
            }
            if r + 1 < h {
                sum += out.get(r + 1, c);
                n += 1.0;
            }
            if c > 0 {
                sum += out.get(r, c - 1);
                n += 1.0;
            }
            if c + 1 < w {
                sum += out.get(r, c + 1);
                n += 1.0;
            }
            if n == 0.0 {
                continue;
            }
            let v = sum / n;
            max_change = max_change.max((v - out.get(r, c)).abs());
            out.set(r, c, v);
        }
        if max_change < CONVERGENCE {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{rng_from_seed, suppress_patches_with_rects};

    #[test]
    fn empty_mask_identity() {
        let img = Image::from_fn(4, 4, |r, c| (r + c) as f64 / 8.0);
        assert_eq!(inpaint(&img, &Mask::empty(4, 4), 10).unwrap(), img);
    }

    #[test]
    fn full_mask_rejected() {
        let img = Image::filled(3, 3, 0.5);
        let mask = Mask::from_fn(3, 3, |_, _| true);
        assert!(inpaint(&img, &mask, 10).is_err());
        assert!(inpaint(&img, &Mask::empty(2, 3), 10).is_err());
    }

    #[test]
    fn single_pixel_constant_neighbours() {
        let mut img = Image::filled(3, 3, 0.4);
        img.set(1, 1, 1.0);
        let mut mask = Mask::empty(3, 3);
        mask.set(1, 1, true);
        let out = inpaint(&img, &mask, 100).unwrap();
        assert!((out.get(1, 1) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ramp_centre_is_neighbour_average() {
        // u(r, c) = 0.1 r + 0.05 c; the one-unknown Laplace equation gives
        // the mean of the four neighbours, which on a ramp is the ramp value.
        let mut img = Image::from_fn(5, 5, |r, c| 0.1 * r as f64 + 0.05 * c as f64);
        img.set(2, 2, 0.0);
        let mut mask = Mask::empty(5, 5);
        mask.set(2, 2, true);
        let out = inpaint(&img, &mask, 100).unwrap();
        let expected = (0.2 + 0.4 + 0.25 + 0.35) / 4.0;
        let neighbours = (out.get(1, 2) + out.get(3, 2) + out.get(2, 1) + out.get(2, 3)) / 4.0;
        assert!((out.get(2, 2) - neighbours).abs() < 1e-12);
        assert!((out.get(2, 2) - expected).abs() < 1e-12);
        for r in 0..5 {
            for c in 0..5 {
                if (r, c) != (2, 2) {
                    assert_eq!(out.get(r, c), img.get(r, c));
                }
            }
        }
    }

    #[test]
    fn white_mask_examples() {
        assert!(detect_white_mask(&Image::filled(4, 4, 0.5)).is_empty());
        let mut img = Image::filled(4, 4, 0.5);
        img.set(3, 1, 1.0);
        let mask = detect_white_mask(&img);
        assert_eq!(mask.count(), 1);
        assert!(mask.get(3, 1));
    }

    #[test]
    fn white_mask_covers_suppressed_patches() {
        let clean = Image::from_fn(64, 64, |r, c| ((r * c) % 200) as f64 / 255.0);
        let (noisy, rects) = suppress_patches_with_rects(&clean, 20, 4, 4, &mut rng_from_seed(3)).unwrap();
        let truth = Mask::from_fn(64, 64, |r, c| {
            rects
                .iter()
                .any(|q| (q.row..q.row + q.height).contains(&r) && (q.col..q.col + q.width).contains(&c))
        });
        assert!(detect_white_mask(&noisy).contains_mask(&truth));
    }
}
