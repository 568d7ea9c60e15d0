//! Richardson-Lucy deconvolution, `u <- u * K^T (f / (K u))`.

use crate::error::{Error, Result};
use crate::image::{clamp, Image};

/// Floor on `K u` before dividing.
const DIVISION_FLOOR: f64 = 1e-12;

/// How convolution reads outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Replicate,
    /// Wrap-around; makes `K^T` the exact adjoint of `K`.
    Periodic,
}

/// Point spread function of odd side, non-negative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    side: usize,
    weights: Vec<f64>,
}

impl Psf {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side == 0 || side % 2 == 0 || weights.len() != side * side {
            return Err(Error::InvalidParameter(format!(
                "psf must be an odd square kernel, got side {side} with {} weights",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidParameter("psf weights must be non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("psf not normalized: sums to {sum}")));
        }
        Ok(Self { side, weights })
    }

    pub fn delta() -> Self {
        Self {
            side: 1,
            weights: vec![1.0],
        }
    }

    /// Normalized `side x side` Gaussian.
    pub fn gaussian(side: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("psf sigma must be > 0, got {sigma}")));
        }
        let r = (side / 2) as isize;
        let raw: Vec<f64> = (-r..=r)
            .flat_map(|i| (-r..=r).map(move |j| (i, j)))
            .map(|(i, j)| (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        Self::new(side, raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn flipped(&self) -> Psf {
        Psf {
            side: self.side,
            weights: self.weights.iter().rev().copied().collect(),
        }
    }
}

fn read(img: &Image, r: isize, c: isize, boundary: Boundary) -> f64 {
    match boundary {
        Boundary::Replicate => img.get_replicated(r, c),
        Boundary::Periodic => {
            let h = img.height() as isize;
            let w = img.width() as isize;
            img.get(r.rem_euclid(h) as usize, c.rem_euclid(w) as usize)
        }
    }
}

/// `out(p) = sum_k psf(k) img(p - k)`.
fn convolve(img: &Image, psf: &Psf, boundary: Boundary) -> Image {
    let r = (psf.side / 2) as isize;
    Image::from_fn(img.width(), img.height(), |row, col| {
        let mut acc = 0.0;
        let mut k = 0;
        for i in -r..=r {
            for j in -r..=r {
                acc += psf.weights[k] * read(img, row as isize - i, col as isize - j, boundary);
                k += 1;
            }
        }
        acc
    })
}

/// Unclamped iterate after `n_iter` updates, starting from `u = img`.
pub fn richardson_lucy_raw(img: &Image, psf: &Psf, n_iter: usize, boundary: Boundary) -> Image {
    let adjoint = psf.flipped();
    let mut u = img.clone();
    for _ in 0..n_iter {
        let blurred = convolve(&u, psf, boundary);
        let ratio_data = img
            .data()
            .iter()
            .zip(blurred.data())
            .map(|(f, b)| f / b.max(DIVISION_FLOOR))
            .collect();
        let ratio = Image::from_vec(img.width(), img.height(), ratio_data).expect("same dimensions");
        let correction = convolve(&ratio, &adjoint, boundary);
        for (v, c) in u.data_mut().iter_mut().zip(correction.data()) {
            *v *= c;
        }
    }
    u
}

pub fn richardson_lucy(img: &Image, psf: &Psf, n_iter: usize) -> Result<Image> {
    if n_iter == 0 {
        return Err(Error::InvalidParameter("richardson-lucy needs n_iter >= 1".into()));
    }
    Ok(clamp(&richardson_lucy_raw(img, psf, n_iter, Boundary::Replicate)))
}
