use crate::image::{clamp, Image};

/// Normalized 1-D Gaussian kernel truncated at radius `ceil(3 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_filter(img: &Image, sigma: f64) -> Image {
    assert!(sigma > 0.0, "gaussian sigma must be positive");
    let kernel = gaussian_kernel_1d(sigma);
    clamp(&convolve_separable(img, &kernel, &kernel))
}

/// Row pass with `kx`, then column pass with `ky`; replicated borders.
/// The result is not clamped.
pub(crate) fn convolve_separable(img: &Image, kx: &[f64], ky: &[f64]) -> Image {
    let (w, h) = img.dims();
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let tmp = Image::from_fn(w, h, |r, c| {
        kx.iter()
            .enumerate()
            .map(|(i, k)| k * img.get_replicated(r as isize, c as isize + i as isize - rx))
            .sum()
    });
    Image::from_fn(w, h, |r, c| {
        ky.iter()
            .enumerate()
            .map(|(i, k)| k * tmp.get_replicated(r as isize + i as isize - ry, c as isize))
            .sum()
    })
}
