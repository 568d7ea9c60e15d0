use crate::image::{clamp, Image};

/// Local window mean and population variance, replicated borders.
pub(crate) fn local_moments(img: &Image, window: usize) -> (Vec<f64>, Vec<f64>) {
    let r = (window / 2) as isize;
    let n = (window * window) as f64;
    let mut means = Vec::with_capacity(img.len());
    let mut vars = Vec::with_capacity(img.len());
    for row in 0..img.height() as isize {
        for col in 0..img.width() as isize {
            let (mut s, mut s2) = (0.0, 0.0);
            for dr in -r..=r {
                for dc in -r..=r {
                    let v = img.get_replicated(row + dr, col + dc);
                    s += v;
                    s2 += v * v;
                }
            }
            let m = s / n;
            means.push(m);
            vars.push((s2 / n - m * m).max(0.0));
        }
    }
    (means, vars)
}

/// Lee filter: `m + k (x - m)` with gain `k = var / (var + noise_variance)`
/// from the local window statistics.
pub fn lee_filter(img: &Image, window: usize, noise_variance: f64) -> Image {
    assert!(window >= 3 && window % 2 == 1, "lee window must be odd and >= 3");
    assert!(noise_variance >= 0.0, "noise variance must be non-negative");
    let (means, vars) = local_moments(img, window);
    let data = img
        .data()
        .iter()
        .zip(means.iter().zip(&vars))
        .map(|(&x, (&m, &var))| {
            let total = var + noise_variance;
            let k = if total > 0.0 { var / total } else { 1.0 };
            m + k * (x - m)
        })
        .collect();
    clamp(&Image::from_vec(img.width(), img.height(), data).expect("same dimensions"))
}
