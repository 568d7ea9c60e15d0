use crate::image::{clamp, Image};

/// Edge-preserving bilateral filter over a window of radius
/// `ceil(3 sigma_spatial)`, with replicated borders.
pub fn bilateral_filter(img: &Image, sigma_spatial: f64, sigma_range: f64) -> Image {
    assert!(sigma_spatial > 0.0 && sigma_range > 0.0, "bilateral sigmas must be positive");
    let radius = (3.0 * sigma_spatial).ceil() as isize;
    let side = (2 * radius + 1) as usize;
    let s2 = 2.0 * sigma_spatial * sigma_spatial;
    let r2 = 2.0 * sigma_range * sigma_range;
    let mut spatial = Vec::with_capacity(side * side);
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            spatial.push((-((dr * dr + dc * dc) as f64) / s2).exp());
        }
    }
    let out = Image::from_fn(img.width(), img.height(), |row, col| {
        let centre = img.get(row, col);
        let (mut num, mut den) = (0.0, 0.0);
        let mut k = 0;
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let v = img.get_replicated(row as isize + dr, col as isize + dc);
                let d = v - centre;
                let w = spatial[k] * (-(d * d) / r2).exp();
                num += w * v;
                den += w;
                k += 1;
            }
        }
        num / den
    });
    clamp(&out)
}
