use crate::image::{clamp, Image};

/// Non-local means: each pixel becomes a weighted mean over its search
/// window, weights `exp(-||P(p) - P(q)||^2 / h^2)` from the squared L2
/// distance between the two patches. Window and patches replicate edges.
pub fn nl_means(img: &Image, patch_radius: usize, search_radius: usize, h: f64) -> Image {
    assert!(h > 0.0, "nl-means decay must be positive");
    let (w, ht) = img.dims();
    let pr = patch_radius as isize;
    let sr = search_radius as isize;
    // Pad once so inner loops skip clamping.
    let pad = pr + sr;
    let pw = w + 2 * pad as usize;
    let ph = ht + 2 * pad as usize;
    let padded: Vec<f64> = (0..ph)
        .flat_map(|r| (0..pw).map(move |c| (r, c)))
        .map(|(r, c)| img.get_replicated(r as isize - pad, c as isize - pad))
        .collect();
    let at = |r: isize, c: isize| padded[(r + pad) as usize * pw + (c + pad) as usize];
    let h2 = h * h;
    let out = Image::from_fn(w, ht, |row, col| {
        let (row, col) = (row as isize, col as isize);
        let (mut num, mut den) = (0.0, 0.0);
        for sr_ in -sr..=sr {
            for sc in -sr..=sr {
                let (qr, qc) = (row + sr_, col + sc);
                let mut dist = 0.0;
                for dr in -pr..=pr {
                    for dc in -pr..=pr {
                        let d = at(row + dr, col + dc) - at(qr + dr, qc + dc);
                        dist += d * d;
                    }
                }
                let wgt = (-dist / h2).exp();
                num += wgt * at(qr, qc);
                den += wgt;
            }
        }
        num / den
    });
    clamp(&out)
}
