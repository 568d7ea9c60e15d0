//! Total-variation denoising by Chambolle's dual projection iteration.
//!
//! Minimizes `||u - f||^2 / (2 weight) + TV(u)` with isotropic TV, forward
//! differences and Neumann boundaries (the difference leaving the image is
//! zero). The dual field `p` is updated as
//! `p <- (p + tau g) / (1 + tau |g|)` with `g = grad(div p - f / weight)`,
//! and the primal estimate is `u = f - weight * div p`.

use crate::image::{clamp, Image};

/// Dual step; `1/8` is the bound under which the iteration is proven to
/// converge.
pub const CHAMBOLLE_STEP: f64 = 0.125;

/// Forward-difference gradient `(dx, dy)` with zero at the far border.
fn gradient(u: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                gx[i] = u[i + 1] - u[i];
            }
            if r + 1 < h {
                gy[i] = u[i + w] - u[i];
            }
        }
    }
    (gx, gy)
}

/// Discrete divergence, the negative adjoint of [`gradient`].
fn divergence(px: &[f64], py: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut d = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let x = if w == 1 {
                0.0
            } else if c == 0 {
                px[i]
            } else if c + 1 == w {
                -px[i - 1]
            } else {
                px[i] - px[i - 1]
            };
            let y = if h == 1 {
                0.0
            } else if r == 0 {
                py[i]
            } else if r + 1 == h {
                -py[i - w]
            } else {
                py[i] - py[i - w]
            };
            d[i] = x + y;
        }
    }
    d
}

/// Isotropic total variation of a row-major buffer.
pub fn total_variation(img: &Image) -> f64 {
    let (gx, gy) = gradient(img.data(), img.width(), img.height());
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}

/// `||u - f||^2 / (2 weight) + TV(u)`.
pub fn tv_energy(u: &Image, f: &Image, weight: f64) -> f64 {
    let fidelity: f64 = u
        .data()
        .iter()
        .zip(f.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    fidelity / (2.0 * weight) + total_variation(u)
}

/// Result of the raw iteration, before clamping.
pub struct TvRun {
    pub image: Image,
    pub iterations: usize,
    /// Energy of the primal estimate after each iteration.
    pub energies: Vec<f64>,
}

/// Run the iteration and keep diagnostics. `tol` bounds the relative L2
/// change of the primal estimate between iterations.
pub fn tv_chambolle_run(img: &Image, weight: f64, max_iter: usize, tol: f64, track_energy: bool) -> TvRun {
    assert!(weight > 0.0, "tv weight must be positive");
    let (w, h) = img.dims();
    let f = img.data();
    let n = w * h;
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut u = f.to_vec();
    let mut energies = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let div = divergence(&px, &py, w, h);
        let v: Vec<f64> = div.iter().zip(f).map(|(d, fi)| d - fi / weight).collect();
        let (gx, gy) = gradient(&v, w, h);
        for i in 0..n {
            let norm = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
            let denom = 1.0 + CHAMBOLLE_STEP * norm;
            px[i] = (px[i] + CHAMBOLLE_STEP * gx[i]) / denom;
            py[i] = (py[i] + CHAMBOLLE_STEP * gy[i]) / denom;
        }
        let div = divergence(&px, &py, w, h);
        let next: Vec<f64> = f.iter().zip(&div).map(|(fi, d)| fi - weight * d).collect();
        let delta: f64 = next.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale: f64 = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        u = next;
        if track_energy {
            let est = Image::from_vec(w, h, u.clone()).expect("same dimensions");
            energies.push(tv_energy(&est, img, weight));
        }
        if scale > 0.0 && delta / scale < tol || delta == 0.0 {
            break;
        }
    }
    TvRun {
        image: Image::from_vec(w, h, u).expect("same dimensions"),
        iterations,
        energies,
    }
}

pub fn tv_chambolle(img: &Image, weight: f64, max_iter: usize, tol: f64) -> Image {
    clamp(&tv_chambolle_run(img, weight, max_iter, tol, false).image)
}
