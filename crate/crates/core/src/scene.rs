//! Deterministic synthetic gray-scale test scene.
//!
//! Stands in for a natural photograph when no clean image is supplied:
//! smooth shading, flat regions with sharp edges, a textured stripe field
//! and thin lines, all defined analytically so every platform renders the
//! same pixels (after 8-bit quantization).

use crate::image::Image;
use crate::io::quantize;

/// Render the scene at `size x size`, quantized to 8-bit levels.
pub fn test_scene(size: usize) -> Image {
    let s = size as f64;
    Image::from_fn(size, size, |r, c| {
        let y = r as f64 / s;
        let x = c as f64 / s;
        // Smooth background shading.
        let mut v = 0.35 + 0.25 * x + 0.1 * (3.0 * y).sin() * (2.0 * x).cos();
        // Bright disc.
        if (x - 0.3).powi(2) + (y - 0.32).powi(2) < 0.18f64.powi(2) {
            v = 0.82 - 0.15 * (y - 0.32);
        }
        // Dark rectangle.
        if (0.58..0.9).contains(&x) && (0.12..0.42).contains(&y) {
            v = 0.15 + 0.05 * x;
        }
        // Striped texture in the lower left.
        if (0.08..0.45).contains(&x) && (0.6..0.92).contains(&y) {
            v = 0.5 + 0.22 * (x * 40.0).sin() * (y * 6.0).cos();
        }
        // Concentric rings in the lower right.
        let d = ((x - 0.72).powi(2) + (y - 0.74).powi(2)).sqrt();
        if d < 0.2 {
            v = 0.55 + 0.3 * (d * 45.0).cos();
        }
        // Thin diagonal line.
        if ((x - y) - 0.05).abs() < 0.6 / s && x < 0.55 {
            v = 0.95;
        }
        quantize(v.clamp(0.0, 1.0)) as f64 / 255.0
    })
}

/// Randomized scene from the same family: a shaded background with a
/// seeded mix of discs, rectangles, stripe fields, ring patterns and
/// thin strokes.
pub fn scene_variant(size: usize, seed: u64) -> Image {
    use rand::Rng;
    let mut rng = crate::noise::rng_from_seed(seed);
    let s = size as f64;
    let gx: f64 = rng.random_range(-0.3..0.3);
    let gy: f64 = rng.random_range(-0.3..0.3);
    let base: f64 = rng.random_range(0.3..0.6);
    let fx: f64 = rng.random_range(1.0..4.0);
    let fy: f64 = rng.random_range(1.0..4.0);
    enum Shape {
        Disc { cx: f64, cy: f64, r: f64, v: f64 },
        Rect { x0: f64, y0: f64, x1: f64, y1: f64, v: f64 },
        Stripes { x0: f64, y0: f64, x1: f64, y1: f64, f: f64, a: f64 },
        Rings { cx: f64, cy: f64, r: f64, f: f64 },
        Stroke { nx: f64, ny: f64, off: f64, half: f64, v: f64 },
    }
    let n = rng.random_range(5..11);
    let shapes: Vec<Shape> = (0..n)
        .map(|_| match rng.random_range(0..5) {
            0 => Shape::Disc {
                cx: rng.random_range(0.1..0.9),
                cy: rng.random_range(0.1..0.9),
                r: rng.random_range(0.05..0.25),
                v: rng.random_range(0.05..0.95),
            },
            1 => {
                let (x0, y0) = (rng.random_range(0.0..0.7), rng.random_range(0.0..0.7));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.1..0.4),
                    y1: y0 + rng.random_range(0.1..0.4),
                    v: rng.random_range(0.05..0.95),
                }
            }
            2 => {
                let (x0, y0) = (rng.random_range(0.0..0.6), rng.random_range(0.0..0.6));
                Shape::Stripes {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.15..0.4),
                    y1: y0 + rng.random_range(0.15..0.4),
                    f: rng.random_range(10.0..50.0),
                    a: rng.random_range(0.1..0.3),
                }
            }
            4 => {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let (nx, ny) = (theta.cos(), theta.sin());
                let (px, py) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
                Shape::Stroke {
                    nx,
                    ny,
                    off: nx * px + ny * py,
                    half: rng.random_range(0.4..1.6) / s,
                    v: rng.random_range(0.0..1.0),
                }
            }
            _ => Shape::Rings {
                cx: rng.random_range(0.2..0.8),
                cy: rng.random_range(0.2..0.8),
                r: rng.random_range(0.1..0.25),
                f: rng.random_range(20.0..60.0),
            },
        })
        .collect();
    Image::from_fn(size, size, |r, c| {
        let y = r as f64 / s;
        let x = c as f64 / s;
        let mut v = base + gx * x + gy * y + 0.08 * (fy * y).sin() * (fx * x).cos();
        for shape in &shapes {
            match *shape {
                Shape::Disc { cx, cy, r, v: val } => {
                    if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                        v = val + 0.1 * (y - cy);
                    }
                }
                Shape::Rect { x0, y0, x1, y1, v: val } => {
                    if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                        v = val + 0.05 * (x - x0);
                    }
                }
                Shape::Stripes { x0, y0, x1, y1, f, a } => {
                    if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                        v = 0.5 + a * (x * f).sin() * (y * f / 6.0).cos();
                    }
                }
                Shape::Stroke { nx, ny, off, half, v: val } => {
                    if (nx * x + ny * y - off).abs() < half {
                        v = val;
                    }
                }
                Shape::Rings { cx, cy, r, f } => {
                    let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                    if d < r {
                        v = 0.55 + 0.3 * (d * f).cos();
                    }
                }
            }
        }
        quantize(v.clamp(0.0, 1.0)) as f64 / 255.0
    })
}
