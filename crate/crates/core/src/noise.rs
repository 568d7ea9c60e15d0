//! Reproducible synthetic noise.
//!
//! Every generator draws from a [`NoiseRng`] (ChaCha8, seeded through
//! `seed_from_u64`), whose output stream is fixed by its algorithm and does
//! not depend on the host platform.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{clamp_unit, Image};

pub type NoiseRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> NoiseRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix an ordered list of integers into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c909, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

fn default_mean() -> f64 {
    127.5
}
fn default_sigma() -> f64 {
    25.5
}
fn default_sp_ratio() -> f64 {
    0.2
}
fn default_sp_amount() -> f64 {
    0.1
}
fn default_peak() -> f64 {
    255.0
}
fn default_variance() -> f64 {
    0.04
}
fn default_n_patches() -> usize {
    20
}
fn default_patch_dim() -> usize {
    4
}

/// One noise process and its parameters. Gaussian `mean`/`sigma` are on the
/// 0-255 scale, with `mean = 127.5` meaning zero-centred noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian {
        #[serde(default = "default_mean")]
        mean: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    SaltPepper {
        #[serde(default = "default_sp_ratio")]
        sp_ratio: f64,
        #[serde(default = "default_sp_amount")]
        sp_amount: f64,
    },
    Poisson {
        #[serde(default = "default_peak")]
        peak: f64,
    },
    Speckle {
        #[serde(default = "default_variance")]
        variance: f64,
    },
    PatchSuppression {
        #[serde(default = "default_n_patches")]
        n_patches: usize,
        #[serde(default = "default_patch_dim")]
        patch_w: usize,
        #[serde(default = "default_patch_dim")]
        patch_h: usize,
    },
    /// Four quadrant generators plus global patch suppression.
    Mixed(MixedNoiseLayout),
}

impl NoiseKind {
    pub fn gaussian() -> Self {
        NoiseKind::Gaussian {
            mean: default_mean(),
            sigma: default_sigma(),
        }
    }

    pub fn salt_pepper() -> Self {
        NoiseKind::SaltPepper {
            sp_ratio: default_sp_ratio(),
            sp_amount: default_sp_amount(),
        }
    }

    pub fn poisson() -> Self {
        NoiseKind::Poisson {
            peak: default_peak(),
        }
    }

    pub fn speckle() -> Self {
        NoiseKind::Speckle {
            variance: default_variance(),
        }
    }

    pub fn patch_suppression() -> Self {
        NoiseKind::PatchSuppression {
            n_patches: default_n_patches(),
            patch_w: default_patch_dim(),
            patch_h: default_patch_dim(),
        }
    }

    /// The five single-process settings, in a fixed order.
    pub fn standard_settings() -> Vec<NoiseKind> {
        vec![
            Self::gaussian(),
            Self::salt_pepper(),
            Self::poisson(),
            Self::speckle(),
            Self::patch_suppression(),
        ]
    }

    /// Stable short name, matching the JSON `kind` tag.
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::SaltPepper { .. } => "salt_pepper",
            NoiseKind::Poisson { .. } => "poisson",
            NoiseKind::Speckle { .. } => "speckle",
            NoiseKind::PatchSuppression { .. } => "patch_suppression",
            NoiseKind::Mixed(_) => "mixed",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            NoiseKind::Gaussian { sigma, .. } if !(sigma >= 0.0) => {
                bad(format!("gaussian sigma must be >= 0, got {sigma}"))
            }
            NoiseKind::SaltPepper {
                sp_ratio,
                sp_amount,
            } if !(0.0..=1.0).contains(&sp_ratio) || !(0.0..=1.0).contains(&sp_amount) => bad(
                format!("salt-and-pepper ratios must lie in [0,1], got {sp_ratio}, {sp_amount}"),
            ),
            NoiseKind::Poisson { peak } if !(peak > 0.0) => {
                bad(format!("poisson peak must be > 0, got {peak}"))
            }
            NoiseKind::Speckle { variance } if !(variance >= 0.0) => {
                bad(format!("speckle variance must be >= 0, got {variance}"))
            }
            NoiseKind::PatchSuppression {
                patch_w, patch_h, ..
            } if patch_w == 0 || patch_h == 0 => bad("patch dimensions must be >= 1".into()),
            NoiseKind::Mixed(ref layout) => layout.validate(),
            _ => Ok(()),
        }
    }
}

/// Noise process plus the seed of its realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            kind: self.kind.clone(),
            seed,
        }
    }
}

/// Quadrant assignment: Gaussian top-left, salt-and-pepper top-right,
/// Poisson bottom-left, speckle bottom-right, then patch suppression over
/// the whole image. The top/left halves take `ceil(H/2)` rows and
/// `ceil(W/2)` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixedNoiseLayout {
    pub gaussian_mean: f64,
    pub gaussian_sigma: f64,
    pub sp_ratio: f64,
    pub sp_amount: f64,
    pub poisson_peak: f64,
    pub speckle_variance: f64,
    pub n_patches: usize,
    pub patch_w: usize,
    pub patch_h: usize,
}

impl Default for MixedNoiseLayout {
    fn default() -> Self {
        Self {
            gaussian_mean: default_mean(),
            gaussian_sigma: default_sigma(),
            sp_ratio: default_sp_ratio(),
            sp_amount: default_sp_amount(),
            poisson_peak: default_peak(),
            speckle_variance: default_variance(),
            n_patches: default_n_patches(),
            patch_w: default_patch_dim(),
            patch_h: default_patch_dim(),
        }
    }
}

impl MixedNoiseLayout {
    /// Layout whose generators are all identities and no patches.
    pub fn identity() -> Self {
        Self {
            gaussian_sigma: 0.0,
            sp_amount: 0.0,
            poisson_peak: 1e12,
            speckle_variance: 0.0,
            n_patches: 0,
            ..Self::default()
        }
    }

    fn quadrant_kinds(&self) -> [NoiseKind; 4] {
        [
            NoiseKind::Gaussian {
                mean: self.gaussian_mean,
                sigma: self.gaussian_sigma,
            },
            NoiseKind::SaltPepper {
                sp_ratio: self.sp_ratio,
                sp_amount: self.sp_amount,
            },
            NoiseKind::Poisson {
                peak: self.poisson_peak,
            },
            NoiseKind::Speckle {
                variance: self.speckle_variance,
            },
        ]
    }

    fn validate(&self) -> Result<()> {
        for k in self.quadrant_kinds() {
            k.validate()?;
        }
        NoiseKind::PatchSuppression {
            n_patches: self.n_patches,
            patch_w: self.patch_w,
            patch_h: self.patch_h,
        }
        .validate()
    }
}

/// Which quadrant a pixel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrant {
    NorthWest,
    NorthEast,
    SouthWest,
    SouthEast,
}

pub fn quadrant_of(row: usize, col: usize, width: usize, height: usize) -> Quadrant {
    let top = row < height.div_ceil(2);
    let left = col < width.div_ceil(2);
    match (top, left) {
        (true, true) => Quadrant::NorthWest,
        (true, false) => Quadrant::NorthEast,
        (false, true) => Quadrant::SouthWest,
        (false, false) => Quadrant::SouthEast,
    }
}

/// Additive Gaussian noise; `mean`/`sigma` on the 0-255 scale, the noise
/// mean being `mean/255 - 0.5`.
pub fn add_gaussian(img: &Image, mean: f64, sigma: f64, rng: &mut NoiseRng) -> Image {
    if sigma == 0.0 {
        let shift = mean / 255.0 - 0.5;
        return img.map(|v| clamp_unit(v + shift));
    }
    let normal = Normal::new(mean / 255.0 - 0.5, sigma / 255.0).expect("sigma validated >= 0");
    img.map_with_rng(rng, |v, rng| clamp_unit(v + normal.sample(rng)))
}

/// Replace exactly `round(sp_amount * N)` distinct pixels, of which
/// `round(sp_ratio * count)` become white and the rest black.
pub fn add_salt_pepper(img: &Image, sp_ratio: f64, sp_amount: f64, rng: &mut NoiseRng) -> Image {
    let n = img.len();
    let count = ((sp_amount * n as f64).round() as usize).min(n);
    let white = ((sp_ratio * count as f64).round() as usize).min(count);
    let mut out = img.clone();
    let picked = index::sample(rng, n, count);
    let data = out.data_mut();
    for (i, idx) in picked.into_iter().enumerate() {
        data[idx] = if i < white { 1.0 } else { 0.0 };
    }
    out
}

/// `out = Poisson(img * peak) / peak`, clipped.
pub fn add_poisson(img: &Image, peak: f64, rng: &mut NoiseRng) -> Image {
    img.map_with_rng(rng, |v, rng| {
        let lambda = v * peak;
        if lambda <= 0.0 {
            return 0.0;
        }
        let counts: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
        clamp_unit(counts / peak)
    })
}

/// Multiplicative noise `out = img * (1 + n)`, `n ~ N(0, variance)`.
pub fn add_speckle(img: &Image, variance: f64, rng: &mut NoiseRng) -> Image {
    if variance == 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("variance validated >= 0");
    img.map_with_rng(rng, |v, rng| clamp_unit(v * (1.0 + normal.sample(rng))))
}

/// Axis-aligned rectangle `(row, col, width, height)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub width: usize,
    pub height: usize,
}

/// Whiten `n_patches` rectangles at uniformly random positions (overlap
/// allowed) and report where they landed.
pub fn suppress_patches_with_rects(
    img: &Image,
    n_patches: usize,
    patch_w: usize,
    patch_h: usize,
    rng: &mut NoiseRng,
) -> Result<(Image, Vec<Rect>)> {
    if patch_w == 0 || patch_h == 0 {
        return Err(Error::InvalidParameter("patch dimensions must be >= 1".into()));
    }
    if patch_w > img.width() || patch_h > img.height() {
        return Err(Error::InvalidParameter(format!(
            "patch {patch_w}x{patch_h} larger than image {}x{}",
            img.width(),
            img.height()
        )));
    }
    let mut out = img.clone();
    let mut rects = Vec::with_capacity(n_patches);
    for _ in 0..n_patches {
        let row = rng.random_range(0..=img.height() - patch_h);
        let col = rng.random_range(0..=img.width() - patch_w);
        for r in row..row + patch_h {
            for c in col..col + patch_w {
                out.set(r, c, 1.0);
            }
        }
        rects.push(Rect {
            row,
            col,
            width: patch_w,
            height: patch_h,
        });
    }
    Ok((out, rects))
}

pub fn suppress_patches(
    img: &Image,
    n_patches: usize,
    patch_w: usize,
    patch_h: usize,
    rng: &mut NoiseRng,
) -> Result<Image> {
    suppress_patches_with_rects(img, n_patches, patch_w, patch_h, rng).map(|(img, _)| img)
}

/// Noise each quadrant independently, then suppress patches globally.
pub fn make_mixed_noise(clean: &Image, layout: &MixedNoiseLayout, seed: u64) -> Result<Image> {
    let (w, h) = clean.dims();
    if w < 2 || h < 2 {
        return Err(Error::InvalidParameter(format!(
            "mixed noise needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    layout.validate()?;
    let (top, left) = (h.div_ceil(2), w.div_ceil(2));
    let regions = [(0, 0, left, top), (0, left, w - left, top), (top, 0, left, h - top), (top, left, w - left, h - top)];
    let mut out = clean.clone();
    for (q, ((row0, col0, qw, qh), kind)) in regions.into_iter().zip(layout.quadrant_kinds()).enumerate() {
        let part = clean.crop(row0, col0, qw, qh)?;
        let noisy = apply_noise(&part, &NoiseSpec::new(kind, derive_seed(&[seed, q as u64])))?;
        for r in 0..qh {
            for c in 0..qw {
                out.set(row0 + r, col0 + c, noisy.get(r, c));
            }
        }
    }
    let mut rng = rng_from_seed(derive_seed(&[seed, 4]));
    suppress_patches(&out, layout.n_patches, layout.patch_w, layout.patch_h, &mut rng)
}

/// Dispatch to the generator named by `spec.kind`, seeded with `spec.seed`.
pub fn apply_noise(img: &Image, spec: &NoiseSpec) -> Result<Image> {
    spec.kind.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    Ok(match spec.kind {
        NoiseKind::None => img.clone(),
        NoiseKind::Gaussian { mean, sigma } => add_gaussian(img, mean, sigma, &mut rng),
        NoiseKind::SaltPepper {
            sp_ratio,
            sp_amount,
        } => add_salt_pepper(img, sp_ratio, sp_amount, &mut rng),
        NoiseKind::Poisson { peak } => add_poisson(img, peak, &mut rng),
        NoiseKind::Speckle { variance } => add_speckle(img, variance, &mut rng),
        NoiseKind::PatchSuppression {
            n_patches,
            patch_w,
            patch_h,
        } => suppress_patches(img, n_patches, patch_w, patch_h, &mut rng)?,
        NoiseKind::Mixed(ref layout) => make_mixed_noise(img, layout, spec.seed)?,
    })
}

impl Image {
    fn map_with_rng(&self, rng: &mut NoiseRng, mut f: impl FnMut(f64, &mut NoiseRng) -> f64) -> Image {
        let data = self.data().iter().map(|&v| f(v, rng)).collect();
        Image::from_vec(self.width(), self.height(), data).expect("same dimensions")
    }
}
