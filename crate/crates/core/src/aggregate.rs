//! Consensus aggregation of machine outputs.
//!
//! Two pixels `p`, `q` are *neighbours in consensus* when at least `M * alpha`
//! of the `M` machines give them intensities within `epsilon` of each other:
//!
//! ```text
//! w(p, q) = 1( #{k : |f_k(p) - f_k(q)| <= epsilon} >= M * alpha )
//! f(p)    = sum_q w(p, q) x(q) / sum_q w(p, q)
//! ```
//!
//! where `x` is the noisy image and `q` ranges over a candidate set around
//! `p` (a square window or the whole image). The candidate set always
//! contains `p` and `w(p, p) = 1`, so the denominator is at least one.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{apply_bank, FilterBank};
use crate::image::{clamp, Image, PixelIndex};

/// Consensus fraction held as an exact rational in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alpha {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Alpha {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num > den {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {num}/{den}"
            )));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    /// Exact dyadic value of a float in `(0, 1]`. Values below `2^-60` are
    /// raised to `2^-60`, which selects the same vote threshold (one vote)
    /// for any bank smaller than `2^60` machines.
    pub fn from_f64(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        const SHIFT: i32 = 60;
        let scaled = alpha * (1u64 << SHIFT) as f64;
        let num = if scaled < 1.0 { 1 } else { scaled as u64 };
        // alpha >= 2^-60 has at most 53 significant bits, so the scaled
        // value is an exact integer.
        Self::new(num, 1u64 << SHIFT)
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Smallest vote count `c` with `c >= machines * alpha`, exactly.
    pub fn required_votes(&self, machines: usize) -> usize {
        let prod = machines as u128 * self.num as u128;
        prod.div_ceil(self.den as u128) as usize
    }

    /// `k/m` for `k = 1..=m`.
    pub fn fractions_of(m: usize) -> Vec<Alpha> {
        (1..=m as u64)
            .map(|k| Alpha::new(k, m as u64).expect("k <= m"))
            .collect()
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let parse = |t: &str| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad alpha fraction {s:?}")))
            };
            Alpha::new(parse(n)?, parse(d)?)
        } else {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad alpha {s:?}")))?;
            Alpha::from_f64(v)
        }
    }
}

impl Serialize for Alpha {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Real(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Real(v) => Alpha::from_f64(v).map_err(serde::de::Error::custom),
        }
    }
}

/// Candidate set searched for each pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Square of side `2r + 1` centred on the pixel, clipped to the image.
    Radius(usize),
    /// Every pixel of the image.
    Full,
}

impl Serialize for Window {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Window::Radius(r) => s.serialize_u64(r as u64),
            Window::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Radius(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Radius(r) if r >= 1 => Ok(Window::Radius(r as usize)),
            Raw::Radius(r) => Err(serde::de::Error::custom(format!("window_radius must be >= 1, got {r}"))),
            Raw::Text(t) if t == "full" => Ok(Window::Full),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("window_radius {t:?} is not \"full\""))),
        }
    }
}

fn default_epsilon() -> f64 {
    0.2
}
fn default_alpha() -> Alpha {
    Alpha::new(4, 7).expect("valid")
}
fn default_window() -> Window {
    Window::Radius(10)
}
fn default_patch_radius() -> usize {
    1
}

/// Aggregation parameters; `epsilon` is on the normalized intensity scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CobraParams {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: Alpha,
    #[serde(rename = "window_radius", default = "default_window")]
    pub window: Window,
    /// Feature patch radius. Carried for feature extraction; the consensus
    /// test itself compares single-pixel machine outputs.
    #[serde(default = "default_patch_radius")]
    pub patch_radius: usize,
}

impl Default for CobraParams {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            window: default_window(),
            patch_radius: default_patch_radius(),
        }
    }
}

impl CobraParams {
    pub fn new(epsilon: f64, alpha: Alpha, window: Window) -> Result<Self> {
        let p = Self {
            epsilon,
            alpha,
            window,
            patch_radius: default_patch_radius(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.window == Window::Radius(0) {
            return Err(Error::InvalidParameter("window_radius must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outputs of the `M` machines, aligned with bank order.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineOutputs {
    outputs: Vec<Image>,
    /// Pixel-major copy: `values[idx * M + k]` is machine `k` at pixel `idx`.
    values: Vec<f64>,
}

impl MachineOutputs {
    pub fn new(outputs: Vec<Image>) -> Result<Self> {
        let first = outputs
            .first()
            .ok_or_else(|| Error::EmptyInput("no machine outputs".into()))?;
        for o in &outputs[1..] {
            first.ensure_same_dims(o)?;
        }
        let m = outputs.len();
        let mut values = vec![0.0; first.len() * m];
        for (k, o) in outputs.iter().enumerate() {
            for (idx, &v) in o.data().iter().enumerate() {
                values[idx * m + k] = v;
            }
        }
        Ok(Self { outputs, values })
    }

    pub fn machines(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[Image] {
        &self.outputs
    }

    pub fn dims(&self) -> (usize, usize) {
        self.outputs[0].dims()
    }

    #[inline]
    pub(crate) fn at(&self, idx: usize) -> &[f64] {
        let m = self.outputs.len();
        &self.values[idx * m..(idx + 1) * m]
    }
}

#[inline]
pub(crate) fn count_agreeing(a: &[f64], b: &[f64], epsilon: f64) -> usize {
    a.iter().zip(b).filter(|(x, y)| (*x - *y).abs() <= epsilon).count()
}

/// Number of machines giving `p` and `q` intensities within `epsilon`
/// (inclusive).
pub fn consensus_count(outs: &MachineOutputs, p: PixelIndex, q: PixelIndex, epsilon: f64) -> usize {
    let w = outs.dims().0;
    count_agreeing(outs.at(p.row * w + p.col), outs.at(q.row * w + q.col), epsilon)
}

/// `1` when at least `M * alpha` machines agree on `p` and `q`, else `0`.
pub fn consensus_weight(outs: &MachineOutputs, p: PixelIndex, q: PixelIndex, params: &CobraParams) -> u8 {
    let need = params.alpha.required_votes(outs.machines());
    u8::from(consensus_count(outs, p, q, params.epsilon) >= need)
}

/// Row/column bounds (inclusive start, exclusive end) of the candidate set.
fn candidate_bounds(p: PixelIndex, window: Window, w: usize, h: usize) -> (usize, usize, usize, usize) {
    match window {
        Window::Full => (0, h, 0, w),
        Window::Radius(r) => (
            p.row.saturating_sub(r),
            (p.row + r + 1).min(h),
            p.col.saturating_sub(r),
            (p.col + r + 1).min(w),
        ),
    }
}

#[inline]
fn aggregate_at(noisy: &[f64], outs: &MachineOutputs, p: PixelIndex, params: &CobraParams, need: usize, w: usize, h: usize) -> f64 {
    let (r0, r1, c0, c1) = candidate_bounds(p, params.window, w, h);
    let here = outs.at(p.row * w + p.col);
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in r0..r1 {
        for c in c0..c1 {
            let idx = r * w + c;
            if count_agreeing(here, outs.at(idx), params.epsilon) >= need {
                sum += noisy[idx];
                n += 1;
            }
        }
    }
    // p itself always qualifies, so n >= 1.
    sum / n as f64
}

/// Consensus-weighted average of noisy intensities over the candidate set
/// of `p`, summed in row-major order.
pub fn aggregate_pixel(noisy: &Image, outs: &MachineOutputs, p: PixelIndex, params: &CobraParams) -> f64 {
    let (w, h) = noisy.dims();
    let need = params.alpha.required_votes(outs.machines());
    aggregate_at(noisy.data(), outs, p, params, need, w, h)
}

/// Aggregate every pixel. Rows are processed in parallel; each output pixel
/// is computed independently, so the result does not depend on the number
/// of worker threads. `progress` receives the number of finished rows.
pub fn aggregate_image(
    noisy: &Image,
    outs: &MachineOutputs,
    params: &CobraParams,
    progress: Option<&(dyn Fn(usize) + Sync)>,
) -> Result<Image> {
    params.validate()?;
    noisy.ensure_same_dims(&outs.outputs[0])?;
    let (w, h) = noisy.dims();
    let need = params.alpha.required_votes(outs.machines());
    let done = AtomicUsize::new(0);
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|row| {
            let values = (0..w)
                .map(|col| aggregate_at(noisy.data(), outs, PixelIndex::new(row, col), params, need, w, h))
                .collect();
            if let Some(cb) = progress {
                cb(done.fetch_add(1, Ordering::Relaxed) + 1);
            }
            values
        })
        .collect();
    let img = Image::from_vec(w, h, rows.concat())?;
    Ok(clamp(&img))
}

/// Run the bank on `noisy`, then aggregate.
pub fn aggregate_with_bank(noisy: &Image, bank: &FilterBank, params: &CobraParams) -> Result<Image> {
    if bank.is_empty() {
        return Err(Error::EmptyInput("filter bank has no machines".into()));
    }
    let outs = MachineOutputs::new(apply_bank(bank, noisy)?)?;
    aggregate_image(noisy, &outs, params, None)
}
