//! Full-reference quality measures: MAE, RMSE, PSNR and the universal
//! quality index (UQI).
//!
//! All four compare a denoised image against its ground truth on the
//! normalized scale. Moments use the population (1/N) convention.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Peak intensity on the normalized scale.
pub const DEFAULT_DYNAMIC: f64 = 1.0;

fn check(a: &Image, b: &Image) -> Result<()> {
    b.ensure_same_dims(a)
}

pub fn mae(denoised: &Image, original: &Image) -> Result<f64> {
    check(denoised, original)?;
    let s: f64 = denoised
        .data()
        .iter()
        .zip(original.data())
        .map(|(d, o)| (d - o).abs())
        .sum();
    Ok(s / denoised.len() as f64)
}

pub fn mse(denoised: &Image, original: &Image) -> Result<f64> {
    check(denoised, original)?;
    let s: f64 = denoised
        .data()
        .iter()
        .zip(original.data())
        .map(|(d, o)| (d - o) * (d - o))
        .sum();
    Ok(s / denoised.len() as f64)
}

pub fn rmse(denoised: &Image, original: &Image) -> Result<f64> {
    mse(denoised, original).map(f64::sqrt)
}

/// `10 log10(d^2 / RMSE^2)`; `+inf` for identical images.
pub fn psnr_from_rmse(rmse: f64, dynamic: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (dynamic * dynamic / (rmse * rmse)).log10()
    }
}

pub fn psnr(denoised: &Image, original: &Image, dynamic: f64) -> Result<f64> {
    if !(dynamic > 0.0) {
        return Err(Error::InvalidParameter(format!("signal dynamic must be > 0, got {dynamic}")));
    }
    Ok(psnr_from_rmse(rmse(denoised, original)?, dynamic))
}

/// Means, population variances and covariance of two equal-length series.
struct Moments {
    mu_o: f64,
    mu_d: f64,
    var_o: f64,
    var_d: f64,
    cov: f64,
}

fn moments(original: &[f64], denoised: &[f64]) -> Moments {
    let n = original.len() as f64;
    let mu_o = original.iter().sum::<f64>() / n;
    let mu_d = denoised.iter().sum::<f64>() / n;
    let (mut var_o, mut var_d, mut cov) = (0.0, 0.0, 0.0);
    for (o, d) in original.iter().zip(denoised) {
        let (a, b) = (o - mu_o, d - mu_d);
        var_o += a * a;
        var_d += b * b;
        cov += a * b;
    }
    Moments {
        mu_o,
        mu_d,
        var_o: var_o / n,
        var_d: var_d / n,
        cov: cov / n,
    }
}

/// Product of correlation, mean-luminance similarity and contrast
/// similarity, on raw slices.
///
/// Degenerate cases: when either standard deviation is zero, correlation
/// times contrast is taken as 1 if both images are the same constant and 0
/// otherwise; luminance similarity of two all-zero means is 1.
pub fn uqi_slices(denoised: &[f64], original: &[f64]) -> Result<f64> {
    if denoised.len() != original.len() {
        return Err(Error::DimensionMismatch {
            expected: (original.len(), 1),
            actual: (denoised.len(), 1),
        });
    }
    if original.len() < 2 {
        return Err(Error::InvalidParameter("uqi needs at least two pixels".into()));
    }
    let m = moments(original, denoised);
    let (s_o, s_d) = (m.var_o.sqrt(), m.var_d.sqrt());
    let lum_den = m.mu_o * m.mu_o + m.mu_d * m.mu_d;
    let luminance = if lum_den == 0.0 {
        1.0
    } else {
        2.0 * m.mu_o * m.mu_d / lum_den
    };
    if s_o * s_d == 0.0 {
        let same_constant = s_o == 0.0 && s_d == 0.0 && m.mu_o == m.mu_d;
        return Ok(if same_constant { luminance } else { 0.0 });
    }
    let correlation = m.cov / (s_o * s_d);
    let contrast = 2.0 * s_o * s_d / (m.var_o + m.var_d);
    Ok(correlation * luminance * contrast)
}

pub fn uqi(denoised: &Image, original: &Image) -> Result<f64> {
    check(denoised, original)?;
    uqi_slices(denoised.data(), original.data())
}

/// All metrics for one (denoised, original) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mae: f64,
    pub rmse: f64,
    pub psnr: f64,
    pub uqi: f64,
}

impl Scores {
    /// MAE on the 0-255 scale.
    pub fn mae_255(&self) -> f64 {
        self.mae * 255.0
    }

    /// RMSE on the 0-255 scale.
    pub fn rmse_255(&self) -> f64 {
        self.rmse * 255.0
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Mae => self.mae,
            Metric::Rmse => self.rmse,
            Metric::Psnr => self.psnr,
            Metric::Uqi => self.uqi,
        }
    }
}

pub fn score_all(denoised: &Image, original: &Image) -> Result<Scores> {
    let rmse = rmse(denoised, original)?;
    Ok(Scores {
        mae: mae(denoised, original)?,
        rmse,
        psnr: psnr_from_rmse(rmse, DEFAULT_DYNAMIC),
        uqi: uqi(denoised, original)?,
    })
}

/// The four reported measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Rmse,
    Psnr,
    Uqi,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mae, Metric::Rmse, Metric::Psnr, Metric::Uqi];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Rmse => "rmse",
            Metric::Psnr => "psnr",
            Metric::Uqi => "uqi",
        }
    }

    /// Larger is better for PSNR and UQI.
    pub fn higher_is_better(&self) -> bool {
        matches!(self, Metric::Psnr | Metric::Uqi)
    }

    /// `true` when `a` is strictly better than `b`.
    pub fn better(&self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

/// Mean and sample standard deviation across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        if values.iter().any(|v| v.is_infinite()) {
            let all_same = values.iter().all(|&v| v == values[0]);
            return Stat {
                mean: values.iter().sum::<f64>(),
                std: if all_same { 0.0 } else { f64::NAN },
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Repetition statistics of one method under one noise setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub noise: String,
    pub method: String,
    pub repetitions: usize,
    pub mae: Stat,
    pub rmse: Stat,
    pub psnr: Stat,
    pub uqi: Stat,
}

impl ScoreReport {
    pub fn from_runs(noise: impl Into<String>, method: impl Into<String>, runs: &[Scores]) -> Self {
        let col = |m: Metric| Stat::of(&runs.iter().map(|s| s.get(m)).collect::<Vec<_>>());
        Self {
            noise: noise.into(),
            method: method.into(),
            repetitions: runs.len(),
            mae: col(Metric::Mae),
            rmse: col(Metric::Rmse),
            psnr: col(Metric::Psnr),
            uqi: col(Metric::Uqi),
        }
    }

    pub fn stat(&self, metric: Metric) -> Stat {
        match metric {
            Metric::Mae => self.mae,
            Metric::Rmse => self.rmse,
            Metric::Psnr => self.psnr,
            Metric::Uqi => self.uqi,
        }
    }
}

pub const CSV_HEADER: &str = "noise,method,metric,mean,std,reps";

/// Text form of a score; `inf`, `-inf` and `nan` are spelled out.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.9}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One line per (method, metric), methods in report order.
pub fn to_csv(reports: &[ScoreReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for m in Metric::ALL {
            let s = r.stat(m);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.noise),
                csv_field(&r.method),
                m.name(),
                format_value(s.mean),
                format_value(s.std),
                r.repetitions
            );
        }
    }
    out
}

/// Index of the best report for `metric` (first wins on ties).
pub fn best_index(reports: &[ScoreReport], metric: Metric) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if metric.better(r.stat(metric).mean, reports[b].stat(metric).mean) => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Markdown score panel: one row per method, MAE/RMSE on the 0-255 scale,
/// best value per column in bold and the overall RMSE winner flagged.
pub fn to_markdown(title: &str, reports: &[ScoreReport]) -> String {
    let mut out = format!("### {title}\n\n");
    out.push_str("| method | MAE (0-255) | RMSE (0-255) | PSNR (dB) | UQI | reps |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    let best: Vec<Option<usize>> = Metric::ALL.iter().map(|&m| best_index(reports, m)).collect();
    let winner = best[1];
    for (i, r) in reports.iter().enumerate() {
        let cell = |k: usize, m: Metric, scale: f64| {
            let s = r.stat(m);
            let text = format!("{} ± {}", fmt_short(s.mean * scale), fmt_short(s.std * scale));
            if best[k] == Some(i) {
                format!("**{text}**")
            } else {
                text
            }
        };
        let name = if winner == Some(i) {
            format!("{} (best)", r.method)
        } else {
            r.method.clone()
        };
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} | {} |",
            cell(0, Metric::Mae, 255.0),
            cell(1, Metric::Rmse, 255.0),
            cell(2, Metric::Psnr, 1.0),
            cell(3, Metric::Uqi, 1.0),
            r.repetitions
        );
    }
    out
}

fn fmt_short(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        format_value(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(a: &[f64], b: &[f64]) -> (Image, Image) {
        (
            Image::from_vec(a.len(), 1, a.to_vec()).unwrap(),
            Image::from_vec(b.len(), 1, b.to_vec()).unwrap(),
        )
    }

    #[test]
    fn mae_examples() {
        let img = Image::from_fn(4, 4, |r, c| (r + c) as f64 / 8.0);
        assert_eq!(mae(&img, &img).unwrap(), 0.0);
        let a = Image::filled(3, 3, 0.5);
        let b = Image::filled(3, 3, 0.5 + 5.0 / 255.0);
        assert!((mae(&a, &b).unwrap() - 5.0 / 255.0).abs() < 1e-9);
        let (d, o) = pair(&[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(mae(&d, &o).unwrap(), 0.5);
    }

    #[test]
    fn rmse_examples() {
        let img = Image::from_fn(4, 4, |r, c| (r * c) as f64 / 9.0);
        assert_eq!(rmse(&img, &img).unwrap(), 0.0);
        let shifted = img.map(|v| v + 0.03);
        assert!((rmse(&shifted, &img).unwrap() - 0.03).abs() < 1e-9);
        let (d, o) = pair(&[0.0, 1.0], &[0.0, 0.0]);
        assert!((rmse(&d, &o).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_rmse(0.1, 1.0) - 20.0).abs() < 1e-12);
        assert!((psnr_from_rmse(25.5, 255.0) - 20.0).abs() < 1e-12);
        assert_eq!(psnr_from_rmse(1.0, 1.0), 0.0);
        let img = Image::filled(2, 2, 0.2);
        assert_eq!(psnr(&img, &img, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&img, &img, 0.0).is_err());
    }

    #[test]
    fn uqi_examples() {
        let img = Image::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 15.0);
        assert!((uqi(&img, &img).unwrap() - 1.0).abs() < 1e-12);
        let mu = img.mean();
        let neg: Vec<f64> = img.data().iter().map(|o| 2.0 * mu - o).collect();
        let m = moments(img.data(), &neg);
        assert!((m.cov / (m.var_o.sqrt() * m.var_d.sqrt()) + 1.0).abs() < 1e-12);
        assert!((2.0 * m.var_o.sqrt() * m.var_d.sqrt() / (m.var_o + m.var_d) - 1.0).abs() < 1e-12);
        assert!(uqi_slices(&neg, img.data()).unwrap() <= 0.0);
        let c = Image::filled(3, 3, 0.4);
        assert_eq!(uqi(&c, &c).unwrap(), 1.0);
        assert_eq!(uqi(&Image::filled(3, 3, 0.0), &Image::filled(3, 3, 0.0)).unwrap(), 1.0);
        assert_eq!(uqi(&Image::filled(3, 3, 0.5), &c).unwrap(), 0.0);
        assert!(uqi(&Image::filled(1, 1, 0.5), &Image::filled(1, 1, 0.5)).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::filled(2, 2, 0.0);
        let b = Image::filled(2, 3, 0.0);
        assert!(mae(&a, &b).is_err());
        assert!(rmse(&a, &b).is_err());
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(uqi(&a, &b).is_err());
        assert!(score_all(&a, &b).is_err());
    }

    #[test]
    fn score_all_examples() {
        let img = Image::from_fn(5, 5, |r, c| (r + 2 * c) as f64 / 13.0);
        let s = score_all(&img, &img).unwrap();
        assert_eq!((s.mae, s.rmse, s.psnr), (0.0, 0.0, f64::INFINITY));
        assert!((s.uqi - 1.0).abs() < 1e-12);
        let a = Image::filled(4, 4, 0.5);
        let b = Image::filled(4, 4, 0.5 + 5.0 / 255.0);
        let s = score_all(&b, &a).unwrap();
        assert!((s.mae_255() - 5.0).abs() < 1e-9);
        assert!((s.rmse_255() - 5.0).abs() < 1e-9);
        let x = Image::from_fn(6, 4, |r, c| ((r * 6 + c) % 5) as f64 / 4.0);
        let y = Image::from_fn(6, 4, |r, c| ((r * 6 + c) % 7) as f64 / 6.0);
        let s = score_all(&x, &y).unwrap();
        assert_eq!(s.mae, mae(&x, &y).unwrap());
        assert_eq!(s.rmse, rmse(&x, &y).unwrap());
        assert_eq!(s.psnr, psnr(&x, &y, 1.0).unwrap());
        assert_eq!(s.uqi, uqi(&x, &y).unwrap());
    }

    #[test]
    fn csv_layout() {
        let runs = [
            Scores { mae: 0.1, rmse: 0.2, psnr: 14.0, uqi: 0.5 },
            Scores { mae: 0.3, rmse: 0.4, psnr: 8.0, uqi: 0.7 },
        ];
        let r = ScoreReport::from_runs("salt_pepper", "cobra", &runs);
        assert!((r.mae.mean - 0.2).abs() < 1e-15);
        assert!((r.mae.std - 0.02f64.sqrt()).abs() < 1e-12);
        let csv = to_csv(&[r.clone()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("salt_pepper,cobra,psnr,11.000000000,"));
        let ident = ScoreReport::from_runs("none", "id", &[Scores { mae: 0.0, rmse: 0.0, psnr: f64::INFINITY, uqi: 1.0 }]);
        assert!(to_csv(&[ident]).contains("none,id,psnr,inf,0.000000000,1"));
        let md = to_markdown("t", &[r]);
        assert!(md.contains("cobra (best)"));
    }

    proptest! {
        #[test]
        fn metric_laws(a in proptest::collection::vec(0.0f64..1.0, 2..40),
                       b in proptest::collection::vec(0.0f64..1.0, 2..40),
                       rot in 0usize..40) {
            let n = a.len().min(b.len());
            let (x, y) = pair(&a[..n], &b[..n]);
            let m = mae(&x, &y).unwrap();
            let r = rmse(&x, &y).unwrap();
            prop_assert!(m <= r + 1e-15);
            let u1 = uqi(&x, &y).unwrap();
            let u2 = uqi(&y, &x).unwrap();
            prop_assert!((u1 - u2).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&u1));
            // Identical permutation of both images.
            let k = rot % n;
            let mut pa = a[..n].to_vec();
            let mut pb = b[..n].to_vec();
            pa.rotate_left(k);
            pb.rotate_left(k);
            let (px, py) = pair(&pa, &pb);
            prop_assert!((mae(&px, &py).unwrap() - m).abs() < 1e-12);
            prop_assert!((rmse(&px, &py).unwrap() - r).abs() < 1e-12);
            prop_assert!((uqi(&px, &py).unwrap() - u1).abs() < 1e-9);
        }

        #[test]
        fn psnr_decreases_with_rmse(r1 in 1e-6f64..10.0, r2 in 1e-6f64..10.0) {
            prop_assume!(r1 < r2);
            prop_assert!(psnr_from_rmse(r1, 1.0) > psnr_from_rmse(r2, 1.0));
        }
    }
}
