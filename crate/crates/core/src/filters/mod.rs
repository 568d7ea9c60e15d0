//! The pool of preliminary denoising machines.
//!
//! Each machine is a pure `Image -> Image` map. A [`FilterBank`] fixes the
//! machine order, which is the machine index used by the consensus weights.

mod bilateral;
mod gaussian;
mod inpaint;
mod lee;
mod median;
mod nlmeans;
mod richardson_lucy;
mod tv;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bilateral::bilateral_filter;
pub use gaussian::{gaussian_filter, gaussian_kernel_1d};
pub use inpaint::{detect_extreme_mask, detect_white_mask, inpaint, Mask};
pub use lee::lee_filter;
pub use median::{effective_median_size, median_filter};
pub use nlmeans::nl_means;
pub use richardson_lucy::{richardson_lucy, richardson_lucy_raw, Boundary, Psf};
pub use tv::{total_variation, tv_chambolle, tv_chambolle_run, tv_energy, TvRun, CHAMBOLLE_STEP};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::load_image;

/// Version of the built-in default parameter table below. Bump whenever a
/// default changes so stored configs stay interpretable.
pub const FILTER_DEFAULTS_VERSION: u32 = 1;

/// Which pixels the inpainting machine reconstructs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskRule {
    /// Saturated white pixels (suppressed patches).
    White,
    /// Pure black or white pixels (impulse noise).
    Extremes,
}

macro_rules! default_fn {
    ($($name:ident: $ty:ty = $val:expr;)*) => {
        $(fn $name() -> $ty { $val })*
    };
}

default_fn! {
    d_gauss_sigma: f64 = 1.0;
    d_median_size: usize = 3;
    d_bil_spatial: f64 = 2.0;
    d_bil_range: f64 = 0.1;
    d_tv_weight: f64 = 0.1;
    d_tv_iter: usize = 100;
    d_tv_tol: f64 = 1e-4;
    d_nlm_patch: usize = 1;
    d_nlm_search: usize = 5;
    d_nlm_h: f64 = 0.4;
    d_rl_side: usize = 5;
    d_rl_sigma: f64 = 1.0;
    d_rl_iter: usize = 10;
    d_lee_window: usize = 5;
    d_lee_var: f64 = 0.01;
    d_mask_rule: MaskRule = MaskRule::White;
    d_inpaint_iter: usize = 500;
}

/// Built-in machine kinds and their parameters. Intensity-valued parameters
/// are on the normalized `[0, 1]` scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum FilterKind {
    Identity {},
    Gaussian {
        #[serde(default = "d_gauss_sigma")]
        sigma: f64,
    },
    Median {
        #[serde(default = "d_median_size")]
        size: usize,
    },
    Bilateral {
        #[serde(default = "d_bil_spatial")]
        sigma_spatial: f64,
        #[serde(default = "d_bil_range")]
        sigma_range: f64,
    },
    #[serde(alias = "tv", alias = "chambolle")]
    TvChambolle {
        #[serde(default = "d_tv_weight")]
        weight: f64,
        #[serde(default = "d_tv_iter")]
        max_iter: usize,
        #[serde(default = "d_tv_tol")]
        tol: f64,
    },
    #[serde(alias = "nlm")]
    NlMeans {
        #[serde(default = "d_nlm_patch")]
        patch_radius: usize,
        #[serde(default = "d_nlm_search")]
        search_radius: usize,
        #[serde(default = "d_nlm_h")]
        h: f64,
    },
    #[serde(alias = "rl")]
    RichardsonLucy {
        #[serde(default = "d_rl_side")]
        psf_size: usize,
        #[serde(default = "d_rl_sigma")]
        psf_sigma: f64,
        #[serde(default = "d_rl_iter")]
        n_iter: usize,
    },
    Lee {
        #[serde(default = "d_lee_window")]
        window: usize,
        #[serde(default = "d_lee_var")]
        noise_variance: f64,
    },
    Inpaint {
        #[serde(default = "d_mask_rule")]
        mask: MaskRule,
        #[serde(default = "d_inpaint_iter")]
        n_iter: usize,
    },
    /// Pre-rendered output of a third-party denoiser, read from
    /// `<dir>/<input-stem>.png`.
    #[serde(skip)]
    External { dir: PathBuf },
}

impl FilterKind {
    /// Parse `{"kind": kind, "params": params}` with per-field defaults.
    pub fn from_parts(kind: &str, params: serde_json::Value) -> Result<Self> {
        let params = if params.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            params
        };
        serde_json::from_value(serde_json::json!({ "kind": kind, "params": params }))
            .map_err(|e| Error::Config(format!("filter kind {kind:?}: {e}")))
    }

    /// Kind with every parameter at its default.
    pub fn default_of(kind: &str) -> Result<Self> {
        Self::from_parts(kind, serde_json::Value::Null)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FilterKind::Identity {} => "identity",
            FilterKind::Gaussian { .. } => "gaussian",
            FilterKind::Median { .. } => "median",
            FilterKind::Bilateral { .. } => "bilateral",
            FilterKind::TvChambolle { .. } => "tv_chambolle",
            FilterKind::NlMeans { .. } => "nl_means",
            FilterKind::RichardsonLucy { .. } => "richardson_lucy",
            FilterKind::Lee { .. } => "lee",
            FilterKind::Inpaint { .. } => "inpaint",
            FilterKind::External { .. } => "external",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match *self {
            FilterKind::Gaussian { sigma } if !(sigma > 0.0) => bad("gaussian sigma must be > 0"),
            FilterKind::Bilateral {
                sigma_spatial,
                sigma_range,
            } if !(sigma_spatial > 0.0 && sigma_range > 0.0) => bad("bilateral sigmas must be > 0"),
            FilterKind::TvChambolle { weight, .. } if !(weight > 0.0) => bad("tv weight must be > 0"),
            FilterKind::NlMeans { h, .. } if !(h > 0.0) => bad("nl-means h must be > 0"),
            FilterKind::RichardsonLucy {
                psf_size, psf_sigma, n_iter,
            } => {
                if n_iter == 0 {
                    return bad("richardson-lucy n_iter must be >= 1");
                }
                Psf::gaussian(psf_size, psf_sigma).map(|_| ())
            }
            FilterKind::Lee {
                window,
                noise_variance,
            } if window < 3 || window % 2 == 0 || !(noise_variance >= 0.0) => {
                bad("lee window must be odd >= 3 and noise variance >= 0")
            }
            _ => Ok(()),
        }
    }
}

/// A named machine.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseFilter {
    pub name: String,
    pub kind: FilterKind,
}

impl DenoiseFilter {
    pub fn new(name: impl Into<String>, kind: FilterKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            name: name.into(),
            kind,
        })
    }

    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            kind: FilterKind::Identity {},
        }
    }

    pub fn median(size: usize) -> Self {
        Self {
            name: format!("median-{size}"),
            kind: FilterKind::Median { size },
        }
    }

    pub fn external(name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            kind: FilterKind::External { dir: dir.into() },
        }
    }

    /// Run the machine. `source_stem` names the input file and is required
    /// only by external machines.
    pub fn apply(&self, img: &Image, source_stem: Option<&str>) -> Result<Image> {
        let out = match self.kind {
            FilterKind::Identity {} => img.clone(),
            FilterKind::Gaussian { sigma } => gaussian_filter(img, sigma),
            FilterKind::Median { size } => median_filter(img, size),
            FilterKind::Bilateral {
                sigma_spatial,
                sigma_range,
            } => bilateral_filter(img, sigma_spatial, sigma_range),
            FilterKind::TvChambolle {
                weight,
                max_iter,
                tol,
            } => tv_chambolle(img, weight, max_iter, tol),
            FilterKind::NlMeans {
                patch_radius,
                search_radius,
                h,
            } => nl_means(img, patch_radius, search_radius, h),
            FilterKind::RichardsonLucy {
                psf_size,
                psf_sigma,
                n_iter,
            } => richardson_lucy(img, &Psf::gaussian(psf_size, psf_sigma)?, n_iter)?,
            FilterKind::Lee {
                window,
                noise_variance,
            } => lee_filter(img, window, noise_variance),
            FilterKind::Inpaint { mask, n_iter } => {
                let mask = match mask {
                    MaskRule::White => detect_white_mask(img),
                    MaskRule::Extremes => detect_extreme_mask(img),
                };
                // Nothing to interpolate from: leave the image alone.
                if mask.is_full() {
                    img.clone()
                } else {
                    inpaint(img, &mask, n_iter)?
                }
            }
            FilterKind::External { ref dir } => load_external(dir, source_stem, img)?,
        };
        Ok(out)
    }
}

fn load_external(dir: &Path, stem: Option<&str>, img: &Image) -> Result<Image> {
    let stem = stem.ok_or_else(|| {
        Error::InvalidParameter("external machine needs the input file stem".into())
    })?;
    let out = load_image(dir.join(format!("{stem}.png")))?;
    img.ensure_same_dims(&out)?;
    Ok(out)
}

/// Ordered list of machines with unique names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FilterConfig>", into = "Vec<FilterConfig>")]
pub struct FilterBank {
    filters: Vec<DenoiseFilter>,
}

impl FilterBank {
    pub fn new(filters: Vec<DenoiseFilter>) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::EmptyInput("filter bank has no machines".into()));
        }
        let mut seen = HashSet::new();
        for f in &filters {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Config(format!("duplicate machine name {:?}", f.name)));
            }
        }
        Ok(Self { filters })
    }

    /// Every built-in machine at its default parameters: Gaussian, median,
    /// bilateral, TV-Chambolle, non-local means, Richardson-Lucy, Lee and
    /// white-patch inpainting.
    pub fn default_bank() -> Self {
        let kinds = [
            "gaussian",
            "median",
            "bilateral",
            "tv_chambolle",
            "nl_means",
            "richardson_lucy",
            "lee",
            "inpaint",
        ];
        let filters = kinds
            .iter()
            .map(|k| DenoiseFilter {
                name: k.to_string(),
                kind: FilterKind::default_of(k).expect("built-in kind"),
            })
            .collect();
        Self { filters }
    }

    /// One median machine per window size.
    pub fn median_sizes(sizes: &[usize]) -> Result<Self> {
        Self::new(sizes.iter().map(|&s| DenoiseFilter::median(s)).collect())
    }

    pub fn filters(&self) -> &[DenoiseFilter] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.filters.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&DenoiseFilter> {
        self.filters.iter().find(|f| f.name == name)
    }

    /// Machines whose name is listed in `names`, keeping bank order.
    pub fn subset(&self, names: &[String]) -> Result<Self> {
        let picked: Vec<DenoiseFilter> = self
            .filters
            .iter()
            .filter(|f| names.iter().any(|n| n == &f.name))
            .cloned()
            .collect();
        Self::new(picked)
    }

    /// Same machines in a different order.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        Self::new(order.iter().map(|&i| self.filters[i].clone()).collect())
    }
}

/// Apply every machine to `img`; element `k` is machine `k`'s output.
pub fn apply_bank(bank: &FilterBank, img: &Image) -> Result<Vec<Image>> {
    apply_bank_for(bank, img, None)
}

/// As [`apply_bank`], naming the input file for external machines.
/// Machines run concurrently; results keep bank order.
pub fn apply_bank_for(bank: &FilterBank, img: &Image, source_stem: Option<&str>) -> Result<Vec<Image>> {
    bank.filters
        .par_iter()
        .map(|f| {
            f.apply(img, source_stem)
                .map_err(|e| e.context(format!("machine {:?}", f.name)))
        })
        .collect()
}

/// JSON shape of one machine:
/// `{"name": "median-3", "kind": "median", "params": {"size": 3}}`.
/// `kind` defaults to `name`; external machines use
/// `{"name": "bm3d-ext", "kind": "external", "path": "dir"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl TryFrom<FilterConfig> for DenoiseFilter {
    type Error = Error;

    fn try_from(cfg: FilterConfig) -> Result<Self> {
        let kind_name = cfg.kind.as_deref().unwrap_or(&cfg.name);
        if kind_name == "external" {
            let dir = cfg.path.ok_or_else(|| {
                Error::Config(format!("external machine {:?} needs a \"path\"", cfg.name))
            })?;
            return Ok(DenoiseFilter::external(cfg.name, dir));
        }
        let kind = FilterKind::from_parts(kind_name, cfg.params)?;
        DenoiseFilter::new(cfg.name, kind)
    }
}

impl From<DenoiseFilter> for FilterConfig {
    fn from(f: DenoiseFilter) -> Self {
        if let FilterKind::External { dir } = f.kind {
            return FilterConfig {
                name: f.name,
                kind: Some("external".into()),
                params: serde_json::Value::Null,
                path: Some(dir),
            };
        }
        let mut value = serde_json::to_value(&f.kind).expect("filter kinds serialize");
        let params = value
            .get_mut("params")
            .map(serde_json::Value::take)
            .unwrap_or(serde_json::Value::Null);
        FilterConfig {
            name: f.name,
            kind: Some(f.kind.kind_name().to_string()),
            params,
            path: None,
        }
    }
}

impl TryFrom<Vec<FilterConfig>> for FilterBank {
    type Error = Error;

    fn try_from(cfgs: Vec<FilterConfig>) -> Result<Self> {
        FilterBank::new(cfgs.into_iter().map(DenoiseFilter::try_from).collect::<Result<_>>()?)
    }
}

impl From<FilterBank> for Vec<FilterConfig> {
    fn from(bank: FilterBank) -> Self {
        bank.filters.into_iter().map(FilterConfig::from).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |r, c| 0.1 + 0.8 * (((r * 7 + c * 3) % 11) as f64 / 10.0))
    }

    #[test]
    fn every_default_machine_fixes_constants() {
        for value in [0.0, 0.35, 0.8] {
            let img = Image::filled(9, 7, value);
            for f in FilterBank::default_bank().filters() {
                let out = f.apply(&img, None).unwrap();
                assert_eq!(out.dims(), img.dims());
                for v in out.data() {
                    assert!((v - value).abs() < 1e-12, "{} on {value}: {v}", f.name);
                }
            }
        }
    }

    #[test]
    fn every_default_machine_keeps_range_and_is_deterministic() {
        let img = texture(12, 10);
        let bank = FilterBank::default_bank();
        let a = apply_bank(&bank, &img).unwrap();
        let b = apply_bank(&bank, &img).unwrap();
        assert_eq!(a, b);
        for out in &a {
            assert_eq!(out.dims(), img.dims());
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn bank_order_is_preserved() {
        let img = texture(8, 8);
        let bank = FilterBank::new(vec![
            DenoiseFilter::median(3),
            DenoiseFilter::identity(),
            DenoiseFilter::new("g", FilterKind::Gaussian { sigma: 1.0 }).unwrap(),
        ])
        .unwrap();
        let outs = apply_bank(&bank, &img).unwrap();
        assert_eq!(outs[0], median_filter(&img, 3));
        assert_eq!(outs[1], img);
        assert_eq!(outs[2], gaussian_filter(&img, 1.0));
    }

    #[test]
    fn identity_bank() {
        let img = texture(5, 4);
        let bank = FilterBank::new(vec![DenoiseFilter::identity()]).unwrap();
        assert_eq!(apply_bank(&bank, &img).unwrap(), vec![img]);
    }

    #[test]
    fn bank_validation() {
        assert!(FilterBank::new(vec![]).is_err());
        assert!(FilterBank::new(vec![DenoiseFilter::identity(), DenoiseFilter::identity()]).is_err());
    }

    #[test]
    fn config_json() {
        let bank: FilterBank = serde_json::from_str(
            r#"[{"name": "median", "params": {"size": 3}},
                {"name": "median-5", "kind": "median", "params": {"size": 5}},
                {"name": "tv"},
                {"name": "bm3d-ext", "kind": "external", "path": "pre"}]"#,
        )
        .unwrap();
        assert_eq!(bank.names(), vec!["median", "median-5", "tv", "bm3d-ext"]);
        assert_eq!(bank.filters()[1].kind, FilterKind::Median { size: 5 });
        assert!(matches!(bank.filters()[2].kind, FilterKind::TvChambolle { weight, .. } if weight == 0.1));
        let text = serde_json::to_string(&bank).unwrap();
        let back: FilterBank = serde_json::from_str(&text).unwrap();
        assert_eq!(back, bank);
        assert!(serde_json::from_str::<FilterBank>(r#"[{"name": "wavelet"}]"#).is_err());
        assert!(serde_json::from_str::<FilterBank>(r#"[{"name": "x", "kind": "external"}]"#).is_err());
        assert!(serde_json::from_str::<FilterBank>(r#"[{"name": "gaussian", "params": {"sigma": -1}}]"#).is_err());
    }

    #[test]
    fn external_machine_reads_prerendered_file() {
        let dir = tempfile::tempdir().unwrap();
        let img = texture(6, 5);
        let rendered = median_filter(&img, 3);
        crate::io::save_image(&rendered, dir.path().join("photo.png")).unwrap();
        let f = DenoiseFilter::external("bm3d-ext", dir.path());
        let out = f.apply(&img, Some("photo")).unwrap();
        assert_eq!(out, crate::image::Image::from_vec(6, 5, rendered.data().iter().map(|&v| crate::io::quantize(v) as f64 / 255.0).collect()).unwrap());
        assert!(f.apply(&img, None).is_err());
        assert!(f.apply(&img, Some("missing")).is_err());
        assert!(f.apply(&texture(3, 3), Some("photo")).is_err());
    }

    #[test]
    fn inpaint_machine_on_white_image_is_identity() {
        let img = Image::filled(4, 4, 1.0);
        let f = DenoiseFilter::new("inpaint", FilterKind::default_of("inpaint").unwrap()).unwrap();
        assert_eq!(f.apply(&img, None).unwrap(), img);
    }
}
