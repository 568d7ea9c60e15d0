//! Experiment harness: dataset construction, repeated noise/denoise/score
//! runs, the median-size demo and report files.
//!
//! Seeds: every random draw is seeded by `derive_seed(&[master_seed, stage,
//! a, b])` with a fixed stage tag, so any single (image, repetition) run can
//! be replayed in isolation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{CobraParams, MachineOutputs};
use crate::error::{Error, Result};
use crate::filters::{apply_bank_for, DenoiseFilter, FilterBank, FilterKind, MaskRule};
use crate::image::Image;
use crate::io::{load_image, save_image};
use crate::metrics::{score_all, to_csv, to_markdown, ScoreReport, Scores};
use crate::noise::{apply_noise, derive_seed, NoiseKind, NoiseSpec};
use crate::pool::{Aggregator, ReferencePool};
use crate::scene::{scene_variant, test_scene};
use crate::tuner::{grid_search, GridResult, ImagePair, TuneSet, TuningGrid};

const STAGE_EVAL: u64 = 1;
const STAGE_SCENE: u64 = 2;
const STAGE_TRAIN_NOISE: u64 = 3;
const STAGE_POOL: u64 = 4;
const STAGE_DATASET: u64 = 5;

/// Method name of the aggregate in reports.
pub const COBRA_METHOD: &str = "cobra";

/// Where the consensus set is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Window around the pixel in the image being denoised.
    Local,
    /// Pool of training pixels with known clean intensities.
    #[default]
    Reference,
}

/// Fixed parameters, or `"tune"` to grid-search them first.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CobraChoice {
    Fixed(CobraParams),
    #[default]
    Tune,
}

impl Serialize for CobraChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CobraChoice::Fixed(p) => p.serialize(s),
            CobraChoice::Tune => s.serialize_str("tune"),
        }
    }
}

impl<'de> Deserialize<'de> for CobraChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Params(CobraParams),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "tune" => Ok(CobraChoice::Tune),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected \"tune\" or an object, got {w:?}"))),
            Raw::Params(p) => Ok(CobraChoice::Fixed(p)),
        }
    }
}

/// Training material for the reference pool and for tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Clean training images. When empty, `synthetic` generated scenes are
    /// used instead.
    pub images: Vec<PathBuf>,
    pub synthetic: usize,
    /// The first `tune_images` training images form the tuning pairs; the
    /// rest fill the pool.
    pub tune_images: usize,
    /// Maximum number of pool entries kept after subsampling.
    pub pool_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { images: Vec::new(), synthetic: 16, tune_images: 4, pool_size: 12_000 }
    }
}

/// Which filters are considered suited to each noise kind when the noise
/// is declared known.
pub fn known_noise_banks() -> BTreeMap<String, FilterBank> {
    let f = |name: &str| DenoiseFilter::new(name, FilterKind::default_of(name).expect("known kind")).expect("valid");
    let extremes = DenoiseFilter::new("inpaint", FilterKind::Inpaint { mask: MaskRule::Extremes, n_iter: 500 })
        .expect("valid");
    let bank = |v: Vec<DenoiseFilter>| FilterBank::new(v).expect("distinct names");
    let mut map = BTreeMap::new();
    map.insert("gaussian".into(), bank(vec![f("gaussian"), f("bilateral"), f("tv_chambolle"), f("nl_means")]));
    map.insert("salt_pepper".into(), bank(vec![f("median"), f("tv_chambolle"), extremes]));
    map.insert(
        "poisson".into(),
        bank(vec![f("gaussian"), f("tv_chambolle"), f("nl_means"), f("richardson_lucy")]),
    );
    map.insert("speckle".into(), bank(vec![f("lee"), f("median"), f("bilateral"), f("tv_chambolle")]));
    map.insert("patch_suppression".into(), bank(vec![f("inpaint"), f("median"), f("tv_chambolle")]));
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Restrict the bank to filters suited to the declared noise.
    Known,
    #[default]
    Unknown,
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::new(NoiseKind::SaltPepper { sp_ratio: 0.2, sp_amount: 0.1 }, 0)
}
fn default_repetitions() -> usize {
    10
}
fn default_crop() -> Option<usize> {
    Some(128)
}
fn default_true() -> bool {
    true
}

/// One experiment, as read from the JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Clean test images; empty selects the built-in test scene.
    #[serde(default)]
    pub clean_images: Vec<PathBuf>,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default = "FilterBank::default_bank")]
    pub bank: FilterBank,
    #[serde(default)]
    pub cobra: CobraChoice,
    #[serde(default)]
    pub grid: TuningGrid,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub aggregation: AggregationMode,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    /// Per-kind banks for known-noise mode; kinds not listed use `bank`.
    #[serde(default)]
    pub known_banks: Option<BTreeMap<String, FilterBank>>,
    /// Center-crop size; `null` keeps full images.
    #[serde(default = "default_crop")]
    pub crop: Option<usize>,
    #[serde(default = "default_true")]
    pub save_images: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        if self.crop == Some(0) {
            return Err(Error::InvalidParameter("crop must be >= 1".into()));
        }
        self.noise.kind.validate()?;
        self.grid.validate()?;
        if let CobraChoice::Fixed(p) = &self.cobra {
            p.validate()?;
        }
        if self.aggregation == AggregationMode::Reference {
            let n = self.training_count();
            if n <= self.training.tune_images && matches!(self.cobra, CobraChoice::Tune) {
                return Err(Error::InvalidParameter(format!(
                    "reference pool needs training images beyond the {} tuning images (have {n})",
                    self.training.tune_images
                )));
            }
            if self.training.pool_size == 0 {
                return Err(Error::InvalidParameter("training.pool_size must be >= 1".into()));
            }
        }
        Ok(())
    }

    fn training_count(&self) -> usize {
        if self.training.images.is_empty() {
            self.training.synthetic
        } else {
            self.training.images.len()
        }
    }

    /// Bank in effect for this spec's noise.
    pub fn effective_bank(&self) -> FilterBank {
        if self.noise_mode == NoiseMode::Unknown {
            return self.bank.clone();
        }
        let table = self.known_banks.clone().unwrap_or_else(known_noise_banks);
        table.get(self.noise.kind.name()).cloned().unwrap_or_else(|| self.bank.clone())
    }
}

fn prepare_image(img: Image, crop: Option<usize>) -> Image {
    match crop {
        Some(size) => img.center_crop(size),
        None => img,
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

/// Clean test images named by file stem, cropped to `spec.crop`.
pub fn load_clean_images(spec: &ExperimentSpec) -> Result<Vec<(String, Image)>> {
    if spec.clean_images.is_empty() {
        let size = spec.crop.unwrap_or(128);
        return Ok(vec![("scene".into(), test_scene(size))]);
    }
    spec.clean_images
        .iter()
        .map(|p| Ok((stem_of(p), prepare_image(load_image(p)?, spec.crop))))
        .collect()
}

/// Clean training images: loaded from `training.images` or generated.
pub fn training_images(spec: &ExperimentSpec, size: usize) -> Result<Vec<(String, Image)>> {
    if spec.training.images.is_empty() {
        return Ok((0..spec.training.synthetic)
            .map(|i| {
                let seed = derive_seed(&[spec.master_seed, STAGE_SCENE, i as u64]);
                (format!("train-{i}"), scene_variant(size, seed))
            })
            .collect());
    }
    spec.training
        .images
        .iter()
        .map(|p| Ok((stem_of(p), prepare_image(load_image(p)?, spec.crop))))
        .collect()
}

/// Aggregator and parameters ready for evaluation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bank: FilterBank,
    pub aggregator: Aggregator,
    pub params: CobraParams,
    pub grid: Option<GridResult>,
}

/// Build the pool (reference mode) and tune parameters when requested.
/// Training draws use the configured noise kind with their own seeds; test
/// images are never touched here.
pub fn prepare(spec: &ExperimentSpec, size: usize) -> Result<Prepared> {
    spec.validate()?;
    let bank = spec.effective_bank();
    let needs_training = spec.aggregation == AggregationMode::Reference || spec.cobra == CobraChoice::Tune;
    let train = if needs_training { training_images(spec, size)? } else { Vec::new() };
    let noisy_train = train
        .iter()
        .enumerate()
        .map(|(i, (id, clean))| {
            let seed = derive_seed(&[spec.master_seed, STAGE_TRAIN_NOISE, i as u64]);
            let noisy = apply_noise(clean, &spec.noise.with_seed(seed))?;
            ImagePair::new(id.clone(), noisy, clean.clone())
        })
        .collect::<Result<Vec<_>>>()?;

    let n_tune = match spec.cobra {
        CobraChoice::Tune => spec.training.tune_images.min(noisy_train.len()),
        CobraChoice::Fixed(_) => 0,
    };
    let (tune_pairs, pool_pairs) = noisy_train.split_at(n_tune);

    let aggregator = match spec.aggregation {
        AggregationMode::Local => Aggregator::Local,
        AggregationMode::Reference => {
            let pairs: Vec<(Image, Image)> = pool_pairs.iter().map(|p| (p.noisy.clone(), p.clean.clone())).collect();
            let pool = ReferencePool::build(&bank, &pairs)
                .map_err(|e| e.context("building reference pool"))?
                .subsample(spec.training.pool_size, derive_seed(&[spec.master_seed, STAGE_POOL]));
            log::info!("reference pool: {} entries from {} images", pool.len(), pairs.len());
            Aggregator::Reference(pool)
        }
    };

    let (params, grid) = match &spec.cobra {
        CobraChoice::Fixed(p) => (*p, None),
        CobraChoice::Tune => {
            if tune_pairs.is_empty() {
                return Err(Error::EmptyInput("tuning requested but no training images available".into()));
            }
            let base = CobraParams::default();
            let result = grid_search(&TuneSet(tune_pairs.to_vec()), &bank, &spec.grid, &aggregator, &base)
                .map_err(|e| e.context("tuning"))?;
            log::info!(
                "tuned epsilon={} alpha={} ({}={})",
                result.best.epsilon,
                result.best.alpha,
                spec.grid.objective.name(),
                result.best_objective
            );
            (result.best, Some(result))
        }
    };
    Ok(Prepared { bank, aggregator, params, grid })
}

/// Seed of the noise realization for (image, repetition).
pub fn run_seed(master_seed: u64, image: usize, rep: usize) -> u64 {
    derive_seed(&[master_seed, STAGE_EVAL, image as u64, rep as u64])
}

/// Images of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub noisy: Image,
    pub cobra: Image,
    /// Scores of every machine in bank order, then the aggregate.
    pub scores: Vec<Scores>,
}

/// One noise draw on `clean`, every machine, the aggregate, and scores.
pub fn run_single(
    spec: &ExperimentSpec,
    prepared: &Prepared,
    image_id: &str,
    clean: &Image,
    image: usize,
    rep: usize,
) -> Result<RunOutput> {
    let ctx = || format!("image {image_id}, repetition {rep}");
    let noisy = apply_noise(clean, &spec.noise.with_seed(run_seed(spec.master_seed, image, rep)))
        .map_err(|e| e.context(ctx()))?;
    let outs = apply_bank_for(&prepared.bank, &noisy, Some(image_id)).map_err(|e| e.context(ctx()))?;
    let mut scores = outs.iter().map(|o| score_all(o, clean)).collect::<Result<Vec<_>>>()?;
    let outs = MachineOutputs::new(outs)?;
    let cobra = prepared
        .aggregator
        .aggregate(&noisy, &outs, &prepared.params)
        .map_err(|e| e.context(ctx()))?;
    scores.push(score_all(&cobra, clean)?);
    Ok(RunOutput { noisy, cobra, scores })
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub noise: String,
    pub aggregation: AggregationMode,
    pub params: CobraParams,
    pub grid: Option<GridResult>,
    /// Machines in bank order, then the aggregate.
    pub reports: Vec<ScoreReport>,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&ScoreReport> {
        self.reports.iter().find(|r| r.method == name)
    }

    pub fn cobra(&self) -> &ScoreReport {
        self.reports.last().expect("aggregate row present")
    }

    pub fn filters(&self) -> &[ScoreReport] {
        &self.reports[..self.reports.len() - 1]
    }

    pub fn to_csv(&self) -> String {
        to_csv(&self.reports)
    }

    pub fn to_markdown(&self) -> String {
        let title = format!(
            "{} noise, {} aggregation, epsilon {}, alpha {}",
            self.noise, self.aggregation_name(), self.params.epsilon, self.params.alpha
        );
        to_markdown(&title, &self.reports)
    }

    fn aggregation_name(&self) -> &'static str {
        match self.aggregation {
            AggregationMode::Local => "local",
            AggregationMode::Reference => "reference",
        }
    }

    /// Write `report.csv`, `report.md`, `params.json` and, when tuned,
    /// `grid.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("report.csv", self.to_csv())?;
        write("report.md", self.to_markdown())?;
        let params = serde_json::json!({
            "aggregation": self.aggregation,
            "cobra": self.params,
        });
        write("params.json", serde_json::to_string_pretty(&params)? + "\n")?;
        if let Some(g) = &self.grid {
            write("grid.csv", g.to_csv())?;
        }
        Ok(())
    }
}

fn diff_image(clean: &Image, denoised: &Image) -> Image {
    Image::from_fn(clean.width(), clean.height(), |r, c| (clean.get(r, c) - denoised.get(r, c)).abs())
}

/// Run `spec` on the given clean images. With `out_dir`, reports and the
/// repetition-0 image triple (`<id>_noisy.png`, `<id>_cobra.png`,
/// `<id>_diff.png`) are written there.
pub fn run_experiment_on(
    spec: &ExperimentSpec,
    clean_images: &[(String, Image)],
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    let (first_id, first) = clean_images
        .first()
        .ok_or_else(|| Error::EmptyInput("no clean images".into()))?;
    log::debug!("experiment on {} images, first {first_id}", clean_images.len());
    let size = first.width().max(first.height());
    let prepared = prepare(spec, size)?;
    let m = prepared.bank.len();
    let mut runs: Vec<Vec<Scores>> = vec![Vec::new(); m + 1];
    for (i, (id, clean)) in clean_images.iter().enumerate() {
        for rep in 0..spec.repetitions {
            let out = run_single(spec, &prepared, id, clean, i, rep)?;
            for (k, s) in out.scores.iter().enumerate() {
                runs[k].push(*s);
            }
            if rep == 0 && spec.save_images {
                if let Some(dir) = out_dir {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    save_image(&out.noisy, dir.join(format!("{id}_noisy.png")))?;
                    save_image(&out.cobra, dir.join(format!("{id}_cobra.png")))?;
                    save_image(&diff_image(clean, &out.cobra), dir.join(format!("{id}_diff.png")))?;
                }
            }
            log::debug!("{id} repetition {rep} done");
        }
    }
    let noise = spec.noise.kind.name().to_string();
    let mut names: Vec<String> = prepared.bank.names().iter().map(|s| s.to_string()).collect();
    names.push(COBRA_METHOD.into());
    let reports = names
        .iter()
        .zip(&runs)
        .map(|(name, r)| ScoreReport::from_runs(noise.clone(), name.clone(), r))
        .collect();
    let report = ExperimentReport {
        noise,
        aggregation: spec.aggregation,
        params: prepared.params,
        grid: prepared.grid,
        reports,
    };
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

/// Run `spec` on its configured clean images.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    let images = load_clean_images(spec)?;
    run_experiment_on(spec, &images, out_dir)
}

/// Median filters of several sizes as the machines; reports each size and
/// the aggregate.
pub fn run_autotune_demo(
    clean: &Image,
    noise: &NoiseSpec,
    sizes: &[usize],
    spec: &ExperimentSpec,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("no median sizes".into()));
    }
    let spec = ExperimentSpec {
        bank: FilterBank::median_sizes(sizes)?,
        noise: noise.clone(),
        noise_mode: NoiseMode::Unknown,
        ..spec.clone()
    };
    run_experiment_on(&spec, &[("scene".into(), clean.clone())], out_dir)
}

/// One noisy image file of the dataset and the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub clean: PathBuf,
    pub noise: NoiseSpec,
    pub base: DatasetFile,
    pub tune: DatasetFile,
    pub eval: DatasetFile,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub master_seed: u64,
    pub copy_sigma: f64,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    /// Load the tune and eval copies back as a hold-out split. Relative
    /// paths resolve against `root`.
    pub fn load_split(&self, root: &Path) -> Result<crate::tuner::DataSplit> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
        let mut tune = Vec::new();
        let mut eval = Vec::new();
        for e in &self.entries {
            let clean = load_image(resolve(&e.clean))?;
            let id = |f: &DatasetFile| stem_of(&f.path);
            tune.push(ImagePair::new(id(&e.tune), load_image(resolve(&e.tune.path))?, clean.clone())?);
            eval.push(ImagePair::new(id(&e.eval), load_image(resolve(&e.eval.path))?, clean)?);
        }
        Ok(crate::tuner::DataSplit { tune: TuneSet(tune), eval: crate::tuner::EvalSet(eval) })
    }
}

/// Default standard deviation of the Gaussian perturbation separating the
/// two copies of each noisy image.
pub const DEFAULT_COPY_SIGMA: f64 = 0.01;

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|x| matches!(x.to_ascii_lowercase().to_str(), Some("png" | "pgm" | "pnm")))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

/// For each clean image in `clean_dir` and each noise spec: one noisy
/// image, then two copies of it (tuning and evaluation), each perturbed by
/// independent Gaussian noise of standard deviation `copy_sigma`. Files and
/// `manifest.json` go to `out_dir`; manifest paths are relative to it.
pub fn build_dataset(
    clean_dir: &Path,
    noise_specs: &[NoiseSpec],
    master_seed: u64,
    copy_sigma: f64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if noise_specs.is_empty() {
        return Err(Error::EmptyInput("no noise specifications".into()));
    }
    if !(copy_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("copy_sigma must be >= 0, got {copy_sigma}")));
    }
    let files = image_files(clean_dir)?;
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no .png/.pgm images in {}", clean_dir.display())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let clean_out = out_dir.join("clean");
    fs::create_dir_all(&clean_out).map_err(|e| Error::io(&clean_out, e))?;
    let copy = NoiseKind::Gaussian { mean: 127.5, sigma: copy_sigma * 255.0 };
    let mut entries = Vec::new();
    for (i, file) in files.iter().enumerate() {
        let clean = load_image(file).map_err(|e| e.context(format!("dataset image {}", file.display())))?;
        let stem = stem_of(file);
        let clean_rel = PathBuf::from("clean").join(format!("{stem}.png"));
        save_image(&clean, out_dir.join(&clean_rel))?;
        for (k, spec) in noise_specs.iter().enumerate() {
            let seed = |part: u64| derive_seed(&[master_seed, STAGE_DATASET, i as u64, k as u64, part]);
            let name = format!("{stem}__{k}-{}", spec.kind.name());
            let base_seed = seed(0);
            let base = apply_noise(&clean, &spec.with_seed(base_seed))?;
            let mut files = Vec::new();
            for (part, suffix, img_seed) in [(0u64, "base", base_seed), (1, "tune", seed(1)), (2, "eval", seed(2))] {
                let img = if part == 0 || copy_sigma == 0.0 {
                    base.clone()
                } else {
                    apply_noise(&base, &NoiseSpec::new(copy.clone(), img_seed))?
                };
                let rel = PathBuf::from(format!("{name}__{suffix}.png"));
                save_image(&img, out_dir.join(&rel))?;
                files.push(DatasetFile { path: rel, seed: img_seed });
            }
            let mut it = files.into_iter();
            entries.push(DatasetEntry {
                clean: clean_rel.clone(),
                noise: spec.with_seed(base_seed),
                base: it.next().expect("base"),
                tune: it.next().expect("tune"),
                eval: it.next().expect("eval"),
            });
        }
    }
    let manifest = DatasetManifest { master_seed, copy_sigma, entries };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{Alpha, Window};

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            bank: FilterBank::new(vec![DenoiseFilter::identity(), DenoiseFilter::median(3)]).unwrap(),
            repetitions: 2,
            crop: Some(16),
            training: TrainingConfig { synthetic: 3, tune_images: 1, pool_size: 300, ..Default::default() },
            grid: TuningGrid { epsilons: vec![0.05, 0.2], ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn config_defaults_and_choice_parsing() {
        let s = ExperimentSpec::default();
        assert_eq!(s.repetitions, 10);
        assert_eq!(s.crop, Some(128));
        assert_eq!(s.cobra, CobraChoice::Tune);
        assert_eq!(s.aggregation, AggregationMode::Reference);
        assert_eq!(s.bank.len(), 8);
        let s = ExperimentSpec::from_json(
            r#"{"cobra": {"epsilon": 0.1, "alpha": "2/3", "window_radius": "full"},
                "aggregation": "local", "repetitions": 3, "master_seed": 9,
                "noise": {"kind": "gaussian", "params": {"sigma": 10}}}"#,
        )
        .unwrap();
        match s.cobra {
            CobraChoice::Fixed(p) => {
                assert_eq!(p.alpha, Alpha::new(2, 3).unwrap());
                assert_eq!(p.window, Window::Full);
            }
            CobraChoice::Tune => panic!("expected fixed params"),
        }
        assert!(ExperimentSpec::from_json(r#"{"cobra": "tuned"}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"repetitions": 0}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"unknown_key": 1}"#).is_err());
    }

    #[test]
    fn known_mode_restricts_bank() {
        let mut s = ExperimentSpec { noise_mode: NoiseMode::Known, ..Default::default() };
        assert_eq!(s.effective_bank().names(), ["median", "tv_chambolle", "inpaint"]);
        s.noise = NoiseSpec::new(NoiseKind::gaussian(), 0);
        assert_eq!(s.effective_bank().names(), ["gaussian", "bilateral", "tv_chambolle", "nl_means"]);
        s.noise = NoiseSpec::new(NoiseKind::Mixed(Default::default()), 0);
        assert_eq!(s.effective_bank().len(), 8);
    }

    #[test]
    fn report_has_one_row_per_method() {
        let r = run_experiment(&tiny_spec(), None).unwrap();
        assert_eq!(r.reports.len(), 3);
        assert_eq!(r.cobra().method, COBRA_METHOD);
        assert_eq!(r.filters()[1].method, "median-3");
        assert!(r.reports.iter().all(|x| x.repetitions == 2));
        assert_eq!(r.to_csv().lines().count(), 1 + 3 * 4);
        let grid = r.grid.as_ref().unwrap();
        assert_eq!(grid.table.len(), 2 * 2);
    }

    #[test]
    fn identity_bank_without_noise_matches_identity() {
        let spec = ExperimentSpec {
            bank: FilterBank::new(vec![DenoiseFilter::identity()]).unwrap(),
            noise: NoiseSpec::new(NoiseKind::None, 0),
            cobra: CobraChoice::Fixed(CobraParams::new(1e-9, Alpha::new(1, 1).unwrap(), Window::Radius(1)).unwrap()),
            aggregation: AggregationMode::Local,
            repetitions: 1,
            crop: Some(16),
            ..Default::default()
        };
        let clean = Image::from_fn(16, 16, |r, c| (r * 16 + c) as f64 / 256.0);
        let r = run_experiment_on(&spec, &[("ramp".into(), clean)], None).unwrap();
        assert_eq!(r.cobra().mae, r.filters()[0].mae);
        assert_eq!(r.cobra().mae.mean, 0.0);
    }

    #[test]
    fn rows_replay_from_single_runs() {
        let spec = tiny_spec();
        let images = load_clean_images(&spec).unwrap();
        let r = run_experiment_on(&spec, &images, None).unwrap();
        let prepared = prepare(&spec, 16).unwrap();
        let runs: Vec<_> = (0..2)
            .map(|rep| run_single(&spec, &prepared, "scene", &images[0].1, 0, rep).unwrap())
            .collect();
        let cobra_rmse: Vec<f64> = runs.iter().map(|o| o.scores[2].rmse).collect();
        assert_eq!(r.cobra().rmse, crate::metrics::Stat::of(&cobra_rmse));
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        run_experiment(&tiny_spec(), Some(&a)).unwrap();
        run_experiment(&tiny_spec(), Some(&b)).unwrap();
        for f in ["report.csv", "report.md", "params.json", "grid.csv", "scene_noisy.png", "scene_cobra.png", "scene_diff.png"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn autotune_demo_rows() {
        let clean = test_scene(16);
        let noise = NoiseSpec::new(NoiseKind::SaltPepper { sp_ratio: 0.5, sp_amount: 0.1 }, 0);
        let r = run_autotune_demo(&clean, &noise, &[3], &tiny_spec(), None).unwrap();
        assert_eq!(r.reports.len(), 2);
        let r = run_autotune_demo(&clean, &noise, &[3, 5, 10], &tiny_spec(), None).unwrap();
        let names: Vec<_> = r.reports.iter().map(|x| x.method.as_str()).collect();
        assert_eq!(names, ["median-3", "median-5", "median-10", "cobra"]);
        assert!(run_autotune_demo(&clean, &noise, &[], &tiny_spec(), None).is_err());
    }

    #[test]
    fn dataset_smallest_case_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let clean_dir = dir.path().join("clean");
        fs::create_dir_all(&clean_dir).unwrap();
        save_image(&test_scene(12), clean_dir.join("scene.png")).unwrap();
        let noise = [NoiseSpec::new(NoiseKind::SaltPepper { sp_ratio: 0.5, sp_amount: 0.1 }, 0)];
        let m1 = build_dataset(&clean_dir, &noise, 4, DEFAULT_COPY_SIGMA, &dir.path().join("d1")).unwrap();
        let m2 = build_dataset(&clean_dir, &noise, 4, DEFAULT_COPY_SIGMA, &dir.path().join("d2")).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.entries.len(), 1);
        let e = &m1.entries[0];
        assert_ne!(e.tune.seed, e.eval.seed);
        for f in [&e.base.path, &e.tune.path, &e.eval.path, &PathBuf::from("manifest.json")] {
            assert_eq!(fs::read(dir.path().join("d1").join(f)).unwrap(), fs::read(dir.path().join("d2").join(f)).unwrap());
        }
        let split = m1.load_split(&dir.path().join("d1")).unwrap();
        assert_eq!(split.tune.0.len(), 1);
        assert_eq!(split.eval.0.len(), 1);
        assert_ne!(split.tune.0[0].noisy, split.eval.0[0].noisy);
        assert!(build_dataset(&dir.path().join("d1/clean_missing"), &noise, 4, 0.01, &dir.path().join("d3")).is_err());
    }

    #[test]
    fn dataset_counts_multiply() {
        let dir = tempfile::tempdir().unwrap();
        let clean_dir = dir.path().join("clean");
        fs::create_dir_all(&clean_dir).unwrap();
        for i in 0..3 {
            save_image(&scene_variant(8, i), clean_dir.join(format!("s{i}.png"))).unwrap();
        }
        let noises: Vec<_> = NoiseKind::standard_settings().into_iter().map(|k| NoiseSpec::new(k, 0)).collect();
        let m = build_dataset(&clean_dir, &noises, 1, 0.0, &dir.path().join("out")).unwrap();
        assert_eq!(m.entries.len(), 3 * noises.len());
    }
}
