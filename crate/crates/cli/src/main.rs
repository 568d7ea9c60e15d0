//! `cobra`: noise, denoise, aggregate, tune, bench and dataset commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cobra_core::experiment::{
    build_dataset, load_clean_images, prepare, run_autotune_demo, run_experiment_on, CobraChoice, DatasetManifest,
    ExperimentSpec, DEFAULT_COPY_SIGMA,
};
use cobra_core::tuner::{evaluate_params, grid_search};
use cobra_core::{
    apply_bank, apply_noise, load_image, save_image, CobraParams, DenoiseFilter, Error, FilterKind, MachineOutputs,
    NoiseKind, NoiseSpec, Result,
};

#[derive(Parser, Debug)]
#[command(name = "cobra", version, about = "Consensus aggregation of image denoising filters")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (noise, denoise, aggregate) or directory (tune, bench,
    /// dataset).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Add synthetic noise to an image.
    Noise(NoiseArgs),
    /// Run one filter.
    Denoise(DenoiseArgs),
    /// Run the bank and aggregate its outputs.
    Aggregate(InputArg),
    /// Grid-search epsilon and alpha.
    Tune(TuneArgs),
    /// Repeated noise/denoise/score experiment with reports.
    Bench(BenchArgs),
    /// Build noisy tuning/evaluation copies of a directory of clean images.
    Dataset(DatasetArgs),
}

#[derive(Args, Debug)]
struct InputArg {
    input: PathBuf,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// none, gaussian, salt_pepper, poisson, speckle, patch_suppression or
    /// mixed. Defaults to the config's noise.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Fraction of pixels hit by salt-and-pepper noise.
    #[arg(long)]
    amount: Option<f64>,
    /// Fraction of salt among impulses.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    peak: Option<f64>,
    #[arg(long)]
    variance: Option<f64>,
    #[arg(long)]
    patches: Option<usize>,
    input: PathBuf,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    /// Filter kind, or a machine name from the config's bank.
    #[arg(long)]
    filter: String,
    /// JSON object of filter parameters, e.g. '{"size": 5}'.
    #[arg(long)]
    params: Option<String>,
    input: PathBuf,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Tune on the tuning copies of a dataset manifest and score the result
    /// on its evaluation copies.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Run the median-size demo with these sizes, e.g. 3,5,11.
    #[arg(long, value_delimiter = ',')]
    autotune: Option<Vec<usize>>,
    /// Keep full-size images instead of the center crop.
    #[arg(long)]
    full_size: bool,
    /// Clean test images; overrides the config.
    images: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    /// Use the five standard noise settings instead of the config's noise.
    #[arg(long)]
    all_noises: bool,
    /// Standard deviation of the perturbation separating the two copies.
    #[arg(long, default_value_t = DEFAULT_COPY_SIGMA)]
    copy_sigma: f64,
    clean_dir: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidParameter(format!("{}: {e}", path.display()))
}

fn load_spec(cli: &Cli) -> Result<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            ExperimentSpec::from_json(&text).map_err(|e| e.context(format!("config {}", path.display())))?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.master_seed = seed;
    }
    Ok(spec)
}

fn out_path(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("--out is required for this command".into()))
}

fn noise_from_args(args: &NoiseArgs, spec: &ExperimentSpec, seed: u64) -> Result<NoiseSpec> {
    let kind = match args.kind.as_deref() {
        None => spec.noise.kind.clone(),
        Some(name) => {
            let mut params = serde_json::Map::new();
            let mut put = |key: &str, v: Option<serde_json::Value>| {
                if let Some(v) = v {
                    params.insert(key.into(), v);
                }
            };
            put("mean", args.mean.map(Into::into));
            put("sigma", args.sigma.map(Into::into));
            put("sp_amount", args.amount.map(Into::into));
            put("sp_ratio", args.ratio.map(Into::into));
            put("peak", args.peak.map(Into::into));
            put("variance", args.variance.map(Into::into));
            put("n_patches", args.patches.map(Into::into));
            let value = if name == "none" {
                serde_json::json!({ "kind": "none" })
            } else {
                serde_json::json!({ "kind": name, "params": params })
            };
            serde_json::from_value::<NoiseKind>(value).map_err(|e| Error::Config(format!("noise {name}: {e}")))?
        }
    };
    kind.validate()?;
    Ok(NoiseSpec::new(kind, seed))
}

fn cmd_noise(cli: &Cli, args: &NoiseArgs) -> Result<()> {
    let spec = load_spec(cli)?;
    let seed = cli.seed.unwrap_or(spec.noise.seed);
    let noise = noise_from_args(args, &spec, seed)?;
    let img = load_image(&args.input)?;
    save_image(&apply_noise(&img, &noise)?, out_path(cli)?)
}

fn cmd_denoise(cli: &Cli, args: &DenoiseArgs) -> Result<()> {
    let spec = load_spec(cli)?;
    let filter = match (spec.bank.get(&args.filter), &args.params) {
        (Some(f), None) if cli.config.is_some() => f.clone(),
        _ => {
            let params = match &args.params {
                Some(p) => serde_json::from_str(p).map_err(|e| Error::Config(format!("--params: {e}")))?,
                None => serde_json::Value::Object(Default::default()),
            };
            DenoiseFilter::new(args.filter.clone(), FilterKind::from_parts(&args.filter, params)?)?
        }
    };
    let img = load_image(&args.input)?;
    let stem = args.input.file_stem().map(|s| s.to_string_lossy().into_owned());
    save_image(&filter.apply(&img, stem.as_deref())?, out_path(cli)?)
}

fn cmd_aggregate(cli: &Cli, args: &InputArg) -> Result<()> {
    let spec = load_spec(cli)?;
    let img = load_image(&args.input)?;
    let size = img.width().max(img.height());
    let size = size.min(spec.crop.unwrap_or(size));
    log::info!("training noise for the pool: {}", spec.noise.kind.name());
    let prepared = prepare(&spec, size)?;
    let outs = MachineOutputs::new(apply_bank(&prepared.bank, &img)?)?;
    let out = prepared.aggregator.aggregate(&img, &outs, &prepared.params)?;
    save_image(&out, out_path(cli)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn cmd_tune(cli: &Cli, args: &TuneArgs) -> Result<()> {
    let spec = load_spec(cli)?;
    let dir = out_path(cli)?;
    let size = spec.crop.unwrap_or(128);
    let result = match &args.manifest {
        None => prepare(&spec, size)?
            .grid
            .ok_or_else(|| Error::Config("config fixes \"cobra\"; set it to \"tune\"".into()))?,
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let manifest: DatasetManifest = serde_json::from_str(&text)?;
            let root = path.parent().unwrap_or(Path::new("."));
            let split = manifest.load_split(root)?;
            let fixed = ExperimentSpec { cobra: CobraChoice::Fixed(CobraParams::default()), ..spec.clone() };
            let prepared = prepare(&fixed, size)?;
            let result = grid_search(&split.tune, &prepared.bank, &spec.grid, &prepared.aggregator, &CobraParams::default())?;
            let rows = evaluate_params(&result.best, &split.eval, &prepared.bank, &prepared.aggregator)?;
            let mut csv = String::from("pair,epsilon,alpha,mae,rmse,psnr,uqi\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.pair_id,
                    r.params.epsilon,
                    r.params.alpha,
                    cobra_core::metrics::format_value(r.scores.mae),
                    cobra_core::metrics::format_value(r.scores.rmse),
                    cobra_core::metrics::format_value(r.scores.psnr),
                    cobra_core::metrics::format_value(r.scores.uqi)
                ));
            }
            write_file(&dir.join("eval.csv"), &csv)?;
            result
        }
    };
    write_file(&dir.join("grid.csv"), &result.to_csv())?;
    write_file(&dir.join("params.json"), &(serde_json::to_string_pretty(&result.best)? + "\n"))?;
    println!("epsilon {} alpha {} {} {}", result.best.epsilon, result.best.alpha, result.objective.name(), result.best_objective);
    Ok(())
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let mut spec = load_spec(cli)?;
    if !args.images.is_empty() {
        spec.clean_images = args.images.clone();
    }
    if args.full_size {
        spec.crop = None;
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("bench-out"));
    let images = load_clean_images(&spec)?;
    let report = match &args.autotune {
        Some(sizes) => run_autotune_demo(&images[0].1, &spec.noise, sizes, &spec, Some(&dir))?,
        None => run_experiment_on(&spec, &images, Some(&dir))?,
    };
    print!("{}", report.to_markdown());
    Ok(())
}

fn cmd_dataset(cli: &Cli, args: &DatasetArgs) -> Result<()> {
    let spec = load_spec(cli)?;
    let noises: Vec<NoiseSpec> = if args.all_noises {
        NoiseKind::standard_settings().into_iter().map(|k| NoiseSpec::new(k, 0)).collect()
    } else {
        vec![spec.noise.clone()]
    };
    let out = out_path(cli)?;
    let manifest = build_dataset(&args.clean_dir, &noises, spec.master_seed, args.copy_sigma, out)?;
    println!("{} entries in {}", manifest.entries.len(), out.join("manifest.json").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Noise(a) => cmd_noise(cli, a),
        Command::Denoise(a) => cmd_denoise(cli, a),
        Command::Aggregate(a) => cmd_aggregate(cli, a),
        Command::Tune(a) => cmd_tune(cli, a),
        Command::Bench(a) => cmd_bench(cli, a),
        Command::Dataset(a) => cmd_dataset(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
