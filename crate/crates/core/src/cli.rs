//! Command-line front end. `run` returns the process exit code:
//! 0 success, 2 usage, 3 data error, 4 numerical divergence.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::coding::{infer_code, CodingConfig};
use crate::error::Error;
use crate::eval::{evaluate, export_mosaic};
use crate::io::{
    load_config, load_dictionary, load_sample, preprocess_file, report_rows, save_dictionary,
    save_sample, write_report, PreprocessSpec, ReportRow, SampleDir, SAMPLE_EXT,
};
use crate::model::Sample;
use crate::pipeline::{synth_generate, train, SampleSource, SynthSpec, TrainConfig, TrainMode};
use crate::tensor_freq::{Fourier, SignalShape};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ocsc", version, about = "Online convolutional sparse coding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a dictionary from a directory of images or sample files.
    Train(TrainArgs),
    /// Score a dictionary on a test directory.
    Eval(EvalArgs),
    /// Code one sample and write its reconstruction.
    Reconstruct(ReconstructArgs),
    /// Render the filters as a PNG mosaic.
    Mosaic(MosaicArgs),
    /// Write synthetic samples and their generating dictionary.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CodingArgs {
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    rho_code: f64,
    #[arg(long, default_value_t = 300)]
    code_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    code_tol: f64,
}

impl CodingArgs {
    fn config(&self) -> CodingConfig {
        CodingConfig {
            beta: self.beta,
            rho: self.rho_code,
            max_iters: self.code_iters,
            rel_tol: self.code_tol,
        }
    }
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long, default_value_t = 9)]
    lcn_window: usize,
    #[arg(long, default_value_t = 3.0)]
    lcn_sigma: f64,
    #[arg(long, default_value_t = 1e-4)]
    lcn_epsilon: f64,
    #[arg(long, default_value_t = 11)]
    taper_size: usize,
    #[arg(long, default_value_t = 1.0)]
    taper_sigma_min: f64,
    #[arg(long, default_value_t = 3.0)]
    taper_sigma_max: f64,
}

impl PreprocessArgs {
    fn spec(&self, seed: u64) -> PreprocessSpec {
        PreprocessSpec {
            grayscale: true,
            lcn_window: self.lcn_window,
            lcn_sigma: self.lcn_sigma,
            lcn_epsilon: self.lcn_epsilon,
            taper_sigma_range: (self.taper_sigma_min, self.taper_sigma_max),
            taper_size: self.taper_size,
            seed,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Plain-text key=value file supplying any flag; flags on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "online")]
    mode: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Filter extent, `11` (square for images) or `11x11`.
    #[arg(long, default_value = "11")]
    filter_size: String,
    #[command(flatten)]
    coding: CodingArgs,
    #[arg(long, default_value_t = 10.0)]
    rho_dict: f64,
    #[arg(long, default_value_t = 10)]
    inner_j: usize,
    #[arg(long, default_value_t = 10)]
    passes: usize,
    #[arg(long, default_value_t = 1e-3)]
    stop_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record metrics every this many samples (online modes).
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    preprocess: PreprocessArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    coding: CodingArgs,
    #[command(flatten)]
    preprocess: PreprocessArgs,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dict: PathBuf,
    /// Sample file or image.
    #[arg(long = "in")]
    input: PathBuf,
    /// `.smp` envelope, or `.png` for a min-max scaled picture.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    coding: CodingArgs,
    #[command(flatten)]
    preprocess: PreprocessArgs,
}

#[derive(Debug, Args)]
struct MosaicArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Signal extent, `64` or `64x64`.
    #[arg(long)]
    p: String,
    #[arg(long)]
    k: usize,
    /// Filter extent, `8` or `8x8`.
    #[arg(long)]
    m: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// Fraction of nonzero code entries.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Emit the independent N(0,1) signals instead of the consistent ones.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::InvalidConfig(_) => EXIT_USAGE,
        Error::Divergence { .. } | Error::NumericalConsistency(_) | Error::NonFinite(_) => {
            EXIT_DIVERGENCE
        }
        _ => EXIT_DATA,
    }
}

fn parse_extent(text: &str) -> Result<Vec<usize>, Failure> {
    let dims = text
        .split(['x', 'X'])
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::usage(format!("bad extent {text:?}, expected N or NxM")))?;
    if dims.is_empty() || dims.len() > 2 || dims.contains(&0) {
        return Err(Failure::usage(format!("bad extent {text:?}")));
    }
    Ok(dims)
}

/// Inserts config-file flags ahead of the user's flags, dropping keys the
/// user set explicitly.
fn merge_config(args: Vec<String>) -> Result<Vec<String>, Failure> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(args);
    };
    let mut args = args;
    let path = if let Some(v) = args[pos].strip_prefix("--config=") {
        let v = v.to_string();
        args.remove(pos);
        v
    } else {
        if pos + 1 >= args.len() {
            return Err(Failure::usage("--config needs a path"));
        }
        let v = args.remove(pos + 1);
        args.remove(pos);
        v
    };
    if args
        .iter()
        .any(|a| a == "--config" || a.starts_with("--config="))
    {
        return Err(Failure::usage("--config given more than once"));
    }
    let entries = load_config(Path::new(&path)).map_err(|e| Failure::usage(e.to_string()))?;

    let sub_name = args.get(1).cloned().unwrap_or_default();
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(&sub_name)
        .ok_or_else(|| Failure::usage(format!("--config needs a subcommand, got {sub_name:?}")))?;
    let user_keys: HashSet<String> = args
        .iter()
        .skip(2)
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(Failure::usage(
                "config files cannot include other config files",
            ));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Failure::usage(format!("{path}: unknown key {key:?} for {sub_name}")))?;
        if user_keys.contains(&key) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}"));
            injected.push(value);
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                other => {
                    return Err(Failure::usage(format!(
                        "{path}: {key} expects a boolean, got {other:?}"
                    )))
                }
            }
        }
    }
    let tail = args.split_off(2);
    args.extend(injected);
    args.extend(tail);
    Ok(args)
}

/// Entry point shared by the binary and tests.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return f.code;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Mosaic(a) => cmd_mosaic(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn version_tag() -> String {
    format!("ocsc {}", env!("CARGO_PKG_VERSION"))
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let mode: TrainMode = a.mode.parse()?;
    let spec = a.preprocess.spec(a.seed);
    let data = SampleDir::open(&a.data, spec.clone())?;
    let test = match &a.test {
        Some(dir) => Some(SampleDir::open(dir, spec.clone())?.load_all()?),
        None => None,
    };
    let mut filter_dims = parse_extent(&a.filter_size)?;
    if !data.is_empty() {
        let first = data.get(0).map_err(|e| e.at_sample(0))?;
        if filter_dims.len() == 1 && first.dims().len() == 2 {
            filter_dims = vec![filter_dims[0]; 2];
        }
    }
    let cfg = TrainConfig {
        num_filters: a.k,
        filter_dims,
        beta: a.coding.beta,
        rho_code: a.coding.rho_code,
        rho_dict: a.rho_dict,
        inner_j: a.inner_j,
        max_passes: a.passes,
        stop_tol: a.stop_tol,
        seed: a.seed,
        mode,
        code_max_iters: a.coding.code_iters,
        code_rel_tol: a.coding.code_tol,
        eval_every: a.eval_every,
    };
    let (dict, report) = train(&data, &cfg, test.as_deref())?;
    save_dictionary(&dict, &a.out)?;
    if let Some(path) = &a.report {
        let mut meta = vec![
            ("version".to_string(), version_tag()),
            ("command".to_string(), "train".to_string()),
            ("data".to_string(), a.data.display().to_string()),
            ("samples".to_string(), data.len().to_string()),
        ];
        if let Some(t) = &a.test {
            meta.push(("test".to_string(), t.display().to_string()));
        }
        meta.extend(config_metadata(&cfg));
        meta.extend(preprocess_metadata(&spec));
        meta.push((
            "stopped_early".to_string(),
            report.stopped_early.to_string(),
        ));
        write_report(path, &meta, &report_rows(&report))?;
    }
    if let Some(last) = report.records.last() {
        println!(
            "trained {} filters on {} samples: train_obj={:.6} passes={}",
            dict.num_filters(),
            report.samples_seen,
            last.train_objective,
            last.pass
        );
    } else {
        println!("no training samples; wrote the initial dictionary");
    }
    Ok(())
}

fn config_metadata(cfg: &TrainConfig) -> Vec<(String, String)> {
    let dims: Vec<String> = cfg.filter_dims.iter().map(ToString::to_string).collect();
    [
        ("mode", cfg.mode.to_string()),
        ("k", cfg.num_filters.to_string()),
        ("filter_size", dims.join("x")),
        ("beta", cfg.beta.to_string()),
        ("rho_code", cfg.rho_code.to_string()),
        ("rho_dict", cfg.rho_dict.to_string()),
        ("inner_j", cfg.inner_j.to_string()),
        ("passes", cfg.max_passes.to_string()),
        ("stop_tol", cfg.stop_tol.to_string()),
        ("seed", cfg.seed.to_string()),
        ("code_iters", cfg.code_max_iters.to_string()),
        ("code_tol", cfg.code_rel_tol.to_string()),
        (
            "eval_every",
            cfg.eval_every
                .map(|v| v.to_string())
                .unwrap_or_else(|| "none".into()),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn preprocess_metadata(spec: &PreprocessSpec) -> Vec<(String, String)> {
    [
        ("lcn_window", spec.lcn_window.to_string()),
        ("lcn_sigma", spec.lcn_sigma.to_string()),
        ("lcn_epsilon", spec.lcn_epsilon.to_string()),
        ("taper_size", spec.taper_size.to_string()),
        (
            "taper_sigma_range",
            format!("{}..{}", spec.taper_sigma_range.0, spec.taper_sigma_range.1),
        ),
        (
            "psnr_scale",
            "sample pixel_scale (1 for preprocessed images)".to_string(),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let dict = load_dictionary(&a.dict)?;
    let spec = a.preprocess.spec(a.seed);
    let test = SampleDir::open(&a.test, spec.clone())?.load_all()?;
    let cfg = a.coding.config();
    let start = Instant::now();
    let result = evaluate(&dict, &test, &cfg, false)?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(path) = &a.report {
        let mut meta = vec![
            ("version".to_string(), version_tag()),
            ("command".to_string(), "eval".to_string()),
            ("dict".to_string(), a.dict.display().to_string()),
            ("test".to_string(), a.test.display().to_string()),
            ("samples".to_string(), test.len().to_string()),
            ("beta".to_string(), cfg.beta.to_string()),
            ("rho_code".to_string(), cfg.rho.to_string()),
            ("code_iters".to_string(), cfg.max_iters.to_string()),
            ("code_tol".to_string(), cfg.rel_tol.to_string()),
            ("seed".to_string(), a.seed.to_string()),
            (
                "perfect_reconstructions".to_string(),
                result.perfect_reconstructions.to_string(),
            ),
        ];
        meta.extend(preprocess_metadata(&spec));
        let row = ReportRow {
            pass: None,
            time_s: Some(elapsed),
            train_obj: None,
            test_obj: Some(result.test_objective),
            psnr: Some(result.psnr),
            history_bytes: None,
        };
        write_report(path, &meta, &[row])?;
    }
    println!(
        "test_obj={:.6} psnr={:.4}",
        result.test_objective, result.psnr
    );
    Ok(())
}

fn load_input(path: &Path, spec: &PreprocessSpec) -> Result<Sample, Error> {
    if path.extension().and_then(|e| e.to_str()) == Some(SAMPLE_EXT) {
        load_sample(path)
    } else {
        preprocess_file(path, spec, 0)
    }
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<(), Failure> {
    let dict = load_dictionary(&a.dict)?;
    let x = load_input(&a.input, &a.preprocess.spec(a.seed))?;
    let shape = SignalShape::new(x.dims().to_vec(), dict.filter_dims().to_vec())?;
    let fourier = Arc::new(Fourier::new(&shape));
    let freq = dict.to_freq(&fourier)?;
    let code = infer_code(x.data(), &freq, &a.coding.config(), None)?;
    let rec = freq.reconstruct(&code.u)?;
    let out = Sample::new(x.dims().to_vec(), rec)?.with_pixel_scale(x.pixel_scale);
    let is_png = a
        .out
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        write_png(&out, &a.out)?;
    } else {
        save_sample(&out, &a.out)?;
    }
    let psnr = crate::eval::psnr_db(x.data(), out.data(), x.pixel_scale);
    println!("psnr={psnr:.4} nonzeros={:.4}", 1.0 - code.zero_fraction());
    Ok(())
}

fn write_png(sample: &Sample, path: &Path) -> Result<(), Error> {
    let (h, w) = match sample.dims() {
        [h, w] => (*h, *w),
        [n] => (1, *n),
        _ => unreachable!("samples have one or two axes"),
    };
    let (lo, hi) = sample
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let pixels: Vec<u8> = sample
        .data()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, pixels).expect("buffer matches dims");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn cmd_mosaic(a: MosaicArgs) -> Result<(), Failure> {
    let dict = load_dictionary(&a.dict)?;
    export_mosaic(&dict, &a.out)?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let dims = parse_extent(&a.p)?;
    let mut filter_dims = parse_extent(&a.m)?;
    if filter_dims.len() == 1 && dims.len() == 2 {
        filter_dims = vec![filter_dims[0]; 2];
    }
    let spec = SynthSpec {
        noise_sigma: a.sigma,
        code_density: a.density,
        ..SynthSpec::new(dims, filter_dims, a.k, a.n, a.seed)
    };
    let data = synth_generate(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let samples = if a.raw { &data.raw } else { &data.consistent };
    for (i, s) in samples.iter().enumerate() {
        save_sample(s, &a.out.join(format!("sample_{i:05}.{SAMPLE_EXT}")))?;
    }
    save_dictionary(&data.dictionary, &a.out.join("truth.dic"))?;
    println!("wrote {} samples to {}", samples.len(), a.out.display());
    Ok(())
}
