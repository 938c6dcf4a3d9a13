//! The `msdnet` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or data, 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::denoise::{denoise_cube_with_sigma, spectral_windows, DenoiseError};
use crate::hsi::rng::derive_seed;
use crate::hsi::{add_awgn, export_band_pgm, extract_patches, load_cube, save_cube, synth_cube, HsiCube, HsiError, NoiseSpec};
use crate::metrics::evaluate;
use crate::tensor::Fault;
use crate::train::{load_checkpoint, save_checkpoint, train_with, Checkpoint, Progress, TrainError};
use crate::verify::{run_suite, Suite, VerifyOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "msdnet", version, about = "Hyperspectral denoising with a noise-level estimator and residual U-Net")]
pub struct Cli {
    /// Worker threads for per-sample parallelism (0 = one per core).
    #[arg(long, global = true, env = "MSDNET_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic smooth cube.
    Synth(SynthArgs),
    /// Corrupt a cube with seeded Gaussian noise.
    AddNoise(AddNoiseArgs),
    /// Train on every `.hsif` cube in a directory.
    Train(TrainArgs),
    /// Denoise a cube with a trained checkpoint.
    Denoise(DenoiseArgs),
    /// Noisy vs denoised PSNR / SSIM / SAM over noise settings.
    Evaluate(EvaluateArgs),
    /// Gradient checks and brute-force oracle comparisons.
    Verify(VerifyArgs),
    /// Write one band as an 8-bit PGM image.
    ExportBand(ExportBandArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub bands: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub height: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub width: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("level").required(true).args(["sigma", "blind"])))]
pub struct AddNoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Noise level on the 0-255 scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Per-band levels drawn uniformly from `[LO, HI]`.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub blind: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the true sigma map (values on [0,1] scale).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key = value` run configuration; absent keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    /// Continue from this checkpoint up to the configured epoch count.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the estimated sigma map.
    #[arg(long)]
    pub sigma_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "30,50,70")]
    pub sigmas: Vec<f64>,
    /// Adds a blind setting with per-band levels in `[LO, HI]`.
    #[arg(long, value_delimiter = ',', num_args = 1, value_names = ["LO,HI"])]
    pub blind: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output (`noise,index,method,value`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all")]
    pub suite: Suite,
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Corrupt the convolution weight gradient to prove the checks bite.
    #[arg(long)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct ExportBandArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Zero-based band index.
    #[arg(long)]
    pub band: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<HsiError> for CliError {
    fn from(e: HsiError) -> Self {
        match e {
            HsiError::BandOutOfRange { .. } | HsiError::InvalidNoise(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

type CmdResult = Result<(), CliError>;

fn read_cube(path: &Path) -> Result<HsiCube, CliError> {
    load_cube(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_cube(cube: &HsiCube, path: &Path) -> CmdResult {
    save_cube(cube, path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    let cube = synth_cube(a.seed, a.bands as usize, a.height as usize, a.width as usize)?;
    write_cube(&cube, &a.out)?;
    let (lo, hi) = cube.value_range();
    let _ = writeln!(out, "{}x{}x{} range [{lo:.4}, {hi:.4}] -> {}", a.bands, a.height, a.width, a.out.display());
    Ok(())
}

fn cmd_add_noise(a: &AddNoiseArgs) -> CmdResult {
    let spec = match (&a.sigma, &a.blind) {
        (Some(s), None) => NoiseSpec::fixed(*s, a.seed),
        (None, Some(b)) => NoiseSpec::blind(b[0], b[1], a.seed),
        _ => return Err(CliError::usage("give exactly one of --sigma or --blind")),
    };
    let cube = read_cube(&a.input)?;
    let (noisy, truth) = add_awgn(&cube, &spec)?;
    write_cube(&noisy, &a.out)?;
    if let Some(p) = &a.truth {
        write_cube(&truth.to_cube(), p)?;
    }
    Ok(())
}

/// Every `.hsif` file of `dir`, by file name, normalised to [0,1].
fn load_training_cubes(dir: &Path) -> Result<Vec<(PathBuf, HsiCube)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "hsif"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| read_cube(&p).map(|c| (p, c.normalized_unit())))
        .collect()
}

fn training_patches(cubes: &[(PathBuf, HsiCube)], cfg: &RunConfig) -> Result<Vec<HsiCube>, CliError> {
    let bands = cfg.model.bands();
    let mut patches = Vec::new();
    for (path, cube) in cubes {
        let starts = spectral_windows(cube.bands(), bands);
        if starts.is_empty() {
            return Err(CliError::data(format!(
                "{}: {} bands, model needs at least {bands}",
                path.display(),
                cube.bands()
            )));
        }
        for start in starts {
            let sub = cube.band_range(start, bands)?;
            patches.extend(extract_patches(&sub, cfg.train.patch_size, cfg.train.stride())?);
        }
    }
    Ok(patches)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let _ = write!(err, "# run configuration\n{}", cfg.to_text());
    let cubes = load_training_cubes(&a.data_dir)?;
    if cubes.is_empty() {
        return Err(CliError::data(format!("no .hsif cubes in {}", a.data_dir.display())));
    }
    let patches = training_patches(&cubes, &cfg)?;
    if patches.is_empty() {
        return Err(CliError::data(format!(
            "cubes in {} are smaller than patch_size {}",
            a.data_dir.display(),
            cfg.train.patch_size
        )));
    }
    let resume = a.resume.as_deref().map(read_checkpoint).transpose()?;
    let _ = writeln!(err, "# {} patches of {}x{}x{}", patches.len(), cfg.model.bands(), patches[0].height(), patches[0].width());
    let _ = writeln!(out, "epoch,loss");
    let mut observer = |p: Progress| {
        if let Progress::Epoch { epoch, mean_loss } = p {
            let _ = writeln!(out, "{},{mean_loss:?}", epoch + 1);
        }
    };
    match train_with(&patches, &cfg, resume, &mut observer) {
        Ok(ckpt) => save_checkpoint(&ckpt, &a.out_checkpoint)
            .map_err(|e| CliError::data(format!("{}: {e}", a.out_checkpoint.display()))),
        Err(TrainError::NonFiniteLoss {
            epoch,
            step,
            detail,
            last_good,
        }) => {
            save_checkpoint(&last_good, &a.out_checkpoint)
                .map_err(|e| CliError::data(format!("{}: {e}", a.out_checkpoint.display())))?;
            Err(CliError {
                code: EXIT_NUMERIC,
                message: format!(
                    "non-finite loss at epoch {}, step {step}: {detail}; wrote last good checkpoint (epoch {}) to {}",
                    epoch + 1,
                    last_good.epoch,
                    a.out_checkpoint.display()
                ),
            })
        }
        Err(e @ (TrainError::Config(_) | TrainError::ResumeMismatch(_))) => Err(CliError::usage(e.to_string())),
        Err(e) => Err(CliError::data(e.to_string())),
    }
}

fn denoise_error(e: DenoiseError) -> CliError {
    CliError::data(e.to_string())
}

fn cmd_denoise(a: &DenoiseArgs) -> CmdResult {
    let cube = read_cube(&a.input)?;
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let (den, sigma) = denoise_cube_with_sigma(&cube, &ckpt.model).map_err(denoise_error)?;
    write_cube(&den, &a.out)?;
    if let Some(p) = &a.sigma_out {
        write_cube(&sigma, p)?;
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> CmdResult {
    let clean = read_cube(&a.clean)?.normalized_unit();
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let mut settings: Vec<NoiseSpec> = a
        .sigmas
        .iter()
        .enumerate()
        .map(|(k, &s)| NoiseSpec::fixed(s, derive_seed(a.seed, &[k as u64])))
        .collect();
    if let Some(b) = &a.blind {
        let [lo, hi] = b[..] else {
            return Err(CliError::usage("--blind takes LO,HI"));
        };
        settings.push(NoiseSpec::blind(lo, hi, derive_seed(a.seed, &[settings.len() as u64])));
    }
    for s in &settings {
        s.validate()?;
    }
    let report = evaluate(&clean, &ckpt.model, &settings).map_err(|e| CliError::data(e.to_string()))?;
    let _ = write!(out, "{}", report.to_text());
    if let Some(p) = &a.report {
        fs::write(p, report.to_csv()).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let opts = VerifyOptions {
        seeds: a.seeds,
        fault: a.inject_fault.then_some(Fault::ConvBackward),
    };
    let report = run_suite(a.suite, &opts);
    let _ = write!(out, "{}", report.to_text());
    if report.all_passed() {
        let _ = writeln!(out, "all {} checks passed", report.checks.len());
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed()).count();
        Err(CliError {
            code: EXIT_USAGE,
            message: format!("{failed} of {} checks failed", report.checks.len()),
        })
    }
}

fn cmd_export_band(a: &ExportBandArgs) -> CmdResult {
    let cube = read_cube(&a.input)?;
    if a.band >= cube.bands() {
        return Err(CliError::usage(format!("band {} out of range (cube has {})", a.band, cube.bands())));
    }
    export_band_pgm(&cube, a.band, &a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::AddNoise(a) => cmd_add_noise(a),
        Command::Train(a) => cmd_train(a, out, err),
        Command::Denoise(a) => cmd_denoise(a),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::ExportBand(a) => cmd_export_band(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}
