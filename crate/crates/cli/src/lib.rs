//! The `ccc` command: dataset synthesis, training, inference, evaluation
//! and augmentation on top of `ccc-core`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use ccc_core::augmentation::{
    augment_dataset, augmented_training_set, write_augmented_dataset, AlphaMode, AugmentConfig, SourceSet,
    DEFAULT_JITTER_SIGMA,
};
use ccc_core::cfe::{cfe_histogram, guidance_illuminants, CfeEncoderConfig, FINGERPRINT_DIM};
use ccc_core::dataio::{generate_synthetic_dataset, load_camera_metadata, load_manifest, read_pfm, write_pfm_gray};
use ccc_core::estimator::{
    angular_error, estimate_illuminant, load_checkpoint, save_checkpoint, train, CcmModel, IlluminantEstimate,
    ModelConfig, TrainConfig,
};
use ccc_core::eval::{compute_stats, gray_world, ErrorStats};
use ccc_core::Error;

/// Failure of one invocation, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    /// 1 usage, 2 data or format, 3 numeric or convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                Error::Config(_) => 1,
                Error::Load(_)
                | Error::Format { .. }
                | Error::Io { .. }
                | Error::Shape(_)
                | Error::Domain(_)
                | Error::Estimation(_) => 2,
                Error::Numeric(_) | Error::Convergence { .. } | Error::Fit(_) | Error::Training(_) => 3,
                Error::Tensor(_) => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io { path: "<stdout>".into(), source: e })
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "ccc", version, about = "Cross-camera illuminant estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic multi-camera dataset.
    Synth {
        #[arg(long)]
        cameras: usize,
        #[arg(long)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a camera's fingerprint.
    Fingerprint {
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Also write the locus histogram the encoder sees.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train a model on a manifest, with optional augmentation.
    Train(TrainArgs),
    /// Estimate the illuminant of one image.
    Infer {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Write the probability map as a single-channel PFM.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Angular error statistics over a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_parser = ["gray-world"])]
        baseline: Option<String>,
        /// Write the statistics table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write one error per image and method as CSV.
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Write an augmented dataset with provenance records.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "uniform", value_parser = parse_alpha)]
        alpha: AlphaMode,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_JITTER_SIGMA)]
        jitter: f64,
    },
    /// Write the probability map of one image and print its peak and centroid.
    Heatmap {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to the checkpoint path with a
    /// `.loss.csv` extension.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    /// Epoch from which the learning rate is halved; defaults to half the epochs.
    #[arg(long)]
    pub lr_decay_epoch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "uniform", value_parser = parse_alpha)]
    pub alpha_mode: AlphaMode,
    /// Augmented samples added; defaults to the manifest size.
    #[arg(long)]
    pub aug_count: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_JITTER_SIGMA)]
    pub jitter: f64,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    #[arg(long, default_value = "16,32,64,128", value_parser = parse_widths)]
    pub widths: [usize; 4],
    #[arg(long, default_value_t = 64)]
    pub cfe_bins: usize,
    #[arg(long, default_value = "8,16,32,64", value_parser = parse_widths)]
    pub cfe_widths: [usize; 4],
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
}

fn parse_alpha(s: &str) -> Result<AlphaMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_widths(s: &str) -> Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected four comma-separated widths, got {}", v.len()))
}

/// Parses `args` (program name first) and runs the command, writing its
/// report to `out`. Help and version requests print and succeed.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    execute(cli.command, out)
}

pub fn execute(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Synth { cameras, scenes, seed, out: dir } => {
            let manifest = generate_synthetic_dataset(cameras, scenes, seed, &dir)?;
            writeln!(out, "wrote {} cameras x {} scenes to {}", cameras, scenes, manifest.display())?;
        }
        Command::Fingerprint { camera, model, csv } => {
            let cal = load_camera_metadata(&camera)?;
            let model = load_checkpoint(&model)?;
            let fp = model.fingerprint(&cal)?;
            let line: Vec<String> = fp.values().iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{}", line.join(" "))?;
            if let Some(path) = csv {
                let hist = cfe_histogram(&guidance_illuminants(&cal)?, model.config.encoder.input_bins)?;
                let spec = hist.spec();
                let mut s = String::from("iu,iv,u,v,weight\n");
                for iu in 0..spec.bins {
                    for iv in 0..spec.bins {
                        let _ = writeln!(
                            s,
                            "{iu},{iv},{:.6},{:.6},{:.6}",
                            spec.u_center(iu),
                            spec.v_center(iv),
                            hist.get(iu, iv)
                        );
                    }
                }
                write_text(&path, &s)?;
            }
        }
        Command::Train(args) => run_train(&args, out)?,
        Command::Infer { image, camera, model, heatmap } => {
            let est = infer(&image, &camera, &model)?;
            writeln!(out, "rgb {:.6} {:.6} {:.6}", est.rgb.r, est.rgb.g, est.rgb.b)?;
            writeln!(out, "uv {:.6} {:.6}", est.uv.u, est.uv.v)?;
            if let Some(path) = heatmap {
                write_heatmap(&path, &est)?;
            }
        }
        Command::Heatmap { image, camera, model, out: path } => {
            let est = infer(&image, &camera, &model)?;
            write_heatmap(&path, &est)?;
            let (k, peak) = est
                .heatmap
                .data
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
            let spec = &est.heatmap.spec;
            writeln!(
                out,
                "peak {:.6} at u {:.6} v {:.6}",
                peak,
                spec.u_center(k / spec.bins),
                spec.v_center(k % spec.bins)
            )?;
            writeln!(out, "centroid u {:.6} v {:.6}", est.uv.u, est.uv.v)?;
        }
        Command::Eval { manifest, model, baseline, csv, errors } => {
            let report = evaluate(&manifest, model.as_deref(), baseline.is_some())?;
            out.write_all(format_stats_table(&report.methods).as_bytes())?;
            if let Some(path) = csv {
                write_text(&path, &format_stats_csv(&report.methods))?;
            }
            if let Some(path) = errors {
                write_text(&path, &report.errors_csv())?;
            }
        }
        Command::Augment { manifest, out: dir, seed, alpha, count, jitter } => {
            let source = SourceSet::from_manifest(&load_manifest(&manifest)?)?;
            let cfg = AugmentConfig { mode: alpha, count, jitter_sigma: jitter, seed };
            let set = augment_dataset(&source, &cfg)?;
            let path = write_augmented_dataset(&set, &dir)?;
            writeln!(
                out,
                "wrote {} samples to {} ({} sources skipped, {} draws rejected)",
                set.samples.len(),
                path.display(),
                set.pool_skipped,
                set.rejected_draws
            )?;
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.display().to_string(), source: e }.into())
}

fn infer(image: &Path, camera: &Path, model: &Path) -> CliResult<IlluminantEstimate> {
    let img = read_pfm(image)?;
    let cal = load_camera_metadata(camera)?;
    let model = load_checkpoint(model)?;
    Ok(estimate_illuminant(&img, &cal, &model)?)
}

/// Rows follow `u`, columns follow `v`.
fn write_heatmap(path: &Path, est: &IlluminantEstimate) -> CliResult<()> {
    let n = est.heatmap.spec.bins;
    Ok(write_pfm_gray(path, n, n, &est.heatmap.data)?)
}

/// Model configuration selected by the size flags.
pub fn model_config(args: &TrainArgs) -> ModelConfig {
    let enc = CfeEncoderConfig {
        input_bins: args.cfe_bins,
        widths: args.cfe_widths,
        hidden: args.hidden,
        out_dim: FINGERPRINT_DIM,
    };
    ModelConfig::reduced(args.bins, args.widths, enc)
}

/// Default loss CSV location next to the checkpoint.
pub fn loss_csv_path(args: &TrainArgs) -> PathBuf {
    args.loss_csv.clone().unwrap_or_else(|| args.out.with_extension("loss.csv"))
}

fn run_train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut model = CcmModel::init(model_config(args), args.seed)?;
    let source = SourceSet::from_manifest(&load_manifest(&args.manifest)?)?;
    let aug_cfg = AugmentConfig {
        mode: args.alpha_mode,
        count: args.aug_count,
        jitter_sigma: args.jitter,
        seed: args.seed,
    };
    let (set, aug) =
        augmented_training_set(&source, &aug_cfg, model.config.query, model.config.encoder.input_bins)?;
    log::info!(
        "{} source + {} augmented samples over {} calibrations",
        source.samples.len(),
        aug.samples.len(),
        set.cameras().len()
    );
    let cfg = TrainConfig {
        batch_size: args.batch,
        epochs: args.epochs,
        lr: args.lr,
        lr_decay_epoch: args.lr_decay_epoch.unwrap_or(args.epochs / 2),
        seed: args.seed,
        ..Default::default()
    };
    let report = train(&mut model, &set, &cfg, |e, l| log::info!("epoch {e}: loss {l:.6}"))?;
    save_checkpoint(&args.out, &model)?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(csv, "{e},{l:.6}");
    }
    let loss_path = loss_csv_path(args);
    write_text(&loss_path, &csv)?;
    writeln!(
        out,
        "trained on {} samples for {} steps; final loss {:.6}; wrote {} and {}",
        set.len(),
        report.steps,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        args.out.display(),
        loss_path.display()
    )?;
    Ok(())
}

/// Per-image errors of each evaluated method, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub images: Vec<PathBuf>,
    pub methods: Vec<(String, Vec<f64>, ErrorStats)>,
}

impl EvalReport {
    pub fn errors_csv(&self) -> String {
        let mut s = String::from("index,image_path,method,error\n");
        for (name, errs, _) in &self.methods {
            for (i, (p, e)) in self.images.iter().zip(errs).enumerate() {
                let _ = writeln!(s, "{i},{},{name},{e:.6}", p.display());
            }
        }
        s
    }
}

/// Angular errors of the model (labelled `model`) and optionally the
/// gray-world baseline on every manifest image.
pub fn evaluate(manifest: &Path, model: Option<&Path>, gray_world_baseline: bool) -> CliResult<EvalReport> {
    if model.is_none() && !gray_world_baseline {
        return Err(CliError::Usage("eval needs --model, --baseline or both".into()));
    }
    let m = load_manifest(manifest)?;
    let model = model.map(load_checkpoint).transpose()?;
    let mut model_errs = Vec::new();
    let mut gw_errs = Vec::new();
    for (i, e) in m.entries.iter().enumerate() {
        let img = m.load_image(i)?;
        if let Some(model) = &model {
            let est = estimate_illuminant(&img, m.calibration(&e.camera_id)?, model)?;
            model_errs.push(angular_error(est.rgb, e.gt)?);
        }
        if gray_world_baseline {
            gw_errs.push(angular_error(gray_world(&img)?, e.gt)?);
        }
    }
    let mut methods = Vec::new();
    if model.is_some() {
        let s = compute_stats(&model_errs)?;
        methods.push(("model".to_string(), model_errs, s));
    }
    if gray_world_baseline {
        let s = compute_stats(&gw_errs)?;
        methods.push(("gray-world".to_string(), gw_errs, s));
    }
    Ok(EvalReport { images: m.entries.iter().map(|e| e.image_path.clone()).collect(), methods })
}

const STAT_NAMES: [&str; 5] = ["mean", "median", "trimean", "best25", "worst25"];

fn stat_values(s: &ErrorStats) -> [f64; 5] {
    [s.mean, s.median, s.trimean, s.best25_mean, s.worst25_mean]
}

pub fn format_stats_table(methods: &[(String, Vec<f64>, ErrorStats)]) -> String {
    let w = methods.iter().map(|m| m.0.len()).max().unwrap_or(0).max("method".len());
    let mut s = format!("{:<w$}", "method");
    for n in STAT_NAMES {
        let _ = write!(s, " {n:>10}");
    }
    s.push('\n');
    for (name, _, st) in methods {
        let _ = write!(s, "{name:<w$}");
        for v in stat_values(st) {
            let _ = write!(s, " {v:>10.6}");
        }
        s.push('\n');
    }
    s
}

pub fn format_stats_csv(methods: &[(String, Vec<f64>, ErrorStats)]) -> String {
    let mut s = format!("method,{}\n", STAT_NAMES.join(","));
    for (name, _, st) in methods {
        let vals: Vec<String> = stat_values(st).iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{name},{}", vals.join(","));
    }
    s
}
