//! `contrnp` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod manifest;
mod run_config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use contrnp::checkpoint::{load_checkpoint, load_checkpoint_expect, save_checkpoint, Checkpoint};
use contrnp::data::{load_csv, segmentize, segments_to_series, synth_generate, write_csv, ContextSampler, Segment};
use contrnp::eval::{self, extract, label_sweep_encoded, write_sweep_csv};
use contrnp::trainer::{rng_for, train_with};

use manifest::Manifest;
use run_config::RunConfig;

/// RNG stream for forecast context draws.
const FORECAST_STREAM: u64 = 5;

#[derive(Parser, Debug)]
#[command(name = "contrnp", version, about = "Contrastive neural processes for time series")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the labelled synthetic waveform dataset as CSV.
    Synth(SynthArgs),
    /// Train an encoder; writes a checkpoint and the per-step loss log.
    Train(TrainArgs),
    /// Linear-probe and clustering metrics of a trained encoder.
    Eval(EvalArgs),
    /// Probe accuracy as a function of the labelled fraction.
    SweepLabels(SweepArgs),
    /// Predict a full window from a sampled context set.
    Forecast(ForecastArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    classes: Option<usize>,
    /// Segments per class.
    #[arg(long)]
    segments: Option<usize>,
    /// Points per segment.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Overrides `train.window_size`.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug)]
struct ModelInput {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Overrides `train.window_size`.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: ModelInput,
    #[arg(long)]
    label_fraction: Option<f64>,
    /// Metrics CSV path.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: ModelInput,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.8")]
    fractions: Vec<f64>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: ModelInput,
    #[arg(long, default_value_t = 0)]
    segment_id: usize,
    #[arg(long, default_value_t = 40)]
    n_context: usize,
    /// Channel written to the CSV.
    #[arg(long, default_value_t = 0)]
    channel: usize,
    #[arg(long, default_value = "forecast.csv")]
    out: PathBuf,
}

/// Error category, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

fn categorize(err: &anyhow::Error) -> Category {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<contrnp::Error>() {
            return match e {
                contrnp::Error::Config(_) => Category::Usage,
                contrnp::Error::NonFinite { .. } | contrnp::Error::Domain { .. } => Category::Numeric,
                _ => Category::Data,
            };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return Category::Usage;
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return Category::Usage;
        }
    }
    Category::Data
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Category::Usage as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => evaluate(a),
        Command::SweepLabels(a) => sweep(a),
        Command::Forecast(a) => forecast(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(categorize(&e) as u8)
        }
    }
}

fn out_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Config with command-line overrides applied and validated.
fn resolve(common: &Common, window: Option<usize>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.train.seed = s;
        cfg.eval.seed = s;
    }
    if let Some(w) = window {
        cfg.train.window_size = w;
    }
    Ok(cfg)
}

fn load_segments(path: &Path, cfg: &RunConfig) -> anyhow::Result<Vec<Segment>> {
    let series = load_csv(path, &cfg.data.schema())?;
    let mut segments = segmentize(&series, cfg.train.window_size, cfg.train.stride())?;
    if cfg.data.window_normalize {
        segments.iter_mut().for_each(Segment::normalize);
    }
    log::info!("{}: {} segments of {} points", path.display(), segments.len(), cfg.train.window_size);
    Ok(segments)
}

fn load_model(input: &ModelInput, cfg: &RunConfig, explicit_config: bool, channels: usize) -> anyhow::Result<Checkpoint> {
    let ck = if explicit_config {
        load_checkpoint_expect(&input.checkpoint, &cfg.train.model_config(channels), Some(cfg.train.hash()))
    } else {
        load_checkpoint(&input.checkpoint)
    };
    let ck = ck.with_context(|| format!("loading checkpoint {}", input.checkpoint.display()))?;
    if ck.model.config().channels != channels {
        return Err(contrnp::Error::Shape {
            op: "checkpoint channels",
            lhs: vec![ck.model.config().channels],
            rhs: vec![channels],
        })
        .context("checkpoint does not match the data");
    }
    Ok(ck)
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg = resolve(&a.common, None)?;
    let s = &mut cfg.synth;
    if let Some(v) = a.classes {
        s.n_classes = v;
    }
    if let Some(v) = a.segments {
        s.segments_per_class = v;
    }
    if let Some(v) = a.window {
        s.window_len = v;
        cfg.train.window_size = v;
    }
    if let Some(v) = a.noise {
        s.noise_sd = v;
    }
    let seed = cfg.train.seed;
    let segments = synth_generate(&cfg.synth, &mut rng_for(seed, 0))?;
    write_csv(&segments_to_series(&segments)?, &a.out)?;
    log::info!("wrote {} segments to {}", segments.len(), a.out.display());
    let mut m = Manifest::new("synth", seed, &cfg);
    m.output(&a.out);
    m.write(&out_dir(&a.out))?;
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = resolve(&a.common, a.window)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(l) = a.lambda {
        cfg.train.lambda = l;
    }
    cfg.train.validate().map_err(|e| usage(e.to_string()))?;
    let segments = load_segments(&a.data, &cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let hash = cfg.train.hash();
    let seed = cfg.train.seed;
    let every = cfg.train.checkpoint_every;
    let mut manifest = Manifest::new("train", seed, &cfg);
    manifest.input(&a.data)?;
    let (model, log) = train_with(&segments, &cfg.train, |rec, model| {
        if rec.step % 50 == 0 {
            log::info!(
                "step {}: total {:.4} nll {:.4} contrastive {:.4}",
                rec.step,
                rec.total,
                rec.nll,
                rec.contrastive
            );
        }
        if every > 0 && rec.step % every == 0 {
            save_checkpoint(model, hash, seed, &a.out.join(format!("step_{:06}.ckpt", rec.step)))?;
        }
        Ok(())
    })?;
    let ck = a.out.join("model.ckpt");
    save_checkpoint(&model, hash, seed, &ck)?;
    let log_path = a.out.join("train_log.csv");
    log.write_csv(&log_path)?;
    manifest.output(&ck);
    manifest.output(&log_path);
    manifest.write(&a.out)?;
    if let Some(last) = log.records.last() {
        log::info!("finished after {} steps, final loss {:.4}", last.step, last.total);
    } else {
        log::warn!("no optimizer steps were taken (epochs = 0 or too few segments for a batch)");
    }
    Ok(())
}

/// Shared front half of the model-consuming commands.
fn prepare(common: &Common, input: &ModelInput) -> anyhow::Result<(RunConfig, Vec<Segment>, Checkpoint, Manifest)> {
    let cfg = resolve(common, input.window)?;
    let segments = load_segments(&input.data, &cfg)?;
    let channels = segments.first().map(Segment::channels).ok_or_else(|| anyhow!("no segments in data"))?;
    let ck = load_model(input, &cfg, common.config.is_some(), channels)?;
    let mut m = Manifest::new("", cfg.eval.seed, &cfg);
    m.input(&input.checkpoint)?;
    m.input(&input.data)?;
    Ok((cfg, segments, ck, m))
}

fn evaluate(a: EvalArgs) -> anyhow::Result<()> {
    let (mut cfg, segments, ck, mut m) = prepare(&a.common, &a.input)?;
    if let Some(f) = a.label_fraction {
        cfg.eval.label_fraction = f;
    }
    m.command = "eval".into();
    m.config = cfg.clone();
    let report = eval::evaluate(&ck.model, &segments, &cfg.train.sampler(), &cfg.eval)?;
    log::info!(
        "accuracy {:.4} auprc {:.4} silhouette {:.4} dbi {:.4}",
        report.accuracy,
        report.auprc,
        report.silhouette,
        report.davies_bouldin
    );
    report.write_csv(cfg.eval.seed, &a.out)?;
    m.output(&a.out);
    m.write(&out_dir(&a.out))?;
    Ok(())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    if a.fractions.is_empty() {
        return Err(usage("--fractions needs at least one value"));
    }
    let (cfg, segments, ck, mut m) = prepare(&a.common, &a.input)?;
    m.command = "sweep-labels".into();
    let enc = extract(&ck.model, &segments, cfg.eval.m_views, &cfg.train.sampler(), cfg.eval.seed)?;
    let points = label_sweep_encoded(&enc, &a.fractions, &cfg.eval)?;
    for p in &points {
        log::info!("fraction {:.2}: accuracy {:.4} auprc {:.4}", p.fraction, p.accuracy, p.auprc);
    }
    write_sweep_csv(&points, &a.out)?;
    m.output(&a.out);
    m.write(&out_dir(&a.out))?;
    Ok(())
}

fn forecast(a: ForecastArgs) -> anyhow::Result<()> {
    let (cfg, segments, ck, mut m) = prepare(&a.common, &a.input)?;
    m.command = "forecast".into();
    let segment = segments
        .get(a.segment_id)
        .ok_or_else(|| usage(format!("segment {} out of range ({} segments)", a.segment_id, segments.len())))?;
    let sampler = ContextSampler::fixed(cfg.train.context_a, cfg.train.context_b, a.n_context);
    let mut rng = rng_for(cfg.eval.seed, FORECAST_STREAM);
    let f = eval::forecast(&ck.model, segment, &sampler, &mut rng)?;
    log::info!("segment {}: RMSE {:.4}", a.segment_id, f.rmse());
    f.write_csv(a.channel, &a.out)?;
    m.output(&a.out);
    m.write(&out_dir(&a.out))?;
    Ok(())
}
