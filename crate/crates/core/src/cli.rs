//! Command-line front end.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{generate_synthetic_video, split_videos, SceneSpec, VideoDataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_directories, export_plot, export_report, EmptyPolicy};
use crate::service::{self, AppState, ServiceConfig};
use crate::session::{export_masks, load_session, propagate_session, save_session};
use crate::training::{train_reference, ToySegmenter, TrainingConfig};

#[derive(Debug, Parser)]
#[command(name = "annotkit", version, about = "Video segmentation annotation engine and evaluation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predicted masks against ground truth and write a per-video CSV.
    Evaluate(EvaluateArgs),
    /// Split video ids into train and test sets.
    Split(SplitArgs),
    /// Render a synthetic video from a scene spec.
    Synth(SynthArgs),
    /// Train the reference toy segmenter and write a checkpoint.
    TrainRef(TrainArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Write mask PNGs from a saved session.
    Export(ExportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EmptyMode {
    /// Frames where prediction and ground truth are both empty score IoU 1.
    ScoreOne,
    /// Such frames are left out of the IoU series.
    Skip,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of `<video_id>/` folders with predicted masks.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset root with `<video_id>/labels/`.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Restrict ground truth to these class ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<u32>,
    #[arg(long, value_enum, default_value = "score-one")]
    pub empty: EmptyMode,
    /// Also write a bar chart.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["ids", "n"])))]
pub struct SplitArgs {
    /// File with one video id per line.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// Generate ids `video_01..video_N`.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output TOML file; printed to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Dataset root; the video is written to `<out>/<video_id>/`.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (TOML); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directories with ground truth.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    /// Scene specs rendered on the fly as extra training videos.
    #[arg(long)]
    pub scene: Vec<PathBuf>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Skip the merged per-frame masks.
    #[arg(long)]
    pub no_merged: bool,
    /// Propagate first when the session has not been propagated.
    #[arg(long)]
    pub propagate: bool,
    /// Service config used to find the backends.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SplitFile<'a> {
    seed: u64,
    fraction: f64,
    train: Vec<&'a str>,
    test: Vec<&'a str>,
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let include: Option<BTreeSet<u32>> = (!a.classes.is_empty()).then(|| a.classes.iter().copied().collect());
    let policy = match a.empty {
        EmptyMode::ScoreOne => EmptyPolicy::ScoreOne,
        EmptyMode::Skip => EmptyPolicy::Skip,
    };
    let records = evaluate_directories(&a.pred, &a.gt, include.as_ref(), policy)?;
    export_report(&records, &a.out)?;
    if let Some(p) = &a.plot {
        export_plot(&records, p)?;
    }
    for r in &records {
        println!(
            "{}\t{} frames\tIoU {:.4} ± {:.4}\tPAC {:.4} ± {:.4}",
            r.video_id,
            r.frames(),
            r.iou_mean,
            r.iou_std,
            r.pac_mean,
            r.pac_std
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn split(a: SplitArgs) -> Result<()> {
    let ids = match (&a.ids, a.n) {
        (Some(p), _) => read_ids(p)?,
        (None, Some(n)) => (1..=n).map(|i| format!("video_{i:02}")).collect(),
        (None, None) => unreachable!("clap enforces one source"),
    };
    let s = split_videos(&ids, a.fraction, a.seed)?;
    let file = SplitFile {
        seed: s.seed,
        fraction: a.fraction,
        train: s.train_ids.iter().map(String::as_str).collect(),
        test: s.test_ids.iter().map(String::as_str).collect(),
    };
    let text = toml::to_string(&file).expect("split file serializes");
    match &a.out {
        Some(p) => {
            std::fs::write(p, &text).map_err(|e| Error::io(p, e))?;
            println!("train {} / test {} -> {}", file.train.len(), file.test.len(), p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SceneSpec::load(&a.spec)?;
    let video = generate_synthetic_video(&spec)?;
    let dir = video.dataset.write(&a.out)?;
    println!("{} frames -> {}", spec.frames, dir.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            TrainingConfig::from_toml(&text)?
        }
        None => TrainingConfig::default(),
    };
    if let Some(n) = a.max_steps {
        cfg.max_steps = n;
    }
    let mut data: Vec<VideoDataset> = a.data.iter().map(|p| VideoDataset::load(p)).collect::<Result<_>>()?;
    for p in &a.scene {
        data.push(generate_synthetic_video(&SceneSpec::load(p)?)?.dataset);
    }
    if data.is_empty() {
        return Err(Error::validation("no_training_data", "pass --data or --scene"));
    }
    let mut model = ToySegmenter::new(cfg.seed);
    let out = train_reference(&mut model, &data, &cfg, &a.out)?;
    println!(
        "{} optimizer steps, lr {:e}, train IoU {}",
        out.state.optimizer_step,
        out.state.current_lr,
        out.train_iou.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    println!("checkpoint {}\nmanifest {}\nlog {}", out.checkpoint.display(), out.manifest.display(), out.log_path.display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    let state = Arc::new(AppState::new(cfg));
    let restored = state.restore_sessions()?;
    if restored > 0 {
        log::info!("restored {restored} sessions");
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(service::serve(state))
}

fn export(a: ExportArgs) -> Result<()> {
    let cfg = ServiceConfig::load(a.config.as_deref())?;
    let state = AppState::new(cfg);
    let mut s = load_session(&a.session, &state.registry)?;
    if s.propagation().is_none() && a.propagate {
        propagate_session(&mut s)?;
        save_session(&s, &a.session)?;
    }
    let manifest = export_masks(&s, &a.out, !a.no_merged)?;
    println!("{} files -> {}", manifest.entries.len(), a.out.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Split(a) => split(a),
        Command::Synth(a) => synth(a),
        Command::TrainRef(a) => train(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            1
        }
    }
}
