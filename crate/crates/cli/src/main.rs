//! `gestnet` — reproducible runs of the two-stream multi-task video
//! classifier: data pipeline, staged training, clip-averaged evaluation,
//! and the joint-vs-separate comparison.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gestnet_core::checkpoint::NetworkCheckpoint;
use gestnet_core::network::{Modality, StageTag};
use gestnet_core::Scalar;
use gestnet_data::dataset::{
    compute_missing_flow, labels_for, list_segment_ids, load_segment, preprocess_raw,
    save_segment,
};
use gestnet_data::splits::{load_splits, make_splits, save_splits, Split};
use gestnet_data::synth::synth_generate;
use gestnet_data::VideoSegment;
use gestnet_train::compare::run_baseline_comparison;
use gestnet_train::config::RunConfig;
use gestnet_train::metrics::evaluate;
use gestnet_train::trainer::{train_stage, StageInit};

#[derive(Parser)]
#[command(
    name = "gestnet",
    about = "Two-stream (RGB + optical flow) multi-task recurrent video classifier",
    version
)]
struct Cli {
    /// Number of worker threads (overrides GESTNET_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON (see `--profile` to start from a built-in).
    #[arg(long, conflicts_with = "profile")]
    config: Option<PathBuf>,

    /// Built-in profile: paper | desk.
    #[arg(long, conflicts_with = "config")]
    profile: Option<String>,

    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match (&self.config, &self.profile) {
            (Some(path), _) => RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            (None, Some(profile)) => RunConfig::by_profile(profile)?,
            (None, None) => bail!("either --config <file> or --profile <paper|desk> is required"),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModalityArg {
    Rgb,
    Flow,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Modality {
        match m {
            ModalityArg::Rgb => Modality::Rgb,
            ModalityArg::Flow => Modality::Flow,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a raw dataset (frames/ + transcript.txt per trial) into the
    /// processed archive (RGB frames only; run `flow` afterwards).
    Preprocess {
        #[command(flatten)]
        config: ConfigArgs,
        /// Raw dataset root (env GESTNET_DATA_ROOT).
        #[arg(long, env = "GESTNET_DATA_ROOT")]
        data_root: PathBuf,
        /// Processed archive root to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute flow-RGB frames for processed segments that lack them.
    Flow {
        #[command(flatten)]
        config: ConfigArgs,
        /// Processed archive root.
        #[arg(long)]
        data: PathBuf,
    },
    /// Generate the synthetic dataset into a processed archive.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write train/test split files.
    Splits {
        /// Processed archive to draw segment ids from.
        #[arg(long, conflicts_with = "total")]
        data: Option<PathBuf>,
        /// Generate numeric ids 0..total instead of reading a dataset.
        #[arg(long)]
        total: Option<usize>,
        /// Segments per training set.
        #[arg(long)]
        train: usize,
        /// Number of splits.
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a per-frame CNN on one modality.
    TrainFrame {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        /// Optional split file + index selecting the training subset.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        split_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a per-modality recurrent net from a frame checkpoint.
    TrainLstm {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        /// Frame-stage checkpoint to transfer conv + dense weights from.
        #[arg(long)]
        frame_ckpt: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        split_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the joint two-stream net from both recurrent checkpoints.
    TrainJoint {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// lstm-rgb checkpoint.
        #[arg(long)]
        rgb_ckpt: PathBuf,
        /// lstm-flow checkpoint.
        #[arg(long)]
        flow_ckpt: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        split_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a test set; writes metrics.json.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split file; evaluation runs on its test ids (all segments
        /// without one).
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        split_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint model vs separate-pipelines baseline over paired
    /// (seed, split) runs; writes comparison.csv and per-run metrics.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        /// Comma-separated seeds, one per split.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exclusive ownership of an output directory for the duration of a run.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| {
                format!(
                    "output directory {} is locked by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                )
            })?;
        Ok(DirLock { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn load_dataset(root: &Path) -> Result<Vec<VideoSegment>> {
    let ids = list_segment_ids(root)
        .with_context(|| format!("listing processed segments under {}", root.display()))?;
    if ids.is_empty() {
        bail!("no processed segments found under {}", root.display());
    }
    ids.iter()
        .map(|id| Ok(load_segment(root, id)?.0))
        .collect()
}

fn select_ids<'a>(
    data: &'a [VideoSegment],
    ids: Option<&[String]>,
) -> Result<Vec<&'a VideoSegment>> {
    match ids {
        None => Ok(data.iter().collect()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                data.iter()
                    .find(|s| &s.id == id)
                    .with_context(|| format!("split references unknown segment '{id}'"))
            })
            .collect(),
    }
}

fn load_split(path: Option<&PathBuf>, index: usize) -> Result<Option<Split>> {
    match path {
        None => Ok(None),
        Some(path) => {
            let splits = load_splits(path)
                .with_context(|| format!("loading splits {}", path.display()))?;
            splits.get(index).cloned().map(Some).with_context(|| {
                format!("split index {index} out of range ({} splits)", splits.len())
            })
        }
    }
}

fn load_checkpoint<S: Scalar>(path: &Path, what: &str) -> Result<NetworkCheckpoint<S>> {
    NetworkCheckpoint::load(path)
        .with_context(|| format!("loading {what} checkpoint from {}", path.display()))
}

fn owned(segments: Vec<&VideoSegment>) -> Vec<VideoSegment> {
    segments.into_iter().cloned().collect()
}

/// Run one training stage end to end: lock the output dir, freeze the
/// config, train, and leave `<stage>.ckpt` plus the loss trace behind.
fn run_train_stage<S: Scalar>(
    stage: StageTag,
    config: &RunConfig,
    data_root: &Path,
    split: Option<&PathBuf>,
    split_index: usize,
    init_paths: (Option<&PathBuf>, Option<&PathBuf>),
    out: &Path,
) -> Result<()> {
    let _lock = DirLock::acquire(out)?;
    config.freeze(out)?;
    let data = load_dataset(data_root)?;
    let split = load_split(split, split_index)?;
    let train = owned(select_ids(&data, split.as_ref().map(|s| s.train.as_slice()))?);

    let outcome = match stage {
        StageTag::FrameRgb | StageTag::FrameFlow => train_stage::<S>(
            stage,
            &train,
            config,
            StageInit::Seed,
            (1.0, 1.0),
            Some(out),
        )?,
        StageTag::LstmRgb | StageTag::LstmFlow => {
            let path = init_paths.0.context("train-lstm requires --frame-ckpt")?;
            let frame = load_checkpoint::<S>(path, "frame")?;
            train_stage::<S>(
                stage,
                &train,
                config,
                StageInit::Frame(&frame),
                (1.0, 1.0),
                Some(out),
            )?
        }
        StageTag::Joint => {
            let rgb_path = init_paths.0.context("train-joint requires --rgb-ckpt")?;
            let flow_path = init_paths.1.context("train-joint requires --flow-ckpt")?;
            let rgb = load_checkpoint::<S>(rgb_path, "lstm-rgb")?;
            let flow = load_checkpoint::<S>(flow_path, "lstm-flow")?;
            train_stage::<S>(
                stage,
                &train,
                config,
                StageInit::Both {
                    rgb: &rgb,
                    flow: &flow,
                },
                (1.0, 1.0),
                Some(out),
            )?
        }
    };
    println!(
        "{stage}: trained {} iterations, checkpoint at {}",
        outcome.checkpoint.iteration,
        out.join(format!("{stage}.ckpt")).display()
    );
    Ok(())
}

/// Dispatch on the config's training precision.
macro_rules! with_precision {
    ($config:expr, $fn:ident ( $($arg:expr),* $(,)? )) => {
        match $config.precision.as_str() {
            "f64" => $fn::<f64>($($arg),*),
            _ => $fn::<f32>($($arg),*),
        }
    };
}

fn cmd_eval<S: Scalar>(
    config: &RunConfig,
    data_root: &Path,
    checkpoint: &Path,
    split: Option<&PathBuf>,
    split_index: usize,
    out: &Path,
) -> Result<()> {
    let _lock = DirLock::acquire(out)?;
    config.freeze(out)?;
    let ckpt = load_checkpoint::<S>(checkpoint, "evaluation")?;
    let network = ckpt.into_network();
    let data = load_dataset(data_root)?;
    let split = load_split(split, split_index)?;
    let test = owned(select_ids(&data, split.as_ref().map(|s| s.test.as_slice()))?);
    let report = evaluate(&network, &test, config, split_index as u64)?;
    report.save(&out.join("metrics.json"))?;
    println!(
        "evaluated {} segments: joint {:.4}, gesture {:.4}, task {:.4} → {}",
        report.num_segments,
        report.joint_accuracy,
        report.gesture_accuracy,
        report.task_accuracy,
        out.join("metrics.json").display()
    );
    Ok(())
}

fn cmd_compare<S: Scalar>(
    config: &RunConfig,
    data_root: &Path,
    splits_path: &Path,
    seeds: &[u64],
    out: &Path,
) -> Result<()> {
    let _lock = DirLock::acquire(out)?;
    config.freeze(out)?;
    let data = load_dataset(data_root)?;
    let splits = load_splits(splits_path)?;
    if seeds.len() != splits.len() {
        bail!(
            "--seeds must list one seed per split ({} splits, {} seeds)",
            splits.len(),
            seeds.len()
        );
    }
    let (report, runs) = run_baseline_comparison::<S>(&data, &splits, seeds, config)?;
    report.save_csv(&out.join("comparison.csv"))?;
    fs::write(
        out.join("comparison.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    for (i, (baseline, joint)) in runs.iter().enumerate() {
        baseline.save(&out.join(format!("split{i}_baseline_metrics.json")))?;
        joint.save(&out.join(format!("split{i}_joint_metrics.json")))?;
    }
    println!("{}", report.to_csv().trim_end());
    println!("comparison written to {}", out.join("comparison.csv").display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("GESTNET_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("building thread pool")?;
    }

    match cli.command {
        Command::Preprocess {
            config,
            data_root,
            out,
        } => {
            let config = config.load()?;
            let _lock = DirLock::acquire(&out)?;
            config.freeze(&out)?;
            let summary = preprocess_raw(
                &data_root,
                &out,
                config.source_fps,
                config.extraction_fps,
                config.extract_h,
                config.extract_w,
                config.min_segment_frames,
            )?;
            println!(
                "preprocess: wrote {} segments, dropped {} shorter than {} frames",
                summary.segments_written,
                summary.segments_dropped_short,
                config.min_segment_frames
            );
        }
        Command::Flow { config, data } => {
            let config = config.load()?;
            let done = compute_missing_flow(&data, &config.flow, config.clip_mag)?;
            println!("flow: computed flow for {done} segments");
        }
        Command::Synth { config, out } => {
            let config = config.load()?;
            let _lock = DirLock::acquire(&out)?;
            config.freeze(&out)?;
            let segments = synth_generate(&config.synth, config.seed)?;
            for segment in &segments {
                save_segment(&out, segment, &labels_for(segment, "synthetic"))?;
            }
            println!(
                "synth: wrote {} segments ({} tasks × {} gestures) to {}",
                segments.len(),
                config.synth.tasks,
                config.synth.gestures,
                out.display()
            );
        }
        Command::Splits {
            data,
            total,
            train,
            n,
            seed,
            out,
        } => {
            let ids: Vec<String> = match (data, total) {
                (Some(root), None) => list_segment_ids(&root)?,
                (None, Some(total)) => (0..total).map(|i| i.to_string()).collect(),
                _ => bail!("exactly one of --data or --total is required"),
            };
            let splits = make_splits(&ids, n, train, seed)?;
            save_splits(&out, &splits)?;
            println!(
                "splits: {} splits of {} train / {} test → {}",
                splits.len(),
                train,
                ids.len() - train,
                out.display()
            );
        }
        Command::TrainFrame {
            config,
            data,
            modality,
            split,
            split_index,
            out,
        } => {
            let config = config.load()?;
            let stage = StageTag::frame(modality.into());
            with_precision!(
                config,
                run_train_stage(
                    stage,
                    &config,
                    &data,
                    split.as_ref(),
                    split_index,
                    (None, None),
                    &out,
                )
            )?;
        }
        Command::TrainLstm {
            config,
            data,
            modality,
            frame_ckpt,
            split,
            split_index,
            out,
        } => {
            let config = config.load()?;
            let stage = StageTag::lstm(modality.into());
            with_precision!(
                config,
                run_train_stage(
                    stage,
                    &config,
                    &data,
                    split.as_ref(),
                    split_index,
                    (Some(&frame_ckpt), None),
                    &out,
                )
            )?;
        }
        Command::TrainJoint {
            config,
            data,
            rgb_ckpt,
            flow_ckpt,
            split,
            split_index,
            out,
        } => {
            let config = config.load()?;
            with_precision!(
                config,
                run_train_stage(
                    StageTag::Joint,
                    &config,
                    &data,
                    split.as_ref(),
                    split_index,
                    (Some(&rgb_ckpt), Some(&flow_ckpt)),
                    &out,
                )
            )?;
        }
        Command::Eval {
            config,
            data,
            checkpoint,
            split,
            split_index,
            out,
        } => {
            let config = config.load()?;
            with_precision!(
                config,
                cmd_eval(&config, &data, &checkpoint, split.as_ref(), split_index, &out)
            )?;
        }
        Command::Compare {
            config,
            data,
            splits,
            seeds,
            out,
        } => {
            let config = config.load()?;
            with_precision!(config, cmd_compare(&config, &data, &splits, &seeds, &out))?;
        }
    }
    Ok(())
}
