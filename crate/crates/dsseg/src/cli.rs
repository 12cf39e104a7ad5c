//! The `dsseg` command line.
//!
//! Tables and index lists go to standard output; progress and diagnostics go
//! to standard error. Usage errors exit with 2, runtime failures with 1.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dsseg_core::eval::segment;
use dsseg_core::{
    dice_per_case, dice_per_volume, generate_phantom, preprocess, sample_indices, train_with, ConvVariant, Volume,
};

use crate::checkpoint::{self, Checkpoint};
use crate::config;
use crate::dataset;
use crate::error::{Error, Result};
use crate::rvol;

#[derive(Debug, Parser)]
#[command(
    name = "dsseg",
    version,
    about = "Dense-sparse 2.5D segmentation on slice stacks",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic phantom volumes
    Phantom(PhantomArgs),
    /// Print the slice indices of one stack, one per line
    Sample(SampleArgs),
    /// Print parameter counts for the standard and depthwise-separable variants
    Params(ParamsArgs),
    /// Train a network with the dense-sparse / dense schedule
    Train(TrainArgs),
    /// Segment a volume with a checkpoint
    Predict(PredictArgs),
    /// Dice per case of predicted volumes against ground truth
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Phantom specification JSON
    #[arg(long)]
    pub spec: PathBuf,
    /// Output RVOL file, or directory when --count is given
    #[arg(long)]
    pub out: PathBuf,
    /// Override the phantom file's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write this many geometric variations of the phantom into the --out directory
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Input RVOL file
    #[arg(long)]
    pub volume: PathBuf,
    /// 1-based center slice
    #[arg(long)]
    pub center: usize,
    /// Stack thickness T (odd)
    #[arg(long)]
    pub thickness: usize,
    /// Through-plane stride s
    #[arg(long)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Run configuration JSON (its network section is used)
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of labeled RVOL volumes
    #[arg(long)]
    pub data: PathBuf,
    /// Run configuration JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Output RNET checkpoint
    #[arg(long)]
    pub out: PathBuf,
    /// Override the training seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the metrics log to this file
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// RNET checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input RVOL volume
    #[arg(long)]
    pub volume: PathBuf,
    /// Output RVOL with the predicted labels
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of predicted RVOL volumes
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Directory of ground-truth RVOL volumes with matching file names
    #[arg(long)]
    pub gt_dir: PathBuf,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn emit(stdout: &mut dyn std::io::Write, text: &str) -> Result<()> {
    stdout.write_all(text.as_bytes()).map_err(Error::io("<stdout>"))
}

fn dispatch(command: Command, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> Result<()> {
    match command {
        Command::Phantom(a) => phantom(a, stderr),
        Command::Sample(a) => emit(stdout, &sample(&a)?),
        Command::Params(a) => emit(stdout, &params(&a.config)?),
        Command::Train(a) => train(a, stdout, stderr),
        Command::Predict(a) => predict(&a),
        Command::Evaluate(a) => emit(stdout, &evaluate(&a.pred_dir, &a.gt_dir)?),
    }
}

fn phantom(args: PhantomArgs, stderr: &mut dyn std::io::Write) -> Result<()> {
    let mut spec = config::load_phantom(&args.spec)?.phantom;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    match args.count {
        None => rvol::write_volume(&generate_phantom(&spec)?, &args.out),
        Some(count) => {
            fs::create_dir_all(&args.out).map_err(Error::io(&args.out))?;
            for i in 0..count {
                let v = generate_phantom(&spec.jittered(spec.seed.wrapping_mul(1000).wrapping_add(i as u64)))?;
                let path = args.out.join(format!("phantom_{i:03}.rvol"));
                rvol::write_volume(&v, &path)?;
                let _ = writeln!(stderr, "wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn sample(args: &SampleArgs) -> Result<String> {
    let v = rvol::read_volume(&args.volume)?;
    let idx = sample_indices(args.center, args.thickness, args.stride, v.depth())?;
    Ok(idx.iter().map(|i| format!("{i}\n")).collect())
}

/// `standard\t<n>`, `depthwise-separable\t<n>`, `ratio\t<ds/standard>`.
pub fn params(path: &Path) -> Result<String> {
    let net = config::load_run_config(path)?.network;
    net.validate()?;
    let std = net.with_variant(ConvVariant::Standard).param_count();
    let ds = net.with_variant(ConvVariant::DepthwiseSeparable).param_count();
    Ok(format!("standard\t{std}\ndepthwise-separable\t{ds}\nratio\t{:.6}\n", ds as f64 / std as f64))
}

fn train(args: TrainArgs, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> Result<()> {
    let file = config::load_run_config(&args.config)?;
    let mut cfg = file.train_config();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let clip = file.preprocess.clip;
    let named = dataset::load_dir(&args.data)?;
    if named.is_empty() {
        return Err(Error::Data(format!("no .rvol volumes in {}", args.data.display())));
    }
    let _ = writeln!(stderr, "training on {} volumes from {}", named.len(), args.data.display());
    let volumes = named.iter().map(|(_, v)| preprocess(v, clip)).collect::<dsseg_core::Result<Vec<Volume>>>()?;
    let out = train_with(&volumes, &cfg, |r| {
        let dice = r.val_dice.as_ref().map(|d| format!(" val_dice {d:.4?}")).unwrap_or_default();
        let _ = writeln!(stderr, "epoch {} [{}] loss {:.6}{}", r.epoch, r.stage, r.train_loss, dice);
    })?;
    let log = out.log.to_string();
    if let Some(path) = &args.log {
        fs::write(path, &log).map_err(Error::io(path))?;
    }
    checkpoint::save(&Checkpoint { network: out.network, clip }, &args.out)?;
    emit(stdout, &log)
}

fn predict(args: &PredictArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let volume = rvol::read_volume(&args.volume)?;
    let input = preprocess(&volume, ckpt.clip)?;
    let result = segment(&ckpt.network, &input, &args.checkpoint.display().to_string())?;
    let out = volume.with_labels(Some(result.prediction.data))?;
    rvol::write_volume(&out, &args.out)
}

const CLASS_NAMES: [&str; 2] = ["organ", "lesion"];

/// Tab-separated `class, mean_dice, std, volumes` table over files present
/// in both directories (every ground-truth file must have a prediction).
pub fn evaluate(pred_dir: &Path, gt_dir: &Path) -> Result<String> {
    let gts = dataset::list_volumes(gt_dir)?;
    if gts.is_empty() {
        return Err(Error::Data(format!("no .rvol volumes in {}", gt_dir.display())));
    }
    let mut scores = vec![Vec::with_capacity(gts.len()); CLASS_NAMES.len()];
    for gt_path in &gts {
        let name = gt_path.file_name().expect("listed files have names");
        let pred_path = pred_dir.join(name);
        if !pred_path.is_file() {
            return Err(Error::Data(format!("no prediction {} for {}", pred_path.display(), gt_path.display())));
        }
        let labels = |path: &Path| -> Result<dsseg_core::LabelVolume> {
            rvol::read_volume(path)?
                .label_volume()
                .ok_or_else(|| Error::Data(format!("{} has no labels", path.display())))
        };
        let (pred, gt) = (labels(&pred_path)?, labels(gt_path)?);
        for (c, s) in scores.iter_mut().enumerate() {
            s.push(dice_per_volume(&pred, &gt, (c + 1) as u8)?);
        }
    }
    let mut out = String::from("class\tmean_dice\tstd\tvolumes\n");
    for (name, s) in CLASS_NAMES.iter().zip(&scores) {
        let summary = dice_per_case(s)?;
        writeln!(out, "{name}\t{:.6}\t{:.6}\t{}", summary.mean, summary.std, summary.count).expect("write to string");
    }
    Ok(out)
}
