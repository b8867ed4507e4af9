//! `reef-miner`: analyze quadrat images, score detectors and classifiers,
//! and summarize datasets.

mod analyze;
pub mod config;
pub mod error;
mod eval;
pub mod output;
mod stats;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use reef_pipeline::{CropMode, PROTOCOL_VERSION};

use crate::config::{RunConfig, CONFIG_ENV};
use crate::error::CliError;

/// Build identifier printed by `--version`; set `REEF_MINER_BUILD_ID` at
/// compile time to override.
pub const BUILD_ID: &str = match option_env!("REEF_MINER_BUILD_ID") {
    Some(id) => id,
    None => "dev",
};

#[derive(Parser, Debug)]
#[command(name = "reef-miner", about, disable_version_flag = true, arg_required_else_help = true)]
struct Cli {
    /// Print version, protocol version and build id
    #[arg(short = 'V', long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the detect/segment/classify cascade on an image or a directory
    Analyze(AnalyzeArgs),
    /// Score box predictions against ground truth (AP / mAP)
    EvalDet(EvalDetArgs),
    /// Per-class precision, recall and F1 from (true, predicted) pairs
    EvalCls(EvalClsArgs),
    /// Genus distribution, resolution histogram and box statistics
    Stats(StatsArgs),
    /// Answer protocol requests on stdin/stdout with the mock backends
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Image file (PNG/JPEG) or a directory of them
    input: PathBuf,
    /// Use in-process mocks for every stage not given explicitly
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// `mock`, `stdio:<command>` or an http(s) URL
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    segmenter: Option<String>,
    #[arg(long)]
    classifier: Option<String>,
    /// Report JSON (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Region of interest as an RLE mask JSON file
    #[arg(long)]
    roi: Option<PathBuf>,
    #[arg(long)]
    confidence_min: Option<f64>,
    #[arg(long)]
    padding: Option<u32>,
    /// full-with-mask or crop
    #[arg(long)]
    crop: Option<CropMode>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    http_timeout_secs: Option<u64>,
    /// key=value config file (default: $REEF_MINER_CONFIG)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalDetArgs {
    /// Predictions, one JSON record per line
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth, one JSON record per line
    #[arg(long)]
    gt: PathBuf,
    /// IoU threshold; repeatable
    #[arg(long, default_value = "0.5", conflicts_with = "coco_range")]
    iou: Vec<f64>,
    /// Evaluate at 0.50:0.05:0.95
    #[arg(long)]
    coco_range: bool,
    /// Also write the report as JSON
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalClsArgs {
    /// CSV with header `true,predicted`
    #[arg(long)]
    pairs: PathBuf,
    /// `tableA2` for the bundled per-genus table, or a TSV path
    #[arg(long)]
    fixtures: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// CSV with header `image_id,genus,width,height`
    #[arg(long)]
    manifest: PathBuf,
    /// Ground-truth boxes, one JSON record per line
    #[arg(long)]
    bboxes: Option<PathBuf>,
    /// Comma-separated histogram edges (default 64,128,...,4096)
    #[arg(long, value_delimiter = ',')]
    bins: Option<Vec<u32>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the CSV series behind the plots
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn version_line() -> String {
    format!(
        "reef-miner {} (protocol_version {PROTOCOL_VERSION}, build {BUILD_ID})",
        env!("CARGO_PKG_VERSION")
    )
}

/// Parses `argv`, runs one subcommand and returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp => 0,
                _ => 1,
            };
        }
    };
    if cli.version {
        let _ = writeln!(stdout, "{}", version_line());
        return 0;
    }
    let Some(command) = cli.command else {
        let _ = writeln!(stderr, "no subcommand given; see --help");
        return 1;
    };
    match dispatch(command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Analyze(a) => {
            let flags = RunConfig {
                detector: a.detector,
                segmenter: a.segmenter,
                classifier: a.classifier,
                mock: a.mock,
                seed: a.seed,
                detection_confidence_min: a.confidence_min,
                prompt_padding: a.padding,
                classifier_crop: a.crop,
                batch_parallelism: a.parallelism,
                http_timeout_secs: a.http_timeout_secs,
                roi: a.roi,
                out: a.out,
                csv: a.csv,
            };
            let file = a.config.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
            let base = match file {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let resolved = base.overlay(flags).resolve()?;
            analyze::run(&a.input, &resolved, stdout, stderr)
        }
        Command::EvalDet(a) => {
            let thresholds = if a.coco_range {
                reef_core::eval::coco_thresholds()
            } else {
                a.iou
            };
            eval::detection(&a.pred, &a.gt, &thresholds, a.out.as_deref(), stdout)
        }
        Command::EvalCls(a) => eval::classification(&a.pairs, a.fixtures.as_deref(), a.out.as_deref(), stdout),
        Command::Stats(a) => stats::run(
            &a.manifest,
            a.bboxes.as_deref(),
            a.bins.as_deref(),
            a.out.as_deref(),
            a.plot_dir.as_deref(),
            stdout,
        ),
        Command::Serve(a) => {
            let backends = reef_pipeline::mock_backends(a.seed);
            let stdin = std::io::stdin();
            reef_pipeline::protocol::serve(stdin.lock(), stdout, &backends)
                .map_err(|e| CliError::io(std::path::Path::new("<stdio>"), e))
        }
    }
}
