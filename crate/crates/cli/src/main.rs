//! Multi-command CLI: deblur a blurred/noisy pair, synthesize test pairs,
//! compute image quality metrics, and estimate/inspect dense flow.
//!
//! Exit codes: 0 success, 2 invalid arguments or configuration, 3 I/O
//! failure, 4 numerical failure.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "pairdeblur",
    version,
    about = "Deblurring from a blurred/noisy image pair"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Deblur a blurred image guided by a noisy image of the same scene.
    Deblur(DeblurArgs),
    /// Blur one sharp view and add noise to the other.
    Synth(SynthArgs),
    /// Print PSNR/SSIM/MSE between a reference and a test image.
    Metrics(MetricsArgs),
    /// Estimate dense flow between two images; write .flo and/or a
    /// color-wheel visualization, report errors against ground truth.
    Flow(FlowArgs),
}

#[derive(Args)]
pub struct DeblurArgs {
    /// Blurred input image (PNG or PGM).
    #[arg(long)]
    blurred: PathBuf,
    /// Noisy input image (PNG or PGM).
    #[arg(long)]
    noisy: PathBuf,
    /// Output image path.
    #[arg(long)]
    out: PathBuf,
    /// Configuration file; command-line flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Outer flow/EM alternations.
    #[arg(long)]
    iters: Option<usize>,
    /// EM rounds per patch.
    #[arg(long = "em-iters")]
    em_iters: Option<usize>,
    /// Gradient-descent steps per M-step.
    #[arg(long = "gd-iters")]
    gd_iters: Option<usize>,
    /// Data-term weight in (0,1].
    #[arg(long)]
    lambda: Option<f64>,
    /// Outlier weight in [0,1).
    #[arg(long)]
    omega: Option<f64>,
    /// Bilateral pull weight.
    #[arg(long)]
    mu: Option<f64>,
    /// Gradient-descent step size.
    #[arg(long)]
    alpha: Option<f64>,
    /// Initial component variance.
    #[arg(long = "sigma-init")]
    sigma_init: Option<f64>,
    /// Bilateral spatial scale (EM), pixels.
    #[arg(long = "sigma-d")]
    sigma_d: Option<f64>,
    /// Bilateral range scale (EM), intensity.
    #[arg(long = "sigma-l")]
    sigma_l: Option<f64>,
    /// Blurred-side patch side (odd).
    #[arg(long)]
    s1: Option<usize>,
    /// Noisy-side patch side (odd, > s1).
    #[arg(long)]
    s2: Option<usize>,
    /// Pixels between patch centers.
    #[arg(long)]
    stride: Option<usize>,
    /// Enable the detail layer.
    #[arg(long, overrides_with = "no_detail")]
    detail: bool,
    /// Disable the detail layer.
    #[arg(long = "no-detail")]
    no_detail: bool,
    /// Detail mask threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Detail blend weight.
    #[arg(long)]
    eta: Option<f64>,
    /// Brightness gain applied to the noisy input.
    #[arg(long = "enhance-gain")]
    enhance_gain: Option<f64>,
    /// Brightness bias applied to the noisy input.
    #[arg(long = "enhance-bias")]
    enhance_bias: Option<f64>,
    /// Gamma applied to the noisy input (> 1 brightens).
    #[arg(long = "enhance-gamma")]
    enhance_gamma: Option<f64>,
    /// Write the per-iteration report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dump per-iteration images and flow fields into this directory.
    #[arg(long = "dump-intermediate")]
    dump_intermediate: Option<PathBuf>,
    /// Worker threads for the patch loop (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Reserved; the deblurring path has no stochastic stage.
    #[arg(long)]
    #[allow(dead_code)]
    seed: Option<u64>,
    /// Ground-truth .flo; per-iteration AEE/AAE lands in the report.
    #[arg(long = "gt-flo")]
    gt_flo: Option<PathBuf>,
    /// Pyramid levels for flow.
    #[arg(long = "flow-levels")]
    flow_levels: Option<usize>,
    /// Pyramid downscale ratio in (0,1).
    #[arg(long = "flow-scale")]
    flow_scale: Option<f64>,
    /// Flow aggregation window (odd).
    #[arg(long = "flow-window")]
    flow_window: Option<usize>,
    /// Flow refinement iterations per level.
    #[arg(long = "flow-iters")]
    flow_iters: Option<usize>,
    /// Polynomial expansion neighborhood (odd).
    #[arg(long = "flow-poly-n")]
    flow_poly_n: Option<usize>,
    /// Polynomial expansion applicability sigma.
    #[arg(long = "flow-poly-sigma")]
    flow_poly_sigma: Option<f64>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Sharp view A (gets blurred).
    #[arg(long = "sharp-a")]
    sharp_a: PathBuf,
    /// Sharp view B (gets noise).
    #[arg(long = "sharp-b")]
    sharp_b: PathBuf,
    /// Built-in blur type 1..6, or a scene spec file path.
    #[arg(long = "blur-type")]
    blur_type: String,
    /// Gaussian noise sigma for view B.
    #[arg(long = "noise-sigma")]
    noise_sigma: f64,
    #[arg(long = "out-blurred")]
    out_blurred: PathBuf,
    #[arg(long = "out-noisy")]
    out_noisy: PathBuf,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
pub struct MetricsArgs {
    /// Reference image.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Test image.
    #[arg(long = "test")]
    test: PathBuf,
}

#[derive(Args)]
pub struct FlowArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Write the estimated field here (.flo).
    #[arg(long = "out-flo")]
    out_flo: Option<PathBuf>,
    /// Write a color-wheel visualization here (PNG).
    #[arg(long = "out-viz")]
    out_viz: Option<PathBuf>,
    /// Ground-truth field; prints AEE/AAE when given.
    #[arg(long = "gt-flo")]
    gt_flo: Option<PathBuf>,
    #[arg(long = "flow-levels")]
    flow_levels: Option<usize>,
    #[arg(long = "flow-scale")]
    flow_scale: Option<f64>,
    #[arg(long = "flow-window")]
    flow_window: Option<usize>,
    #[arg(long = "flow-iters")]
    flow_iters: Option<usize>,
    #[arg(long = "flow-poly-n")]
    flow_poly_n: Option<usize>,
    #[arg(long = "flow-poly-sigma")]
    flow_poly_sigma: Option<f64>,
}

fn exit_code(err: &pairdeblur::Error) -> i32 {
    use pairdeblur::Error::*;
    match err {
        FileNotFound { .. } | Io { .. } | UnsupportedFormat { .. } | CorruptData { .. } => 3,
        InvalidParam(_) | UncoveredPixels { .. } | DimensionMismatch(_) | Config { .. } => 2,
        NonFinite(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Deblur(args) => commands::deblur(args),
        Command::Synth(args) => commands::synth(args),
        Command::Metrics(args) => commands::metrics(args),
        Command::Flow(args) => commands::flow(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
