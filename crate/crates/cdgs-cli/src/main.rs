//! Command-line harness around the core pipeline: synthetic dataset
//! generation, training, rendering, compression, evaluation, importance
//! inspection, and rate-distortion sweeps.
//!
//! One TOML file configures every stage (`[scene]` for the generator,
//! `[train]` for the optimizer); a handful of flags override the fields
//! that change most between runs. Exit codes: 0 on success, 1 on a usage
//! error, 2 on a pipeline failure.

use anyhow::{bail, Context, Result};
use cdgs_core::allocator::{build_histogram, decide_threshold, smooth_histogram, HIST_BINS};
use cdgs_core::codec;
use cdgs_core::eval::{evaluate, load_any, EvalReport};
use cdgs_core::importance::{score_set, ViewSample};
use cdgs_core::render::render;
use cdgs_core::scene::{frame_file_name, load_checkpoint, save_checkpoint, Dataset};
use cdgs_core::sweep::rd_sweep;
use cdgs_core::synth::{generate_to_dir, SyntheticSceneSpec};
use cdgs_core::train::{train, TrainConfig};
use cdgs_core::Kind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Everything the harness can be told through the config file.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
struct HarnessConfig {
    scene: SyntheticSceneSpec,
    train: TrainConfig,
}

impl HarnessConfig {
    /// Load from TOML, or fall back to defaults when no file is given.
    /// Validation happens later, after flag overrides are applied.
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(HarnessConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Parser)]
#[command(name = "cdgs", version, about = "Budget-controlled dynamic Gaussian splatting harness")]
struct Cli {
    /// Print progress information to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic multi-view dataset.
    GenSynthetic(GenArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Render frames of one view from a checkpoint or compressed stream.
    Render(RenderArgs),
    /// Compress a checkpoint into a stream.
    Compress(PairArgs),
    /// Expand a compressed stream back into a checkpoint.
    Decompress(PairArgs),
    /// Score a model against a dataset's held-out view.
    Eval(EvalArgs),
    /// Train, compress, and evaluate across several count targets.
    RdSweep(SweepArgs),
    /// Write per-Gaussian importance scores as CSV.
    ScoreDump(ScoreArgs),
    /// Write the motion-magnitude histogram and the static/dynamic split
    /// decision it implies.
    AllocPlot(AllocArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML config; the `[scene]` table applies here.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    movers: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for the checkpoint, metric CSVs, and reports.
    #[arg(long)]
    out: PathBuf,
    /// TOML config; the `[train]` table applies here.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the final Gaussian budget.
    #[arg(long)]
    n_target: Option<usize>,
    /// Override the gate temperature at the start of the growth phase.
    #[arg(long)]
    tau_init: Option<f32>,
    /// Override the gate temperature at the end of the growth phase.
    #[arg(long)]
    tau_end: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RenderArgs {
    /// Checkpoint (.cdgs) or compressed stream (.cdgc).
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory supplying cameras and timestamps.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for PNG frames.
    #[arg(long)]
    out: PathBuf,
    /// Camera index; defaults to the held-out view.
    #[arg(long)]
    view: Option<usize>,
    /// Single frame index; defaults to every frame.
    #[arg(long)]
    frame: Option<u32>,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint (.cdgs) or compressed stream (.cdgc).
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Camera index; defaults to the held-out view.
    #[arg(long)]
    view: Option<usize>,
    /// Write per-frame rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the full report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Sweep directory; one subdirectory per target plus rd.csv / rd.dat.
    #[arg(long)]
    out: PathBuf,
    /// TOML config; the `[train]` table seeds every leg.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated count targets, at least two.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    targets: Vec<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Checkpoint (.cdgs) or compressed stream (.cdgc).
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory supplying the scoring views.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// TOML config; `[train.scorer]` sets the cue weights.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use exact leave-one-out residuals (one re-render per Gaussian).
    #[arg(long)]
    exact_loo: bool,
}

#[derive(Args)]
struct AllocArgs {
    /// Checkpoint (.cdgs) or compressed stream (.cdgc).
    #[arg(long)]
    model: PathBuf,
    /// Output gnuplot-ready histogram table.
    #[arg(long)]
    out: PathBuf,
    /// Also write the threshold decision here.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Requested help or version text is not a usage error.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Train(a) => run_train(a),
        Command::Render(a) => run_render(a),
        Command::Compress(a) => run_compress(a),
        Command::Decompress(a) => run_decompress(a),
        Command::Eval(a) => run_eval(a),
        Command::RdSweep(a) => run_sweep(a),
        Command::ScoreDump(a) => run_score_dump(a),
        Command::AllocPlot(a) => run_alloc_plot(a),
    }
}

fn gen_synthetic(args: GenArgs) -> Result<()> {
    let mut spec = HarnessConfig::load(args.config.as_deref())?.scene;
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.frames {
        spec.frames = v;
    }
    if let Some(v) = args.views {
        spec.n_views = v;
    }
    if let Some(v) = args.width {
        spec.width = v;
    }
    if let Some(v) = args.height {
        spec.height = v;
    }
    if let Some(v) = args.movers {
        spec.movers = v;
    }
    if spec.n_views < 3 {
        bail!(
            "need at least 3 cameras for triangulable geometry (got {})",
            spec.n_views
        );
    }
    if spec.frames < 2 {
        bail!("need at least 2 frames (got {})", spec.frames);
    }
    log::info!("generating {} views x {} frames", spec.n_views, spec.frames);
    let dataset = generate_to_dir(&spec, &args.out)?;
    println!(
        "wrote {} views x {} frames ({}x{}) to {}",
        dataset.n_views(),
        dataset.n_frames(),
        spec.width,
        spec.height,
        args.out.display()
    );
    Ok(())
}

fn train_config_with_overrides(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = HarnessConfig::load(args.config.as_deref())?.train;
    if let Some(v) = args.n_target {
        cfg.n_target = v;
    }
    if let Some(v) = args.tau_init {
        cfg.tau_init = v;
    }
    if let Some(v) = args.tau_end {
        cfg.tau_end = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = train_config_with_overrides(&args)?;
    let dataset = Dataset::load(&args.data)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    // Persist the effective config so a run directory replays exactly.
    let cfg_path = args.out.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml_string())
        .with_context(|| format!("writing {}", cfg_path.display()))?;
    log::info!(
        "training toward {} gaussians for {} iterations",
        cfg.n_target,
        cfg.total_iters()
    );
    let (_, report) = train(&dataset, &cfg, &args.out)?;
    println!(
        "trained {} gaussians ({} static, {} dynamic) toward target {} in {} iterations",
        report.n_final, report.n_static, report.n_dynamic, report.n_target, report.iterations
    );
    println!(
        "final l1 {:.6}, structural loss {:.6}; artifacts in {}",
        report.final_l1,
        report.final_ssim_loss,
        args.out.display()
    );
    Ok(())
}

fn run_render(args: RenderArgs) -> Result<()> {
    let set = load_any(&args.model)?;
    let dataset = Dataset::load(&args.data)?;
    let vi = args.view.unwrap_or_else(|| dataset.held_out_index());
    if vi >= dataset.n_views() {
        bail!("view {} out of range ({} views)", vi, dataset.n_views());
    }
    let frames: Vec<u32> = match args.frame {
        Some(f) => {
            if f as usize >= dataset.n_frames() {
                bail!("frame {} out of range ({} frames)", f, dataset.n_frames());
            }
            vec![f]
        }
        None => (0..dataset.n_frames() as u32).collect(),
    };
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let bg = dataset.background();
    for &fi in &frames {
        let view = dataset.view(vi, fi);
        let img = render(&set, &view, dataset.t_norm(fi), bg).image;
        img.save_png(&args.out.join(frame_file_name(vi as u32, fi)))?;
    }
    println!(
        "rendered {} frame(s) of view {} to {}",
        frames.len(),
        vi,
        args.out.display()
    );
    Ok(())
}

fn run_compress(args: PairArgs) -> Result<()> {
    let set = load_checkpoint(&args.input)?;
    let stream = codec::compress(&set)?;
    fs::write(&args.output, &stream)
        .with_context(|| format!("writing {}", args.output.display()))?;
    let raw = fs::metadata(&args.input)
        .with_context(|| format!("sizing {}", args.input.display()))?
        .len();
    println!(
        "{} gaussians: {} -> {} bytes ({:.1}% of checkpoint)",
        set.len(),
        raw,
        stream.len(),
        100.0 * stream.len() as f64 / raw.max(1) as f64
    );
    Ok(())
}

fn run_decompress(args: PairArgs) -> Result<()> {
    let set = codec::load_stream(&args.input)?;
    save_checkpoint(&set, &args.output)?;
    println!(
        "restored {} gaussians to {}",
        set.len(),
        args.output.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let set = load_any(&args.model)?;
    let model_bytes = fs::metadata(&args.model)
        .with_context(|| format!("sizing {}", args.model.display()))?
        .len();
    let dataset = Dataset::load(&args.data)?;
    let vi = args.view.unwrap_or_else(|| dataset.held_out_index());
    let report = evaluate(&set, &dataset, vi, model_bytes)?;
    if let Some(csv_path) = &args.csv {
        let mut csv = String::from(EvalReport::CSV_HEADER);
        csv.push('\n');
        for row in report.csv_rows() {
            csv.push_str(&row);
            csv.push('\n');
        }
        fs::write(csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    }
    if let Some(json_path) = &args.json {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(json_path, json)
            .with_context(|| format!("writing {}", json_path.display()))?;
    }
    println!(
        "view {}: mean psnr {:.2} dB, mean ssim {:.4}, {} gaussians, {} bytes",
        report.view_index, report.psnr_mean, report.ssim_mean, report.n_gaussians, model_bytes
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    if args.targets.len() < 2 {
        bail!("need at least two targets (got {:?})", args.targets);
    }
    let cfg = HarnessConfig::load(args.config.as_deref())?.train;
    cfg.validate()?;
    let dataset = Dataset::load(&args.data)?;
    let points = rd_sweep(&dataset, &cfg, &args.targets, &args.out)?;
    for p in &points {
        println!(
            "target {:>6}: {} gaussians, {} bytes, {:.2} dB, ssim {:.4}",
            p.n_target, p.n_final, p.compressed_bytes, p.psnr, p.ssim
        );
    }
    println!("tables written to {}", args.out.display());
    Ok(())
}

fn run_score_dump(args: ScoreArgs) -> Result<()> {
    let set = load_any(&args.model)?;
    let dataset = Dataset::load(&args.data)?;
    let mut scorer = HarnessConfig::load(args.config.as_deref())?.train.scorer;
    if args.exact_loo {
        scorer.exact_loo = true;
    }
    let bg = dataset.background();
    let pairs = dataset.training_pairs();
    let owned: Vec<_> = pairs
        .iter()
        .map(|&(vi, fi)| (dataset.view(vi, fi), dataset.t_norm(fi), vi, fi))
        .collect();
    let samples: Vec<ViewSample> = owned
        .iter()
        .map(|(view, t, vi, fi)| ViewSample {
            view,
            t: *t,
            gt: dataset.image(*vi, *fi),
            background: bg,
        })
        .collect();
    log::info!("scoring {} gaussians over {} views", set.len(), samples.len());
    let scores = score_set(&set, &samples, &scorer);
    let mut csv = String::from("index,kind,score,gate,motion_magnitude\n");
    for (i, &score) in scores.iter().enumerate() {
        let kind = match set.kind(i) {
            Kind::Static => "static",
            Kind::Dynamic => "dynamic",
        };
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            i,
            kind,
            score,
            set.cores[i].gate_activation,
            set.motion_magnitude(i)
        ));
    }
    fs::write(&args.out, csv).with_context(|| format!("writing {}", args.out.display()))?;
    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f32>() / scores.len() as f32
    };
    println!(
        "scored {} gaussians (mean {:.4}) into {}",
        scores.len(),
        mean,
        args.out.display()
    );
    Ok(())
}

fn run_alloc_plot(args: AllocArgs) -> Result<()> {
    let set = load_any(&args.model)?;
    let magnitudes = set.motion_magnitudes();
    let decision = decide_threshold(&magnitudes);
    let max = magnitudes.iter().fold(0.0f32, |a, &b| a.max(b));
    let hist = build_histogram(&magnitudes, max);
    let smoothed = smooth_histogram(&hist);
    let width = if max > 0.0 { max / HIST_BINS as f32 } else { 0.0 };
    let mut dat = format!(
        "# motion magnitude histogram over {} gaussians\n# threshold {:.6} rule {:?} static_fraction {:.4}\n# bin_center raw smoothed\n",
        set.len(),
        decision.tau,
        decision.rule,
        decision.alpha_fraction
    );
    for i in 0..HIST_BINS {
        dat.push_str(&format!(
            "{:.6} {} {:.3}\n",
            (i as f32 + 0.5) * width,
            hist[i],
            smoothed[i]
        ));
    }
    fs::write(&args.out, dat).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(json_path) = &args.json {
        let json = serde_json::to_string_pretty(&decision)?;
        fs::write(json_path, json)
            .with_context(|| format!("writing {}", json_path.display()))?;
    }
    println!(
        "threshold {:.6} ({:?}); {:.1}% of {} gaussians stay static",
        decision.tau,
        decision.rule,
        100.0 * decision.alpha_fraction,
        set.len()
    );
    Ok(())
}
