mod error;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gigadet_core::{
    detect_patches, evaluate, generate_scene, read_dmap, render_gt_density, run_pipeline, saccade,
    scale_aware_loss, scene_stats, seed, sliding_window_patches, write_dmap, Annotation,
    BudgetReport, CostedDetector, DensityMapSet, DetectorAdapter, ExecDetector, NoisyDetector,
    OracleDetector, PipelineConfig, Scene, SceneSpec,
};
use serde::Serialize;

use error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "gigadet",
    version,
    about = "Density-guided detection for gigapixel scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene
    Synth(SynthArgs),
    /// Print bucket counts, foreground fraction and side statistics
    Stats(StatsArgs),
    /// Render ground-truth density maps to a DMAP file
    Density(DensityArgs),
    /// Select patches and write the patch manifest
    Saccade(SaccadeArgs),
    /// Run the full pipeline and write detections
    Run(RunArgs),
    /// Score detections against annotations
    Eval(EvalArgs),
    /// Compare pixel budgets of the pipeline and sliding-window baselines
    Bench(BenchArgs),
}

/// Flags mirroring the pipeline configuration keys.
#[derive(Args, Default)]
struct ConfigArgs {
    /// key = value file applied before the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    downsample: Option<String>,
    /// Three longest-side boundaries, e.g. 800,1600,3200
    #[arg(long)]
    boundaries: Option<String>,
    /// Grid sizes for tiny,small,middle,large
    #[arg(long)]
    grids: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    expansion: Option<String>,
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    count_scale: Option<String>,
    #[arg(long)]
    nms_iou: Option<String>,
    /// WxH or auto
    #[arg(long)]
    standard_size: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &self.config {
            config.apply_text(&read_text(path)?)?;
        }
        let flags = [
            ("downsample", &self.downsample),
            ("boundaries", &self.boundaries),
            ("grids", &self.grids),
            ("threshold", &self.threshold),
            ("expansion", &self.expansion),
            ("alphas", &self.alphas),
            ("count_scale", &self.count_scale),
            ("nms_iou", &self.nms_iou),
            ("standard_size", &self.standard_size),
            ("workers", &self.workers),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        Ok(config)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// key = value scene spec applied before the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    height: Option<String>,
    #[arg(long)]
    objects: Option<String>,
    /// Target union coverage as a fraction, e.g. 0.05
    #[arg(long)]
    foreground: Option<String>,
    #[arg(long)]
    min_side: Option<String>,
    #[arg(long)]
    max_side: Option<String>,
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    scene: PathBuf,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DensityArgs {
    scene: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Also report the scale-aware loss of this DMAP against the rendered one
    #[arg(long)]
    compare: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SaccadeArgs {
    scene: PathBuf,
    /// Use this DMAP instead of rendering ground truth
    #[arg(long)]
    density: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct AdapterArgs {
    /// oracle, noisy, or exec:<command>
    #[arg(long, default_value = "oracle")]
    adapter: String,
    /// Noisy adapter: standard deviation of box-edge jitter, in frame pixels
    #[arg(long, default_value_t = 2.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.1)]
    miss_rate: f64,
    /// Noisy adapter: expected false positives per patch, at most 1
    #[arg(long, default_value_t = 0.1)]
    fp_rate: f64,
    /// Patches per exec invocation
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    scene: PathBuf,
    #[arg(long)]
    density: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    adapter: AdapterArgs,
    #[arg(long)]
    dump_density: Option<PathBuf>,
    #[arg(long)]
    dump_patches: Option<PathBuf>,
    #[arg(long)]
    dump_config: Option<PathBuf>,
    /// Write the budget report as JSON
    #[arg(long)]
    budget: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    detections: PathBuf,
    scene: PathBuf,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    pr_csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    scene: PathBuf,
    #[command(flatten)]
    adapter: AdapterArgs,
    /// Busy-work per normalized pixel, 0 disables the costed wrapper
    #[arg(long, default_value_t = 0.0)]
    cost: f64,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes to stdout; a closed pipe (for example `| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization is infallible")
}

fn load_scene(path: &Path) -> Result<Scene> {
    Ok(Scene::load(path)?)
}

fn density_for(
    scene: &Scene,
    path: Option<&Path>,
    config: &PipelineConfig,
) -> Result<DensityMapSet> {
    match path {
        Some(p) => Ok(read_dmap(p)?),
        None => Ok(render_gt_density(
            &scene.annotations,
            scene.extent(),
            config.downsample,
            &config.boundaries,
        )?),
    }
}

fn build_adapter(
    args: &AdapterArgs,
    annotations: &[Annotation],
    config: &PipelineConfig,
) -> Result<Box<dyn DetectorAdapter>> {
    match args.adapter.as_str() {
        "oracle" => Ok(Box::new(OracleDetector::new(annotations))),
        "noisy" => {
            let noisy = NoisyDetector::new(
                annotations,
                args.jitter,
                args.miss_rate,
                args.fp_rate,
                seed::split_seed(config.seed, "noisy"),
            )
            .map_err(|e| CliError::Config(e.0))?;
            Ok(Box::new(noisy))
        }
        other => match other.strip_prefix("exec:") {
            Some(cmd) if !cmd.trim().is_empty() => {
                let mut exec = ExecDetector::new(cmd);
                if let Some(b) = args.batch {
                    exec = exec.with_batch_size(b);
                }
                Ok(Box::new(exec))
            }
            _ => Err(CliError::Config(format!(
                "unknown adapter `{other}`; expected oracle, noisy or exec:<command>"
            ))),
        },
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut spec = SceneSpec::default();
    if let Some(path) = &args.config {
        spec.apply_text(&read_text(path)?)?;
    }
    let flags = [
        ("width", &args.width),
        ("height", &args.height),
        ("objects", &args.objects),
        ("foreground", &args.foreground),
        ("min_side", &args.min_side),
        ("max_side", &args.max_side),
        ("clusters", &args.clusters),
        ("seed", &args.seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            spec.set(key, v)?;
        }
    }
    let scene = generate_scene(&spec)?;
    write_text(&args.out, &scene.to_json())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let scene = load_scene(&args.scene)?;
    let stats = scene_stats(&scene.annotations, scene.extent(), &config.boundaries);
    if args.json {
        emit(&format!("{}\n", to_json(&stats)));
        return Ok(());
    }
    let mut text = String::new();
    let rows = [
        ("objects", stats.objects.to_string()),
        ("tiny", stats.tiny.to_string()),
        ("small", stats.small.to_string()),
        ("middle", stats.middle.to_string()),
        ("large", stats.large.to_string()),
        ("foreground", format!("{:.4}", stats.foreground_fraction)),
        ("min side", format!("{:.1}", stats.min_side)),
        ("max side", format!("{:.1}", stats.max_side)),
        ("side ratio", format!("{:.1}", stats.side_ratio)),
    ];
    for (k, v) in rows {
        let _ = writeln!(text, "{k:<12} {v}");
    }
    for (lo, n) in &stats.side_histogram {
        let _ = writeln!(text, "  side >= {lo:<8} {n}");
    }
    emit(&text);
    Ok(())
}

fn cmd_density(args: DensityArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let scene = load_scene(&args.scene)?;
    let set = density_for(&scene, None, &config)?;
    write_dmap(&set, &args.out)?;
    if let Some(path) = &args.compare {
        let pred = read_dmap(path)?;
        let loss = scale_aware_loss(
            &pred.apply_count_scale(config.count_scale)?,
            &set.apply_count_scale(config.count_scale)?,
            &config.alphas,
        )?;
        emit(&format!("scale-aware loss {loss:.6e}\n"));
    }
    Ok(())
}

fn cmd_saccade(args: SaccadeArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let scene = load_scene(&args.scene)?;
    let density = density_for(&scene, args.density.as_deref(), &config)?;
    let patches = saccade(
        &density,
        &config.grids,
        config.threshold,
        config.expansion,
        scene.extent(),
    )?;
    write_text(
        &args.out,
        &to_json(&gigadet_core::saccade::patch_manifest(&patches)),
    )
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.config.resolve()?;
    if let Some(path) = &args.dump_config {
        write_text(path, &config.to_text())?;
    }
    let scene = load_scene(&args.scene)?;
    let density = match &args.density {
        Some(p) => Some(read_dmap(p)?),
        None => None,
    };
    let adapter = build_adapter(&args.adapter, &scene.annotations, &config)?;
    let out = run_pipeline(&scene, density, &config, adapter.as_ref())?;
    if let Some(path) = &args.dump_density {
        write_dmap(&out.density, path)?;
    }
    if let Some(path) = &args.dump_patches {
        write_text(
            path,
            &to_json(&gigadet_core::saccade::patch_manifest(&out.patches)),
        )?;
    }
    if let Some(path) = &args.budget {
        write_text(path, &to_json(&out.budget))?;
    }
    write_text(
        &args.out,
        &gigadet_core::merge::detections_to_json(&out.detections),
    )?;
    eprintln!(
        "{} patches, {} detections, {} pixels",
        out.budget.patch_count,
        out.detections.len(),
        out.budget.pixels_processed
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let scene = load_scene(&args.scene)?;
    let text = read_text(&args.detections)?;
    let dets = gigadet_core::merge::detections_from_json(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.detections.display())))?;
    let report = evaluate(&dets, &scene.annotations);
    if let Some(path) = &args.pr_csv {
        write_text(path, &report.pr_csv())?;
    }
    if args.json {
        emit(&format!("{}\n", to_json(&report)));
    } else {
        emit(&format!("{report}\n"));
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchOutput {
    reports: Vec<BudgetReport>,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let scene = load_scene(&args.scene)?;
    let extent = scene.extent();
    let base = build_adapter(&args.adapter, &scene.annotations, &config)?;
    let adapter: Box<dyn DetectorAdapter> = if args.cost > 0.0 {
        Box::new(CostedDetector::new(base, args.cost))
    } else {
        base
    };
    let standard = config.standard_size_for(extent);
    let density = density_for(&scene, None, &config)?;
    let patches = saccade(
        &density,
        &config.grids,
        config.threshold,
        config.expansion,
        extent,
    )?;
    let mut runs = vec![("saccade".to_string(), patches)];
    for n in [16, 8] {
        let sw = sliding_window_patches(extent, n, config.expansion)?;
        runs.push((format!("sw-{}", sw.len()), sw));
    }
    let mut reports = Vec::new();
    for (name, patches) in &runs {
        let (_, _, report) = detect_patches(
            name,
            patches,
            extent,
            adapter.as_ref(),
            standard,
            config.workers,
            config.nms_iou,
        )?;
        reports.push(report);
    }
    let baseline = reports[1].clone();
    let reports: Vec<BudgetReport> = reports.into_iter().map(|r| r.against(&baseline)).collect();
    if args.json {
        emit(&format!("{}\n", to_json(&BenchOutput { reports })));
    } else {
        emit(&gigadet_core::budget_table(&reports));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Density(a) => cmd_density(a),
        Command::Saccade(a) => cmd_saccade(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
