mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use polarkit::dataset::{
    apply_split, box_stats, parse_class_names, parse_coco, parse_split_list, parse_yolo,
    to_coco_json, write_yolo, AnnotationSet, SplitLists,
};
use polarkit::demosaic::DebayerMethod;
use polarkit::eval::{coco_summary_with, parse_predictions, EvalParams};
use polarkit::mosaic::{load_raw, save_raw, MosaicLayout};
use polarkit::physics::{
    brewster_angle, distance_grid, dolp_distance_profile, profile_csv, profile_peak,
    rayleigh_dolp, CameraGeometry, InterfaceSpec,
};
use polarkit::pipeline::{
    bench, benchmark_frame, encode_pfm_planes, extract, render, with_workers, ExtractOptions,
};
use polarkit::render::Modality;
use polarkit::synth::{bake_truth, mosaicize, NoiseSpec, SceneSpec};

use config::JobConfig;

#[derive(Parser)]
#[command(name = "polarkit", version, about = "Microgrid polarization camera toolkit")]
struct Cli {
    /// JSON job file whose fields mirror the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render polarization modalities from raw frames.
    Extract(ExtractArgs),
    /// Generate a raw frame (and optional truth planes) from a scene file.
    Synth(SynthArgs),
    /// Compare a raw frame's recovered DoLP/AoLP with its scene.
    Verify(VerifyArgs),
    /// Bounding-box statistics of a label set.
    Stats(StatsArgs),
    /// Convert labels between COCO JSON and YOLO text.
    ConvertLabels(ConvertArgs),
    /// Partition a COCO label set by file-name lists.
    Split(SplitArgs),
    /// COCO-style detection metrics.
    Eval(EvalArgs),
    /// Water and sky polarization models.
    #[command(subcommand)]
    Physics(PhysicsCommand),
    /// Time full-resolution six-channel extraction.
    Bench(BenchArgs),
}

#[derive(Args)]
struct FrameArgs {
    /// Mosaic layout as angles at offsets (0,0),(0,1),(1,0),(1,1), e.g. 90,45,135,0.
    #[arg(long)]
    layout: Option<String>,
    /// Descriptor JSON for headerless `.raw` frames.
    #[arg(long)]
    descriptor: Option<PathBuf>,
    /// Debayer method: nearest or bilinear.
    #[arg(long)]
    method: Option<String>,
    /// Codes within this distance of full scale count as saturated.
    #[arg(long)]
    saturation_margin: Option<u16>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Raw frames (PGM or `.raw`) or directories of them.
    #[arg(long = "in", num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of mono,rgb,dif,dolp,pol,pauli.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<String>>,
    #[command(flatten)]
    frame: FrameArgs,
    /// Also write S0, S1, S2, DoLP, AoLP and diffuse planes as PFM.
    #[arg(long)]
    pfm: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output raw frame (PGM).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for ground-truth PFM planes.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    bit_depth: Option<u32>,
    #[arg(long)]
    layout: Option<String>,
    /// Noise sigma as a fraction of full scale; requires --seed.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    raw: PathBuf,
    #[command(flatten)]
    frame: FrameArgs,
    /// Pixels closer than this to a region boundary are skipped.
    #[arg(long, default_value_t = 4)]
    margin: usize,
    /// Maximum DoLP error; defaults to 2 code steps at 16 bits, 0.02 at 8.
    #[arg(long)]
    dolp_tol: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    aolp_tol: f64,
    /// AoLP is only checked where the true DoLP reaches this value.
    #[arg(long, default_value_t = 0.05)]
    min_dolp: f64,
}

#[derive(Args)]
struct LabelSource {
    /// COCO JSON file.
    #[arg(long, conflicts_with = "yolo")]
    coco: Option<PathBuf>,
    /// Directory of YOLO label files.
    #[arg(long)]
    yolo: Option<PathBuf>,
    /// Image size index (`name,width,height[,id]`); defaults to sizes.csv in the YOLO directory.
    #[arg(long)]
    sizes: Option<PathBuf>,
    /// Class names, one per line; defaults to classes.txt in the YOLO directory.
    #[arg(long)]
    classes: Option<PathBuf>,
}

impl LabelSource {
    fn load(&self) -> Result<AnnotationSet> {
        match (&self.coco, &self.yolo) {
            (Some(p), _) => load_coco(p),
            (None, Some(dir)) => load_yolo(dir, self.sizes.as_deref(), self.classes.as_deref()),
            (None, None) => bail!("one of --coco or --yolo is required"),
        }
    }
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    source: LabelSource,
    /// Write the statistics as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelFormat {
    Coco,
    Yolo,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    source: LabelSource,
    #[arg(long, value_enum)]
    to: LabelFormat,
    /// Output JSON file (coco) or directory (yolo).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    coco: PathBuf,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Directory for train.json, val.json and test.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    /// Predictions JSON array.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write precision–recall curves as CSV.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.75, 0.9])]
    pr_thresholds: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    max_dets: usize,
}

#[derive(Subcommand)]
enum PhysicsCommand {
    /// Reflection DoLP against horizontal distance, as CSV.
    Profile {
        #[arg(long, default_value_t = 0.75)]
        height: f64,
        #[arg(long, default_value_t = 1.0)]
        n1: f64,
        #[arg(long, default_value_t = 1.33)]
        n2: f64,
        #[arg(long, default_value_t = 0.2)]
        dmin: f64,
        #[arg(long, default_value_t = 20.0)]
        dmax: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brewster angle of an interface.
    Brewster {
        #[arg(long, default_value_t = 1.0)]
        n1: f64,
        #[arg(long, default_value_t = 1.33)]
        n2: f64,
    },
    /// Single-scattering skylight DoLP at a scattering angle.
    Rayleigh {
        #[arg(long)]
        angle: f64,
        /// Maximum DoLP of the sky.
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 4)]
    frames: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    bit_depth: Option<u32>,
    /// Baseline JSON (`{"fps": …}`) to gate against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Fail when throughput drops below this fraction of the baseline.
    #[arg(long, default_value_t = 0.5)]
    min_ratio: f64,
    /// Store this run as the new baseline instead of gating.
    #[arg(long)]
    record: bool,
}

#[derive(Serialize, Deserialize)]
struct Baseline {
    fps: f64,
    frames: usize,
    workers: usize,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = JobConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Extract(a) => run_extract(a, &cfg),
        Command::Synth(a) => run_synth(a, &cfg),
        Command::Verify(a) => run_verify(a, &cfg),
        Command::Stats(a) => run_stats(a),
        Command::ConvertLabels(a) => run_convert(a),
        Command::Split(a) => run_split(a),
        Command::Eval(a) => run_eval(a),
        Command::Physics(p) => run_physics(p),
        Command::Bench(a) => run_bench(a, &cfg),
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_layout(text: Option<&str>) -> Result<Option<MosaicLayout>> {
    text.map(|t| t.parse::<MosaicLayout>().with_context(|| format!("--layout {t}")))
        .transpose()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Resolved frame-loading and extraction settings.
struct FrameSettings {
    layout: Option<MosaicLayout>,
    descriptor: Option<PathBuf>,
    opts: ExtractOptions,
}

fn frame_settings(a: &FrameArgs, cfg: &JobConfig) -> Result<FrameSettings> {
    let method = match a.method.as_ref().or(cfg.method.as_ref()) {
        Some(m) => m.parse::<DebayerMethod>()?,
        None => DebayerMethod::default(),
    };
    Ok(FrameSettings {
        layout: parse_layout(a.layout.as_deref().or(cfg.layout.as_deref()))?,
        descriptor: a.descriptor.clone().or_else(|| cfg.descriptor.clone()),
        opts: ExtractOptions {
            method,
            saturation_margin: a.saturation_margin.or(cfg.saturation_margin).unwrap_or(0),
            eps: None,
        },
    })
}

fn load_frame(path: &Path, s: &FrameSettings) -> Result<polarkit::mosaic::RawMosaicImage> {
    let raw = load_raw(path, s.descriptor.as_deref())
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(match s.layout {
        Some(l) => raw.with_layout(l),
        None => raw,
    })
}

/// Files named directly plus `.pgm`/`.raw` files inside named directories,
/// each directory listed in name order.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    matches!(
                        f.extension().and_then(|e| e.to_str()),
                        Some("pgm") | Some("raw")
                    )
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no input frames");
    }
    Ok(out)
}

fn run_extract(a: ExtractArgs, cfg: &JobConfig) -> Result<()> {
    let inputs = if a.inputs.is_empty() { cfg.inputs.clone() } else { a.inputs.clone() };
    let inputs = expand_inputs(&inputs)?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| anyhow!("--out is required"))?;
    let names = a
        .channels
        .clone()
        .or_else(|| cfg.channels.clone())
        .unwrap_or_else(|| Modality::ALL.iter().map(|m| m.name().to_string()).collect());
    let modalities = names
        .iter()
        .map(|n| n.parse::<Modality>())
        .collect::<Result<Vec<_>, _>>()?;
    if modalities.is_empty() {
        bail!("channel set is empty");
    }
    let settings = frame_settings(&a.frame, cfg)?;
    let pfm = a.pfm || cfg.pfm.unwrap_or(false);
    let workers = a.workers.or(cfg.workers).unwrap_or_else(default_workers);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    with_workers(workers, || {
        inputs.par_iter().try_for_each(|path| -> Result<()> {
            let raw = load_frame(path, &settings)?;
            let ex = extract(&raw, &settings.opts)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "frame".into());
            for &m in &modalities {
                let img = render(&ex, m)?;
                write_file(&out.join(format!("{stem}_{}.ppm", m.name())), &img.to_ppm())?;
            }
            if pfm {
                for (name, bytes) in encode_pfm_planes(&ex) {
                    write_file(&out.join(format!("{stem}_{name}.pfm")), &bytes)?;
                }
            }
            Ok(())
        })
    })??;
    println!("extracted {} frame(s) into {}", inputs.len(), out.display());
    Ok(())
}

fn run_synth(a: SynthArgs, cfg: &JobConfig) -> Result<()> {
    let scene = SceneSpec::from_json(&read_text(&a.scene)?)
        .with_context(|| format!("scene {}", a.scene.display()))?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| anyhow!("--out is required"))?;
    let layout = parse_layout(a.layout.as_deref().or(cfg.layout.as_deref()))?.unwrap_or_default();
    let bit_depth = a.bit_depth.or(cfg.bit_depth).unwrap_or(16);
    let noise = match (a.noise.or(cfg.noise), a.seed.or(cfg.seed)) {
        (None, _) | (Some(0.0), _) => None,
        (Some(sigma), Some(seed)) => Some(NoiseSpec { sigma, seed }),
        (Some(_), None) => bail!("--noise needs an explicit --seed"),
    };
    let workers = a.workers.or(cfg.workers).unwrap_or_else(default_workers);
    let truth = bake_truth(&scene)?;
    let raw = with_workers(workers, || mosaicize(&truth, layout, bit_depth, noise))??;
    save_raw(&raw, &out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(dir) = &a.truth {
        truth.export_pfm(dir)?;
    }
    println!(
        "wrote {}x{} {}-bit frame to {}",
        raw.width(),
        raw.height(),
        bit_depth,
        out.display()
    );
    Ok(())
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

fn run_verify(a: VerifyArgs, cfg: &JobConfig) -> Result<()> {
    let scene = SceneSpec::from_json(&read_text(&a.scene)?)?;
    let settings = frame_settings(&a.frame, cfg)?;
    let raw = load_frame(&a.raw, &settings)?;
    if (raw.width(), raw.height()) != (2 * scene.width, 2 * scene.height) {
        bail!(
            "raw frame is {}x{} but the scene needs {}x{}",
            raw.width(),
            raw.height(),
            2 * scene.width,
            2 * scene.height
        );
    }
    let ex = extract(&raw, &settings.opts)?;
    let interior = scene.interior_mask(a.margin);
    let polar = &ex.stokes.polar;
    let (mut dolp_err, mut aolp_err, mut checked) = (0.0f64, 0.0f64, 0usize);
    for y in 0..scene.height {
        for x in 0..scene.width {
            if !interior.get(x, y) || !polar.dolp.valid.get(x, y) {
                continue;
            }
            let region = scene.region(scene.label_at(x, y));
            checked += 1;
            dolp_err = dolp_err.max((polar.dolp.values.get(x, y) - region.dolp).abs());
            if region.dolp >= a.min_dolp {
                aolp_err = aolp_err.max(angle_diff(polar.aolp.values.get(x, y), region.aolp_deg));
            }
        }
    }
    let dolp_tol = a.dolp_tol.unwrap_or(if raw.bit_depth() == 16 {
        2.0 / 65536.0
    } else {
        0.02
    });
    println!("checked pixels: {checked}");
    println!("max dolp error: {dolp_err:.6e} (tolerance {dolp_tol:.6e})");
    println!("max aolp error: {aolp_err:.6e} deg (tolerance {:.6e})", a.aolp_tol);
    if checked == 0 {
        bail!("no interior pixels to check");
    }
    if dolp_err > dolp_tol || aolp_err > a.aolp_tol {
        bail!("recovered polarization outside tolerance");
    }
    println!("ok");
    Ok(())
}

fn load_coco(path: &Path) -> Result<AnnotationSet> {
    parse_coco(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_yolo(dir: &Path, sizes: Option<&Path>, classes: Option<&Path>) -> Result<AnnotationSet> {
    let sizes = sizes.map_or_else(|| dir.join("sizes.csv"), Path::to_path_buf);
    let classes = classes.map_or_else(|| dir.join("classes.txt"), Path::to_path_buf);
    let cats = parse_class_names(&read_text(&classes)?);
    Ok(parse_yolo(dir, &sizes, &cats)?)
}

fn run_stats(a: StatsArgs) -> Result<()> {
    let set = a.source.load()?;
    let s = box_stats(&set)?;
    println!("images: {}", set.images.len());
    println!("boxes: {}", s.total);
    println!("small (<32^2): {}", s.small);
    println!("medium (32^2..96^2): {}", s.medium);
    println!("large (>=96^2): {}", s.large);
    println!("below 14^2: {}", s.tiny);
    match s.pearson_area_y {
        Some(r) => println!("pearson r(area, y_center): {r:.6}"),
        None => println!("pearson r(area, y_center): undefined"),
    }
    if let Some(path) = &a.csv {
        write_file(path, s.to_csv().as_bytes())?;
    }
    Ok(())
}

fn run_convert(a: ConvertArgs) -> Result<()> {
    let set = a.source.load()?;
    match a.to {
        LabelFormat::Coco => write_file(&a.out, to_coco_json(&set).as_bytes())?,
        LabelFormat::Yolo => write_yolo(&set, &a.out)?,
    }
    println!(
        "converted {} image(s), {} box(es) to {}",
        set.images.len(),
        set.annotations.len(),
        a.out.display()
    );
    Ok(())
}

fn run_split(a: SplitArgs) -> Result<()> {
    let set = load_coco(&a.coco)?;
    let list = |p: &Option<PathBuf>| -> Result<Vec<String>> {
        p.as_deref()
            .map_or(Ok(Vec::new()), |p| Ok(parse_split_list(&read_text(p)?)))
    };
    let lists = SplitLists {
        train: list(&a.train)?,
        val: list(&a.val)?,
        test: list(&a.test)?,
    };
    let parts = apply_split(&set, &lists)?;
    for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        write_file(&a.out.join(format!("{name}.json")), to_coco_json(part).as_bytes())?;
        println!("{name}: {} images, {} boxes", part.images.len(), part.annotations.len());
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let gt = load_coco(&a.gt)?;
    let det = parse_predictions(&read_text(&a.pred)?)
        .with_context(|| format!("parsing {}", a.pred.display()))?;
    let params = EvalParams {
        max_dets: a.max_dets,
        pr_thresholds: a.pr_thresholds.clone(),
        ..EvalParams::default()
    };
    let report = coco_summary_with(&gt, &det, &params)?;
    print!("{report}");
    if let Some(p) = &a.csv {
        write_file(p, report.to_csv().as_bytes())?;
    }
    if let Some(p) = &a.pr_csv {
        write_file(p, report.pr_csv().as_bytes())?;
    }
    Ok(())
}

fn run_physics(p: PhysicsCommand) -> Result<()> {
    match p {
        PhysicsCommand::Profile {
            height,
            n1,
            n2,
            dmin,
            dmax,
            step,
            out,
        } => {
            let grid = distance_grid(dmin, dmax, step)?;
            let profile = dolp_distance_profile(
                CameraGeometry::new(height)?,
                InterfaceSpec::new(n1, n2)?,
                &grid,
            )?;
            let csv = profile_csv(&profile);
            match out {
                Some(path) => {
                    write_file(&path, csv.as_bytes())?;
                    if let Some(peak) = profile_peak(&profile) {
                        println!(
                            "peak dolp {:.6} at d = {:.2} m (theta_i = {:.2} deg)",
                            peak.dolp, peak.distance_m, peak.theta_i_deg
                        );
                    }
                }
                None => print!("{csv}"),
            }
        }
        PhysicsCommand::Brewster { n1, n2 } => {
            println!("{:.4}", brewster_angle(InterfaceSpec::new(n1, n2)?));
        }
        PhysicsCommand::Rayleigh { angle, peak } => {
            println!("{:.6}", rayleigh_dolp(angle, peak)?);
        }
    }
    Ok(())
}

fn run_bench(a: BenchArgs, cfg: &JobConfig) -> Result<()> {
    let workers = a.workers.or(cfg.workers).unwrap_or_else(default_workers);
    let frame = benchmark_frame(a.bit_depth.or(cfg.bit_depth).unwrap_or(16))?;
    let report = bench(&frame, a.frames, workers)?;
    println!(
        "{} frame(s) of {}x{} in {:.3} s with {} worker(s): {:.2} fps",
        report.frames,
        frame.width(),
        frame.height(),
        report.seconds,
        report.workers,
        report.fps
    );
    let Some(path) = &a.baseline else {
        return Ok(());
    };
    if a.record {
        let b = Baseline {
            fps: report.fps,
            frames: report.frames,
            workers: report.workers,
        };
        write_file(path, serde_json::to_string_pretty(&b)?.as_bytes())?;
        println!("recorded baseline in {}", path.display());
        return Ok(());
    }
    let b: Baseline = serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let ratio = report.fps / b.fps;
    println!("baseline {:.2} fps, ratio {:.2} (gate {:.2})", b.fps, ratio, a.min_ratio);
    if ratio < a.min_ratio {
        bail!("throughput regression: {:.2} fps against baseline {:.2}", report.fps, b.fps);
    }
    Ok(())
}
