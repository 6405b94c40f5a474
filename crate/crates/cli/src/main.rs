//! Command-line pipeline: synthesize scans, reconstruct meshes, evaluate.
//!
//! Exit codes: 0 success, 1 parse/configuration error, 2 I/O error. Every
//! run writes exactly one manifest recording the resolved configuration,
//! input/output hashes and stage timings.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde::Deserialize;
use serde_json::json;

use voxsurf::error::Error;
use voxsurf::imls::ImlsConfig;
use voxsurf::io::{read_cloud, write_cloud, write_mesh, CloudFormat};
use voxsurf::metrics::{self, MetricsReport};
use voxsurf::pipeline::{reconstruct, MethodConfig, RunManifest};
use voxsurf::synth::{ground_truth_cloud, scan, Scene, ScannerSpec};
use voxsurf::tsdf::{ConfidenceModel, ReconstructionConfig, ReconstructionMode};

const TOOL_NAME: &str = "voxsurf";
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = TOOL_NAME, version, about = "Surface reconstruction from single-viewpoint lidar scans")]
struct Cli {
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a triangle mesh from a point cloud
    Reconstruct(ReconstructArgs),
    /// Evaluate a predicted mesh against a ground-truth cloud
    Eval(EvalArgs),
    /// Generate a synthetic scan and its dense ground truth
    Synth(SynthArgs),
}

#[derive(Args)]
struct ReconstructArgs {
    /// Input point cloud (ply, xyz or kitti-bin)
    #[arg(long)]
    input: PathBuf,

    /// Input format; inferred from the extension when omitted
    #[arg(long)]
    format: Option<String>,

    /// Output mesh path (binary little-endian PLY)
    #[arg(long)]
    out: PathBuf,

    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,

    /// TOML file supplying any of the parameters below; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,

    /// Voxel edge length in meters
    #[arg(long)]
    alpha: Option<f64>,

    /// Confidence threshold of the gated modes
    #[arg(long)]
    tau: Option<f64>,

    /// Minimum neighborhood support for a plane fit
    #[arg(long)]
    nmin: Option<u32>,

    /// Largest neighborhood level
    #[arg(long)]
    kmax: Option<u32>,

    /// Neighborhood mode: an-gc, an, cn-gc or cn
    #[arg(long)]
    mode: Option<String>,

    /// Level used by the constant-neighborhood modes
    #[arg(long)]
    fixed_k: Option<u32>,

    /// Truncation band in meters (default: alpha * kmax)
    #[arg(long)]
    truncation: Option<f64>,

    /// Confidence convention: peak or raw
    #[arg(long)]
    confidence: Option<String>,

    /// Distance field: adaptive or imls
    #[arg(long)]
    method: Option<String>,

    /// Sensor position "x,y,z" (default 0,0,0)
    #[arg(long)]
    sensor: Option<String>,

    /// IMLS spherical neighborhood radius (default: alpha * kmax)
    #[arg(long)]
    imls_radius: Option<f64>,

    /// IMLS neighbor count for normal estimation (default: nmin)
    #[arg(long)]
    imls_k: Option<usize>,

    /// IMLS Gaussian bandwidth (default: radius / 3)
    #[arg(long)]
    imls_h: Option<f64>,
}

/// Optional file-based counterpart of the reconstruct flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    alpha: Option<f64>,
    tau: Option<f64>,
    nmin: Option<u32>,
    kmax: Option<u32>,
    mode: Option<String>,
    fixed_k: Option<u32>,
    truncation: Option<f64>,
    confidence: Option<String>,
    method: Option<String>,
    sensor: Option<[f64; 3]>,
    imls_radius: Option<f64>,
    imls_k: Option<usize>,
    imls_h: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted mesh (PLY); its vertices are the evaluated point set
    #[arg(long)]
    pred: PathBuf,

    /// Ground-truth point cloud
    #[arg(long)]
    gt: PathBuf,

    /// Ground-truth format; inferred from the extension when omitted
    #[arg(long)]
    gt_format: Option<String>,

    /// Sensor position "x,y,z" for the range profile (default 0,0,0)
    #[arg(long)]
    sensor: Option<String>,

    /// Range-profile bin width in meters
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,

    /// Prefix for <prefix>.metrics.csv, .delta.csv, .range.csv, .report.txt
    /// and .manifest.json
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene TOML (omit for the built-in plane+box+sphere scene)
    #[arg(long)]
    scene: Option<PathBuf>,

    /// Output directory for scan.ply, ground_truth.ply and the manifest
    #[arg(long)]
    out_dir: PathBuf,

    /// Noise seed
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Scanner origin "x,y,z"
    #[arg(long, default_value = "0,0,1.8")]
    sensor: String,

    /// Vertical channels of the sparse scan
    #[arg(long, default_value_t = 64)]
    layers: u32,

    /// Azimuth steps per revolution
    #[arg(long, default_value_t = 900)]
    steps: u32,

    /// Vertical field of view "lo,hi" in degrees
    #[arg(long, default_value = "-24.8,2.0", allow_hyphen_values = true)]
    vfov: String,

    /// Maximum range in meters
    #[arg(long, default_value_t = 100.0)]
    range_max: f64,

    /// Gaussian range noise sigma of the sparse scan
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,

    /// Vertical channels of the noise-free ground-truth scan
    #[arg(long, default_value_t = 316)]
    gt_layers: u32,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn parse_triple(text: &str, what: &str) -> Result<Vector3<f64>, Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "{what} must be three comma-separated numbers, got '{text}'"
        )));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(parts.iter()) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number '{part}' in {what}")))?;
    }
    Ok(Vector3::new(out[0], out[1], out[2]))
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64), Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!(
            "{what} must be two comma-separated numbers, got '{text}'"
        )));
    }
    let lo = parts[0]
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("bad number '{}' in {what}", parts[0])))?;
    let hi = parts[1]
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("bad number '{}' in {what}", parts[1])))?;
    Ok((lo, hi))
}

fn resolve_format(path: &Path, flag: &Option<String>) -> Result<CloudFormat, Error> {
    match flag {
        Some(name) => name.parse(),
        None => CloudFormat::infer(path).ok_or_else(|| {
            Error::Config(format!(
                "cannot infer format of '{}'; pass --format",
                path.display()
            ))
        }),
    }
}

/// Flag > config file > default.
fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

struct ResolvedReconstruct {
    cfg: ReconstructionConfig,
    method: MethodConfig,
    sensor: Vector3<f64>,
}

fn resolve_reconstruct(args: &ReconstructArgs) -> Result<ResolvedReconstruct, Error> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("config file: {e}")))?
        }
        None => FileConfig::default(),
    };

    let defaults = ReconstructionConfig::default();
    let alpha = pick(args.alpha, file.alpha, defaults.alpha);
    let k_max = pick(args.kmax, file.kmax, defaults.k_max);
    let n_min = pick(args.nmin, file.nmin, defaults.n_min);
    let truncation = pick(
        args.truncation,
        file.truncation,
        ReconstructionConfig::default_truncation(alpha, k_max),
    );
    let mode: ReconstructionMode = args
        .mode
        .as_deref()
        .or(file.mode.as_deref())
        .map(str::parse)
        .transpose()?
        .unwrap_or(defaults.mode);
    let confidence: ConfidenceModel = args
        .confidence
        .as_deref()
        .or(file.confidence.as_deref())
        .map(str::parse)
        .transpose()?
        .unwrap_or(defaults.confidence);

    let cfg = ReconstructionConfig {
        alpha,
        tau: pick(args.tau, file.tau, defaults.tau),
        n_min,
        k_max,
        mode,
        fixed_k: pick(args.fixed_k, file.fixed_k, defaults.fixed_k),
        truncation,
        confidence,
    };
    cfg.validate()?;

    let method_name = args
        .method
        .as_deref()
        .or(file.method.as_deref())
        .unwrap_or("adaptive");
    let method = match method_name {
        "adaptive" => MethodConfig::Adaptive,
        "imls" => {
            let matched = ImlsConfig::matched_to(alpha, k_max, n_min);
            let radius = pick(args.imls_radius, file.imls_radius, matched.radius);
            let imls = ImlsConfig {
                radius,
                k_neighbors: pick(args.imls_k, file.imls_k, matched.k_neighbors),
                h: pick(args.imls_h, file.imls_h, radius / 3.0),
            };
            imls.validate()?;
            MethodConfig::Imls(imls)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown method '{other}' (expected adaptive or imls)"
            )))
        }
    };

    let sensor = match args.sensor.as_deref() {
        Some(text) => parse_triple(text, "--sensor")?,
        None => file
            .sensor
            .map(Vector3::from)
            .unwrap_or_else(Vector3::zeros),
    };

    Ok(ResolvedReconstruct {
        cfg,
        method,
        sensor,
    })
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), Error> {
    let resolved = resolve_reconstruct(&args)?;
    let format = resolve_format(&args.input, &args.format)?;

    let start = Instant::now();
    let mut cloud = read_cloud(&args.input, format)?;
    cloud.sensor_pose = resolved.sensor;
    let read_ms = start.elapsed().as_millis();
    if cloud.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no usable points in '{}'",
            args.input.display()
        )));
    }

    let result = reconstruct(&cloud, &resolved.cfg, &resolved.method)?;

    let start = Instant::now();
    write_mesh(&result.mesh, &args.out)?;
    let write_ms = start.elapsed().as_millis();

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| manifest_sibling(&args.out));
    let config = json!({
        "reconstruction": resolved.cfg,
        "method": resolved.method,
        "sensor": [resolved.sensor.x, resolved.sensor.y, resolved.sensor.z],
        "input_format": format.to_string(),
    });
    let mut manifest = RunManifest::new(TOOL_NAME, TOOL_VERSION, "reconstruct", config)?;
    manifest.record_input(&args.input)?;
    manifest.record_output(&args.out)?;
    manifest.timings_ms = result.timings_ms.clone();
    manifest.timings_ms.insert("read_ms".into(), read_ms);
    manifest.timings_ms.insert("write_ms".into(), write_ms);
    manifest.write_json(&manifest_path)?;

    println!(
        "reconstructed {} -> {}: {} points, {} occupied voxels, {} vertices, {} triangles",
        args.input.display(),
        args.out.display(),
        result.input_points,
        result.occupied_voxels,
        result.mesh.vertices.len(),
        result.mesh.triangles.len()
    );
    Ok(())
}

fn manifest_sibling(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn render_report(report: &MetricsReport, pred_count: usize, gt_count: usize) -> String {
    let mut text = String::new();
    text.push_str(&format!("predicted points: {pred_count}\n"));
    text.push_str(&format!("ground-truth points: {gt_count}\n"));
    for (name, value) in [
        ("ae  p_to_gt", report.ae_p_to_gt),
        ("ae  gt_to_p", report.ae_gt_to_p),
        ("ae  sym    ", report.ae_sym),
        ("hd  p_to_gt", report.hd_p_to_gt),
        ("hd  gt_to_p", report.hd_gt_to_p),
        ("hd  sym    ", report.hd_sym),
    ] {
        text.push_str(&format!("{name} {value:.6} m\n"));
    }
    text
}

fn metrics_csv(report: &MetricsReport) -> String {
    let mut csv = String::from("metric,direction,value\n");
    for (metric, direction, value) in [
        ("ae", "p_to_gt", report.ae_p_to_gt),
        ("ae", "gt_to_p", report.ae_gt_to_p),
        ("ae", "sym", report.ae_sym),
        ("hd", "p_to_gt", report.hd_p_to_gt),
        ("hd", "gt_to_p", report.hd_gt_to_p),
        ("hd", "sym", report.hd_sym),
    ] {
        csv.push_str(&format!("{metric},{direction},{value}\n"));
    }
    csv
}

fn curve_csv(header: &str, rows: &[(f64, f64)]) -> String {
    let mut csv = String::from(header);
    csv.push('\n');
    for (a, b) in rows {
        csv.push_str(&format!("{a},{b}\n"));
    }
    csv
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let sensor = match args.sensor.as_deref() {
        Some(text) => parse_triple(text, "--sensor")?,
        None => Vector3::zeros(),
    };
    let gt_format = resolve_format(&args.gt, &args.gt_format)?;

    let start = Instant::now();
    let pred = read_cloud(&args.pred, CloudFormat::Ply)?;
    let gt = read_cloud(&args.gt, gt_format)?;
    let read_ms = start.elapsed().as_millis();

    let start = Instant::now();
    let thresholds = metrics::default_delta_thresholds();
    let report = metrics::evaluate(&pred.points, &gt.points, &sensor, args.bin_width, &thresholds)?;
    let eval_ms = start.elapsed().as_millis();

    let prefix = args.out_prefix.as_os_str().to_string_lossy().into_owned();
    let metrics_path = PathBuf::from(format!("{prefix}.metrics.csv"));
    let delta_path = PathBuf::from(format!("{prefix}.delta.csv"));
    let range_path = PathBuf::from(format!("{prefix}.range.csv"));
    let report_path = PathBuf::from(format!("{prefix}.report.txt"));
    let manifest_path = PathBuf::from(format!("{prefix}.manifest.json"));

    write_text(&metrics_path, &metrics_csv(&report))?;
    write_text(&delta_path, &curve_csv("threshold,fraction", &report.delta_curve))?;
    write_text(&range_path, &curve_csv("bin_center,mean_error", &report.range_profile))?;
    let rendered = render_report(&report, pred.len(), gt.len());
    write_text(&report_path, &rendered)?;

    let config = json!({
        "sensor": [sensor.x, sensor.y, sensor.z],
        "bin_width": args.bin_width,
        "delta_thresholds": {"start": 0.0, "step": 0.01, "stop": 1.0},
    });
    let mut manifest = RunManifest::new(TOOL_NAME, TOOL_VERSION, "eval", config)?;
    manifest.record_input(&args.pred)?;
    manifest.record_input(&args.gt)?;
    for path in [&metrics_path, &delta_path, &range_path, &report_path] {
        manifest.record_output(path)?;
    }
    manifest.timings_ms.insert("read_ms".into(), read_ms);
    manifest.timings_ms.insert("eval_ms".into(), eval_ms);
    manifest.write_json(&manifest_path)?;

    print!("{rendered}");
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let origin = parse_triple(&args.sensor, "--sensor")?;
    let vfov = parse_pair(&args.vfov, "--vfov")?;
    let scene = match &args.scene {
        Some(path) => Scene::from_path(path)?,
        None => Scene::default_scene(),
    };
    let sparse = ScannerSpec {
        origin,
        layers: args.layers,
        vertical_fov_deg: vfov,
        horizontal_steps: args.steps,
        range_max: args.range_max,
        noise_sigma: args.noise_sigma,
    };
    let dense = ScannerSpec {
        layers: args.gt_layers,
        noise_sigma: 0.0,
        ..sparse.clone()
    };

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let scan_path = args.out_dir.join("scan.ply");
    let gt_path = args.out_dir.join("ground_truth.ply");
    let manifest_path = args.out_dir.join("synth.manifest.json");

    let start = Instant::now();
    let sparse_cloud = scan(&scene, &sparse, args.seed)?;
    let dense_cloud = ground_truth_cloud(&scene, &dense)?;
    let scan_ms = start.elapsed().as_millis();

    let start = Instant::now();
    write_cloud(&sparse_cloud, &scan_path)?;
    write_cloud(&dense_cloud, &gt_path)?;
    let write_ms = start.elapsed().as_millis();

    let config = json!({
        "scene": args.scene.as_ref().map(|p| p.display().to_string()),
        "seed": args.seed,
        "sensor": [origin.x, origin.y, origin.z],
        "sparse": {
            "layers": sparse.layers,
            "vertical_fov_deg": [vfov.0, vfov.1],
            "horizontal_steps": sparse.horizontal_steps,
            "range_max": sparse.range_max,
            "noise_sigma": sparse.noise_sigma,
        },
        "ground_truth_layers": dense.layers,
    });
    let mut manifest = RunManifest::new(TOOL_NAME, TOOL_VERSION, "synth", config)?;
    if let Some(scene_path) = &args.scene {
        manifest.record_input(scene_path)?;
    }
    manifest.record_output(&scan_path)?;
    manifest.record_output(&gt_path)?;
    manifest.timings_ms.insert("scan_ms".into(), scan_ms);
    manifest.timings_ms.insert("write_ms".into(), write_ms);
    manifest.write_json(&manifest_path)?;

    println!(
        "synthesized {} scan points and {} ground-truth points into {}",
        sparse_cloud.len(),
        dense_cloud.len(),
        args.out_dir.display()
    );
    Ok(())
}
