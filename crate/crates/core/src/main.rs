//! Command-line front end: each reconstruction stage as a subcommand over
//! files, plus `pipeline`, which chains the same stage functions so its
//! artifacts are byte-identical to running the stages separately.

use clap::{Parser, Subcommand, ValueEnum};
use fruitmap::cloud::io::{format_from_path, read_cloud, write_cloud, CloudFormat, Encoding};
use fruitmap::cloud::{estimate_normals, statistical_outlier_removal};
use fruitmap::config::PipelineConfig;
use fruitmap::eval::synth::{generate_scene, read_truth, write_truth};
use fruitmap::eval::{bounding_box_detection, evaluate, Detection, EvalReport, StageCounts};
use fruitmap::fit::{fit_superellipsoid, FitRecord};
use fruitmap::segment::{
    estimate_center, euclidean_cluster, list_frames, load_frame, mask_to_cloud_sensor, save_frame,
    threshold_mask, Cluster, FrameMeta,
};
use fruitmap::tsdf::{PosedCloud, TsdfGrid};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fruitmap", version, about = "Fruit shape reconstruction from RGB-D sequences")]
struct Cli {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the synthetic-scene random seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-cluster fitting (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// File format for point-cloud artifacts.
    #[arg(long, global = true, value_enum, default_value = "pcd")]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Pcd,
    Ply,
}

impl FormatArg {
    fn format(self) -> CloudFormat {
        match self {
            FormatArg::Pcd => CloudFormat::Pcd,
            FormatArg::Ply => CloudFormat::Ply,
        }
    }

    fn ext(self) -> &'static str {
        match self {
            FormatArg::Pcd => "pcd",
            FormatArg::Ply => "ply",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic RGB-D scene with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Mask fruit pixels, back-project and filter per-frame clouds.
    Segment {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse posed per-frame clouds into a truncated signed distance field.
    Integrate {
        #[arg(long)]
        clouds: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the zero-crossing surface cloud from a fused grid.
    Extract {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster the surface cloud; estimate per-cluster normals and centres.
    Cluster {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a bounded superellipsoid to each cluster.
    Fit {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write surface samples of converged shapes into this directory.
        #[arg(long)]
        shapes: Option<PathBuf>,
    },
    /// Compare fitted shapes (and optionally a bounding-box baseline)
    /// against ground truth.
    Eval {
        #[arg(long)]
        fits: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cluster directory for the bounding-box baseline report.
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Run segment, integrate, extract, cluster, fit and eval in order.
    Pipeline {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

/// Usage problems exit with 2, stage failures with 1; both print a JSON
/// record on stderr.
enum CliError {
    Usage(String),
    Stage { stage: &'static str, message: String },
}

trait StageResult<T> {
    fn in_stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: std::error::Error> StageResult<T> for Result<T, E> {
    fn in_stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage {
            stage,
            message: e.to_string(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, stage, message) = match err {
                CliError::Usage(message) => (2u8, "usage", message),
                CliError::Stage { stage, message } => (1u8, stage, message),
            };
            let record = serde_json::json!({ "stage": stage, "error": message });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.scene.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let format = cli.format;

    match cli.command {
        Command::Synth { out } => cmd_synth(&config, &out),
        Command::Segment { frames, out } => {
            let stats = stage_segment(&config, &frames, &out, format)?;
            println!(
                "segment: {} frames, {} masked px, {} projected, {} kept",
                stats.frames, stats.masked_pixels, stats.projected_points, stats.filtered_points
            );
            Ok(())
        }
        Command::Integrate { clouds, out } => {
            let stats = stage_integrate(&config, &clouds, &out)?;
            println!(
                "integrate: {} clouds, {} observed voxels, {} skipped points",
                stats.clouds, stats.observed_voxels, stats.skipped_points
            );
            Ok(())
        }
        Command::Extract { grid, out } => {
            let points = stage_extract(&grid, &out, format)?;
            println!("extract: {points} surface points");
            Ok(())
        }
        Command::Cluster { surface, out } => {
            let stats = stage_cluster(&config, &surface, &out, format)?;
            println!(
                "cluster: {} clusters, {} with centres",
                stats.clusters, stats.with_centers
            );
            Ok(())
        }
        Command::Fit { clusters, out, shapes } => {
            let stats = stage_fit(&config, &clusters, &out, shapes.as_deref(), format)?;
            println!(
                "fit: {} clusters, {} fitted, {} converged",
                stats.clusters, stats.fitted, stats.converged
            );
            Ok(())
        }
        Command::Eval { fits, truth, out, clusters } => {
            let stats = stage_eval(&config, &fits, &truth, &out, clusters.as_deref(), format)?;
            print_report_line("eval", &stats.report);
            if let Some(baseline) = &stats.baseline {
                print_report_line("baseline", baseline);
            }
            Ok(())
        }
        Command::Pipeline { frames, out, truth } => cmd_pipeline(&config, &frames, &out, truth.as_deref(), format),
    }
}

fn print_report_line(name: &str, report: &EvalReport) {
    println!(
        "{name}: {}/{} matched (ma0 {}, ma50 {}), centre {} cm, accuracy {}",
        report.fruits_all,
        report.total_gt,
        report.fruits_ma0,
        report.fruits_ma50,
        report
            .center_cm_mean
            .map_or("n/a".into(), |v| format!("{v:.2}")),
        report
            .acc_mean_ma0
            .map_or("n/a".into(), |v| format!("{v:.3}")),
    );
}

fn create_dir(path: &Path, stage: &'static str) -> Result<(), CliError> {
    std::fs::create_dir_all(path).in_stage(stage)
}

fn write_json<T: Serialize>(value: &T, path: &Path, stage: &'static str) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).in_stage(stage)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).in_stage(stage)
}

fn write_resolved_config(config: &PipelineConfig, dir: &Path, stage: &'static str) -> Result<(), CliError> {
    std::fs::write(dir.join("resolved_config.toml"), config.to_toml()).in_stage(stage)
}

// --------------------------------------------------------------- synth

fn cmd_synth(config: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    const STAGE: &str = "synth";
    let scene = generate_scene(&config.scene).in_stage(STAGE)?;
    let frames_dir = out.join("frames");
    create_dir(&frames_dir, STAGE)?;
    for (k, frame) in scene.frames.iter().enumerate() {
        save_frame(frame, &frames_dir, &format!("frame_{k:03}")).in_stage(STAGE)?;
    }
    write_truth(&scene.fruits, &out.join("truth.json")).in_stage(STAGE)?;
    write_resolved_config(config, out, STAGE)?;
    println!(
        "synth: {} fruits, {} frames, {} unreachable",
        scene.fruits.len(),
        scene.frames.len(),
        scene.unreachable.len()
    );
    Ok(())
}

// --------------------------------------------------------------- segment

#[derive(Default)]
struct SegmentStats {
    frames: usize,
    empty_frames: usize,
    masked_pixels: usize,
    projected_points: usize,
    filtered_points: usize,
}

/// Writes one filtered sensor-frame cloud plus pose metadata per input
/// frame.
fn stage_segment(
    config: &PipelineConfig,
    frames_dir: &Path,
    out: &Path,
    format: FormatArg,
) -> Result<SegmentStats, CliError> {
    const STAGE: &str = "segment";
    let stems = list_frames(frames_dir).in_stage(STAGE)?;
    if stems.is_empty() {
        return Err(CliError::Stage {
            stage: STAGE,
            message: format!("no frames found in {}", frames_dir.display()),
        });
    }
    create_dir(out, STAGE)?;
    let mut stats = SegmentStats {
        frames: stems.len(),
        ..SegmentStats::default()
    };
    for stem in &stems {
        let frame = load_frame(frames_dir, stem).in_stage(STAGE)?;
        let mask = threshold_mask(&frame, &config.segment);
        stats.masked_pixels += mask.count();
        let projection = mask_to_cloud_sensor(&frame, &mask).in_stage(STAGE)?;
        stats.projected_points += projection.cloud.len();
        if projection.cloud.is_empty() {
            stats.empty_frames += 1;
            continue;
        }
        let outcome = statistical_outlier_removal(
            &projection.cloud,
            config.filter.mean_k,
            config.filter.stddev_mult,
        );
        stats.filtered_points += outcome.cloud.len();
        if outcome.cloud.is_empty() {
            stats.empty_frames += 1;
            continue;
        }
        let cloud_path = out.join(format!("{stem}.{}", format.ext()));
        write_cloud(&outcome.cloud, &cloud_path, format.format(), Encoding::Ascii)
            .in_stage(STAGE)?;
        let meta = FrameMeta::from_pose(
            &frame.sensor_pose,
            &frame.intrinsics,
            fruitmap::segment::DEFAULT_DEPTH_SCALE,
        );
        write_json(&meta, &out.join(format!("{stem}.json")), STAGE)?;
    }
    Ok(stats)
}

// ------------------------------------------------------------- integrate

#[derive(Default)]
struct IntegrateStats {
    clouds: usize,
    observed_voxels: usize,
    skipped_points: u64,
}

fn posed_cloud_stems(dir: &Path) -> Result<Vec<String>, std::io::Error> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

fn find_cloud_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["pcd", "ply"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Fuses every `<stem>.json` + cloud pair in the directory into one grid.
fn stage_integrate(
    config: &PipelineConfig,
    clouds_dir: &Path,
    grid_path: &Path,
) -> Result<IntegrateStats, CliError> {
    const STAGE: &str = "integrate";
    let stems = posed_cloud_stems(clouds_dir).in_stage(STAGE)?;
    if stems.is_empty() {
        return Err(CliError::Stage {
            stage: STAGE,
            message: format!("no posed clouds found in {}", clouds_dir.display()),
        });
    }
    let mut grid = TsdfGrid::new(config.tsdf.clone()).in_stage(STAGE)?;
    let mut stats = IntegrateStats::default();
    for stem in &stems {
        let meta_bytes = std::fs::read(clouds_dir.join(format!("{stem}.json"))).in_stage(STAGE)?;
        let meta: FrameMeta = serde_json::from_slice(&meta_bytes).in_stage(STAGE)?;
        let pose = meta.pose_isometry().in_stage(STAGE)?;
        let Some(cloud_path) = find_cloud_file(clouds_dir, stem) else {
            return Err(CliError::Stage {
                stage: STAGE,
                message: format!("no point cloud next to {stem}.json"),
            });
        };
        let format = format_from_path(&cloud_path).expect("extension checked");
        let cloud = read_cloud(&cloud_path, format).in_stage(STAGE)?;
        if cloud.is_empty() {
            continue;
        }
        grid.integrate(&PosedCloud {
            cloud,
            sensor_pose: pose,
        })
        .in_stage(STAGE)?;
        stats.clouds += 1;
    }
    if let Some(parent) = grid_path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent, STAGE)?;
        }
    }
    grid.write(grid_path).in_stage(STAGE)?;
    stats.observed_voxels = grid.observed_voxel_count();
    stats.skipped_points = grid.skipped_points();
    Ok(stats)
}

// --------------------------------------------------------------- extract

fn stage_extract(grid_path: &Path, out: &Path, format: FormatArg) -> Result<usize, CliError> {
    const STAGE: &str = "extract";
    let grid = TsdfGrid::read(grid_path).in_stage(STAGE)?;
    let surface = grid.extract_surface();
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent, STAGE)?;
        }
    }
    write_cloud(&surface, out, format.format(), Encoding::Ascii).in_stage(STAGE)?;
    Ok(surface.len())
}

// --------------------------------------------------------------- cluster

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CenterRecord {
    id: String,
    points: usize,
    /// `null` when normals or centre estimation failed for the cluster.
    center: Option<[f64; 3]>,
}

#[derive(Default)]
struct ClusterStats {
    clusters: usize,
    with_centers: usize,
}

/// Writes `cluster_NN.<ext>` (points with normals) and `centers.json`.
fn stage_cluster(
    config: &PipelineConfig,
    surface_path: &Path,
    out: &Path,
    format: FormatArg,
) -> Result<ClusterStats, CliError> {
    const STAGE: &str = "cluster";
    let surface_format = format_from_path(surface_path).ok_or_else(|| CliError::Stage {
        stage: STAGE,
        message: format!("unrecognised cloud extension: {}", surface_path.display()),
    })?;
    let surface = read_cloud(surface_path, surface_format).in_stage(STAGE)?;
    let clusters = euclidean_cluster(&surface, &config.cluster);
    create_dir(out, STAGE)?;
    let mut stats = ClusterStats {
        clusters: clusters.len(),
        ..ClusterStats::default()
    };
    let mut records = Vec::with_capacity(clusters.len());
    for (i, mut cluster) in clusters.into_iter().enumerate() {
        let id = format!("cluster_{i:02}");
        let center = match estimate_normals(&cluster.points, config.normals.k) {
            Ok(with_normals) => {
                cluster.points = with_normals;
                estimate_center(&cluster.points, config.cluster.lambda).ok()
            }
            Err(_) => None,
        };
        if center.is_some() {
            stats.with_centers += 1;
        }
        write_cloud(
            &cluster.points,
            &out.join(format!("{id}.{}", format.ext())),
            format.format(),
            Encoding::Ascii,
        )
        .in_stage(STAGE)?;
        records.push(CenterRecord {
            id,
            points: cluster.points.len(),
            center: center.map(|c| [c.x, c.y, c.z]),
        });
    }
    write_json(&records, &out.join("centers.json"), STAGE)?;
    Ok(stats)
}

// ------------------------------------------------------------------ fit

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitEntry {
    id: String,
    /// `null` when the cluster had no centre estimate or fitting failed.
    fit: Option<FitRecord>,
}

#[derive(Default)]
struct FitStats {
    clusters: usize,
    fitted: usize,
    converged: usize,
}

/// Reads `centers.json` plus the cluster clouds and writes `fits.json`
/// (one entry per cluster, in order).
fn stage_fit(
    config: &PipelineConfig,
    clusters_dir: &Path,
    out: &Path,
    shapes_dir: Option<&Path>,
    format: FormatArg,
) -> Result<FitStats, CliError> {
    const STAGE: &str = "fit";
    let centers_bytes = std::fs::read(clusters_dir.join("centers.json")).in_stage(STAGE)?;
    let records: Vec<CenterRecord> = serde_json::from_slice(&centers_bytes).in_stage(STAGE)?;
    let mut clusters = Vec::with_capacity(records.len());
    for record in &records {
        let Some(cloud_path) = find_cloud_file(clusters_dir, &record.id) else {
            return Err(CliError::Stage {
                stage: STAGE,
                message: format!("no point cloud for {}", record.id),
            });
        };
        let cloud_format = format_from_path(&cloud_path).expect("extension checked");
        let points = read_cloud(&cloud_path, cloud_format).in_stage(STAGE)?;
        let indices = (0..points.len()).collect();
        clusters.push(Cluster {
            points,
            indices,
            center: record.center.map(|[x, y, z]| Point3::new(x, y, z)),
        });
    }

    use rayon::prelude::*;
    let fits: Vec<Option<FitRecord>> = clusters
        .par_iter()
        .map(|cluster| {
            cluster.center?;
            fit_superellipsoid(cluster, &config.fit)
                .ok()
                .map(|result| FitRecord::from(&result))
        })
        .collect();

    let mut stats = FitStats {
        clusters: clusters.len(),
        ..FitStats::default()
    };
    let mut entries = Vec::with_capacity(fits.len());
    for (record, fit) in records.iter().zip(fits) {
        if let Some(fit) = &fit {
            stats.fitted += 1;
            if fit.converged {
                stats.converged += 1;
            }
        }
        entries.push(FitEntry {
            id: record.id.clone(),
            fit,
        });
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent, STAGE)?;
        }
    }
    write_json(&entries, out, STAGE)?;

    if let Some(shapes_dir) = shapes_dir {
        create_dir(shapes_dir, STAGE)?;
        for entry in &entries {
            let Some(fit) = &entry.fit else { continue };
            if !fit.converged {
                continue;
            }
            let shape = fit.shape().in_stage(STAGE)?;
            let sampled = shape.sample_surface(config.output.shape_resolution);
            let suffix = entry.id.strip_prefix("cluster_").unwrap_or(&entry.id);
            write_cloud(
                &sampled,
                &shapes_dir.join(format!("shape_{suffix}.{}", format.ext())),
                format.format(),
                Encoding::Ascii,
            )
            .in_stage(STAGE)?;
        }
    }
    Ok(stats)
}

// ----------------------------------------------------------------- eval

struct EvalStats {
    report: EvalReport,
    baseline: Option<EvalReport>,
}

fn detections_from_fits(entries: &[FitEntry]) -> Vec<Detection> {
    entries
        .iter()
        .enumerate()
        .filter_map(|(i, entry)| {
            let fit = entry.fit.as_ref()?;
            if !fit.converged {
                return None;
            }
            Some(Detection {
                label: format!("det_{i:02}"),
                center: Point3::new(fit.tx, fit.ty, fit.tz),
                volume: fit.volume_m3,
            })
        })
        .collect()
}

/// Writes `report.json`/`report.csv`, plus `baseline_report.*` when a
/// cluster directory is supplied.
fn stage_eval(
    config: &PipelineConfig,
    fits_path: &Path,
    truth_path: &Path,
    out: &Path,
    clusters_dir: Option<&Path>,
    _format: FormatArg,
) -> Result<EvalStats, CliError> {
    const STAGE: &str = "eval";
    let fits_bytes = std::fs::read(fits_path).in_stage(STAGE)?;
    let entries: Vec<FitEntry> = serde_json::from_slice(&fits_bytes).in_stage(STAGE)?;
    let truth = read_truth(truth_path).in_stage(STAGE)?;
    let truth_dets: Vec<Detection> = truth.iter().map(|f| f.detection()).collect();
    let detections = detections_from_fits(&entries);

    create_dir(out, STAGE)?;
    let report = evaluate(&truth_dets, &detections, config.eval.max_center_distance)
        .in_stage(STAGE)?;
    write_json(&report, &out.join("report.json"), STAGE)?;
    std::fs::write(out.join("report.csv"), report.to_csv()).in_stage(STAGE)?;

    let baseline = match clusters_dir {
        Some(dir) => {
            let centers_bytes = std::fs::read(dir.join("centers.json")).in_stage(STAGE)?;
            let records: Vec<CenterRecord> = serde_json::from_slice(&centers_bytes).in_stage(STAGE)?;
            let mut boxes = Vec::with_capacity(records.len());
            for (i, record) in records.iter().enumerate() {
                let Some(cloud_path) = find_cloud_file(dir, &record.id) else {
                    return Err(CliError::Stage {
                        stage: STAGE,
                        message: format!("no point cloud for {}", record.id),
                    });
                };
                let cloud_format = format_from_path(&cloud_path).expect("extension checked");
                let points = read_cloud(&cloud_path, cloud_format).in_stage(STAGE)?;
                boxes.push(bounding_box_detection(&points, format!("bbox_{i:02}")));
            }
            let baseline = evaluate(&truth_dets, &boxes, config.eval.max_center_distance)
                .in_stage(STAGE)?;
            write_json(&baseline, &out.join("baseline_report.json"), STAGE)?;
            std::fs::write(out.join("baseline_report.csv"), baseline.to_csv()).in_stage(STAGE)?;
            Some(baseline)
        }
        None => None,
    };
    Ok(EvalStats { report, baseline })
}

// ------------------------------------------------------------- pipeline

/// Chains the stage functions over a shared output directory. Because the
/// very same file-based stages run, every artifact matches a stage-by-stage
/// invocation byte for byte.
fn cmd_pipeline(
    config: &PipelineConfig,
    frames: &Path,
    out: &Path,
    truth: Option<&Path>,
    format: FormatArg,
) -> Result<(), CliError> {
    const STAGE: &str = "pipeline";
    create_dir(out, STAGE)?;
    write_resolved_config(config, out, STAGE)?;

    let clouds_dir = out.join("clouds");
    let grid_path = out.join("grid.tsdf");
    let surface_path = out.join(format!("surface.{}", format.ext()));
    let clusters_dir = out.join("clusters");
    let fits_path = out.join("fits.json");
    let shapes_dir = out.join("shapes");

    let seg = stage_segment(config, frames, &clouds_dir, format)?;
    let integ = stage_integrate(config, &clouds_dir, &grid_path)?;
    let surface_points = stage_extract(&grid_path, &surface_path, format)?;
    let clus = stage_cluster(config, &surface_path, &clusters_dir, format)?;
    let fit = stage_fit(config, &clusters_dir, &fits_path, Some(&shapes_dir), format)?;

    let counts = StageCounts {
        frames: seg.frames,
        empty_frames: seg.empty_frames,
        masked_pixels: seg.masked_pixels,
        projected_points: seg.projected_points,
        filtered_points: seg.filtered_points,
        surface_points,
        clusters: clus.clusters,
        dropped_clusters: fit.clusters - fit.fitted,
        converged_fits: fit.converged,
    };
    write_json(&counts, &out.join("summary.json"), STAGE)?;
    println!(
        "pipeline: {} frames -> {} voxels -> {} surface points -> {} clusters -> {} converged fits",
        counts.frames,
        integ.observed_voxels,
        counts.surface_points,
        counts.clusters,
        counts.converged_fits
    );

    if let Some(truth_path) = truth {
        let stats = stage_eval(config, &fits_path, truth_path, out, Some(&clusters_dir), format)?;
        print_report_line("eval", &stats.report);
        if let Some(baseline) = &stats.baseline {
            print_report_line("baseline", baseline);
        }
    }
    Ok(())
}
