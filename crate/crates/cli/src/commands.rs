use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dfd_core::dataset::{self, procedural, Manifest};
use dfd_core::eval::{self, MetricsReport};
use dfd_core::raster::DepthMap;
use dfd_core::render::{self, DEFAULT_STEP_PX};
use dfd_core::sidfd::{self, BranchPolicy, SidfdParams};
use dfd_core::uncertainty;
use serde::Serialize;
use serde_json::json;

use crate::config::{echo, echo_path_for_file, parse_bins, parse_range, write_json, CameraArgs};
use crate::{CliError, Outcome};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

fn create_parent(file: &Path) -> Result<(), CliError> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

#[derive(Debug, Args)]
pub struct BlurCurveArgs {
    #[command(flatten)]
    camera: CameraArgs,
    /// Depth range in meters, `lo:hi`
    #[arg(long, value_parser = parse_range, default_value = "0.5:10")]
    range_m: (f64, f64),
    /// Number of samples, uniform in inverse depth
    #[arg(long, default_value_t = 96)]
    samples: usize,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
}

pub fn blur_curve(a: BlurCurveArgs) -> Result<Outcome, CliError> {
    let (camera, _) = a.camera.resolve()?;
    let curve = camera.blur_curve(a.range_m.0, a.range_m.1, a.samples)?;
    create_parent(&a.out)?;
    echo(
        &echo_path_for_file(&a.out),
        &json!({
            "command": "blur-curve",
            "tool_version": dfd_core::TOOL_VERSION,
            "camera": camera.params(),
            "range_m": [a.range_m.0, a.range_m.1],
            "samples": a.samples,
            "out": a.out,
        }),
    )?;
    let file = fs::File::create(&a.out).map_err(|e| CliError::Usage(format!("{}: {e}", a.out.display())))?;
    curve
        .write_csv(file)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.out.display())))?;
    match curve.zero_crossing() {
        Some(z) => println!("{} samples, zero blur at {z:.6} m", curve.samples().len()),
        None => println!("{} samples, focal plane outside range", curve.samples().len()),
    }
    Ok(Outcome::Complete)
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Manifest CSV (`rgb_path,depth_path,split`)
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    camera: CameraArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Signed-blur quantization step in pixels [default: config value or 0.25]
    #[arg(long)]
    step_px: Option<f64>,
}

pub const RENDER_REPORT: &str = "render_report.json";
pub const RUN_ECHO: &str = "run.json";

pub fn render(a: RenderArgs) -> Result<Outcome, CliError> {
    let (camera, file) = a.camera.resolve()?;
    let step = a.step_px.or(file.quantization_px).unwrap_or(DEFAULT_STEP_PX);
    let manifest = Manifest::load(&a.manifest)?;
    create_dir(&a.out_dir)?;
    echo(
        &a.out_dir.join(RUN_ECHO),
        &json!({
            "command": "render",
            "tool_version": dfd_core::TOOL_VERSION,
            "camera": camera.params(),
            "step_px": step,
            "manifest": a.manifest,
            "dataset_root": manifest.root,
            "out_dir": a.out_dir,
        }),
    )?;
    let report = render::render_dataset(&manifest, &camera, &a.out_dir, step)?;
    write_json(&a.out_dir.join(RENDER_REPORT), &report)?;
    for e in report.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!("failed: {}: {}", e.rgb_path, e.error.as_deref().unwrap_or_default());
    }
    println!("rendered {} of {} entries", report.succeeded, report.entries.len());
    Ok(if report.failed > 0 { Outcome::Partial } else { Outcome::Complete })
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Defocused RGB image
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    camera: CameraArgs,
    /// Side of the focal plane assumed when inverting blur
    #[arg(long)]
    policy: Option<BranchPolicy>,
    /// Re-blur Gaussian σ₀ in pixels
    #[arg(long)]
    sigma0: Option<f64>,
    /// Gaussian-σ to disk-diameter constant `c` (ε = 2cσ)
    #[arg(long)]
    disk_constant: Option<f64>,
    /// Densification iteration cap
    #[arg(long)]
    iterations: Option<usize>,
    /// Depth assigned to far solutions beyond reach, meters
    #[arg(long)]
    d_max: Option<f64>,
    /// Output depth (`.png` 16-bit millimeters or `.pfm` meters)
    #[arg(long)]
    out: PathBuf,
    /// Optional dense blur-diameter map (pixels) as PFM
    #[arg(long)]
    defocus_out: Option<PathBuf>,
}

pub fn estimate(a: EstimateArgs) -> Result<Outcome, CliError> {
    let (camera, file) = a.camera.resolve()?;
    let mut params = file.sidfd.unwrap_or_default();
    params.policy = a.policy.unwrap_or(params.policy);
    params.sigma0 = a.sigma0.unwrap_or(params.sigma0);
    params.disk_constant = a.disk_constant.unwrap_or(params.disk_constant);
    params.iterations = a.iterations.unwrap_or(params.iterations);
    params.d_max = a.d_max.unwrap_or(params.d_max);
    validate_params(&params)?;
    dataset::DepthEncoding::from_path(&a.out)?;
    let img = dataset::load_rgb(&a.image)?;
    create_parent(&a.out)?;
    echo(
        &echo_path_for_file(&a.out),
        &json!({
            "command": "estimate",
            "tool_version": dfd_core::TOOL_VERSION,
            "camera": camera.params(),
            "sidfd": params,
            "image": a.image,
            "out": a.out,
        }),
    )?;
    let est = sidfd::estimate_depth_detailed(&img, &camera, &params)?;
    dataset::save_depth_auto(&est.depth, &a.out)?;
    if let Some(p) = &a.defocus_out {
        create_parent(p)?;
        let (w, h) = est.defocus.dims();
        let data: Vec<f32> = est.defocus.data().iter().map(|v| *v as f32).collect();
        dataset::write_pfm(p, w, h, &data)?;
    }
    let med = dfd_core::numeric::median(est.depth.data().iter().copied()).unwrap_or(f64::NAN);
    println!(
        "{} edge pixels, {} blur samples, median depth {med:.4} m",
        est.edges.count(),
        est.sparse.len()
    );
    Ok(Outcome::Complete)
}

fn validate_params(p: &SidfdParams) -> Result<(), CliError> {
    let bad = |m: &str| Err(CliError::Usage(format!("invalid estimation parameter: {m}")));
    if !(p.sigma0.is_finite() && p.sigma0 > 0.0) {
        return bad("sigma0 must be positive");
    }
    if !(p.disk_constant.is_finite() && p.disk_constant > 0.0) {
        return bad("disk_constant must be positive");
    }
    if !(p.d_max.is_finite() && p.d_max > 0.0) {
        return bad("d_max must be positive");
    }
    if !(0.0 <= p.canny_low && p.canny_low < p.canny_high) {
        return bad("canny thresholds must satisfy 0 <= low < high");
    }
    Ok(())
}

fn is_depth_file(p: &Path) -> bool {
    dataset::DepthEncoding::from_path(p).is_ok() && p.is_file()
}

/// Depth files (`.png`/`.pfm`) in `dir`, sorted by file name.
fn depth_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?.path();
        if is_depth_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted depth maps, matched to ground truth by file stem
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    gt_dir: PathBuf,
    /// Ground-truth depth bins for per-depth RMS, `lo:hi:n`
    #[arg(long, value_parser = parse_bins, default_value = "0:10:20")]
    bins: (f64, f64, usize),
    /// JSON report; a one-row CSV is written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ImageMetrics {
    name: String,
    metrics: MetricsReport,
}

#[derive(Debug, Serialize)]
struct PairFailure {
    name: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    conventions: eval::MetricConventions,
    images: usize,
    metrics: MetricsReport,
    per_image: Vec<ImageMetrics>,
    per_depth_rms: eval::DepthBinStats,
    depth_histogram: eval::DepthBinStats,
    missing_predictions: Vec<String>,
    failed: Vec<PairFailure>,
}

pub fn evaluate(a: EvaluateArgs) -> Result<Outcome, CliError> {
    let gt_files = depth_files(&a.gt_dir)?;
    let pred_files = depth_files(&a.pred_dir)?;
    if gt_files.is_empty() {
        return Err(CliError::Usage(format!("no depth files in {}", a.gt_dir.display())));
    }
    let edges = eval::uniform_edges(a.bins.0, a.bins.1, a.bins.2)?;
    create_parent(&a.out)?;
    echo(
        &echo_path_for_file(&a.out),
        &json!({
            "command": "evaluate",
            "tool_version": dfd_core::TOOL_VERSION,
            "pred_dir": a.pred_dir,
            "gt_dir": a.gt_dir,
            "bins": [a.bins.0, a.bins.1, a.bins.2],
            "conventions": eval::CONVENTIONS,
            "out": a.out,
        }),
    )?;

    let mut pairs: Vec<(String, DepthMap, DepthMap)> = Vec::new();
    let mut missing = Vec::new();
    let mut failed = Vec::new();
    for g in &gt_files {
        let name = stem(g);
        let Some(p) = pred_files.iter().find(|p| stem(p) == name) else {
            missing.push(name);
            continue;
        };
        let loaded = dataset::load_depth_auto(p).and_then(|pd| Ok((pd, dataset::load_depth_auto(g)?)));
        match loaded {
            Ok((pd, gd)) if pd.dims() == gd.dims() => pairs.push((name, pd, gd)),
            Ok((pd, gd)) => failed.push(PairFailure {
                name,
                error: format!(
                    "prediction is {}x{} but ground truth is {}x{}",
                    pd.width(),
                    pd.height(),
                    gd.width(),
                    gd.height()
                ),
            }),
            Err(e) => failed.push(PairFailure { name, error: e.to_string() }),
        }
    }
    let mut per_image = Vec::new();
    let mut scored = Vec::new();
    for (name, pd, gd) in &pairs {
        match eval::metrics(pd, gd, None) {
            Ok(m) => {
                per_image.push(ImageMetrics { name: name.clone(), metrics: m });
                scored.push((pd, gd));
            }
            Err(e) => failed.push(PairFailure { name: name.clone(), error: e.to_string() }),
        }
    }
    if scored.is_empty() {
        for f in &failed {
            eprintln!("failed: {}: {}", f.name, f.error);
        }
        return Err(CliError::Data(format!(
            "no evaluable prediction/ground-truth pairs ({} missing predictions)",
            missing.len()
        )));
    }
    let metrics = eval::metrics_over(scored.iter().map(|(p, g)| (*p, *g, None)))?;
    let per_depth_rms = eval::per_depth_rms_over(scored.iter().map(|(p, g)| (*p, *g, None)), &edges)?;
    let depth_histogram = eval::depth_histogram_over(scored.iter().map(|(_, g)| (*g, None)), &edges)?;
    let partial = !missing.is_empty() || !failed.is_empty();
    let report = EvaluationReport {
        conventions: eval::CONVENTIONS,
        images: scored.len(),
        metrics,
        per_image,
        per_depth_rms,
        depth_histogram,
        missing_predictions: missing,
        failed,
    };
    write_json(&a.out, &report)?;
    let csv = a.out.with_extension("csv");
    fs::write(&csv, metrics.to_csv()).map_err(|e| CliError::Usage(format!("{}: {e}", csv.display())))?;
    println!("{}", MetricsReport::CSV_HEADER);
    println!("{}", metrics.csv_row());
    for m in &report.missing_predictions {
        eprintln!("missing prediction: {m}");
    }
    for f in &report.failed {
        eprintln!("failed: {}: {}", f.name, f.error);
    }
    Ok(if partial { Outcome::Partial } else { Outcome::Complete })
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    /// Directory of equally sized depth samples (`.png`/`.pfm`)
    #[arg(long)]
    samples_dir: PathBuf,
    /// Ground truth for the mean absolute error map
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct UncertaintySummary {
    samples: usize,
    files: Vec<String>,
    mean_variance: f64,
    max_variance: f64,
    mean_abs_error: Option<f64>,
}

fn save_pfm(path: &Path, map: &DepthMap) -> Result<(), CliError> {
    let data: Vec<f32> = map.data().iter().map(|v| *v as f32).collect();
    Ok(dataset::write_pfm(path, map.width(), map.height(), &data)?)
}

pub fn uncertainty(a: UncertaintyArgs) -> Result<Outcome, CliError> {
    let files = depth_files(&a.samples_dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no depth samples in {}", a.samples_dir.display())));
    }
    let gt = a.gt.as_deref().map(dataset::load_depth_auto).transpose()?;
    create_dir(&a.out_dir)?;
    echo(
        &a.out_dir.join(RUN_ECHO),
        &json!({
            "command": "uncertainty",
            "tool_version": dfd_core::TOOL_VERSION,
            "samples_dir": a.samples_dir,
            "gt": a.gt,
            "variance": "population",
            "out_dir": a.out_dir,
        }),
    )?;
    let stack = files
        .iter()
        .map(|f| dataset::load_depth_auto(f))
        .collect::<Result<Vec<_>, _>>()?;
    let agg = uncertainty::aggregate(&stack)?;
    save_pfm(&a.out_dir.join("mean.pfm"), &agg.mean)?;
    save_pfm(&a.out_dir.join("variance.pfm"), &agg.variance)?;
    let mut mean_abs_error = None;
    if let Some(gt) = &gt {
        let err = uncertainty::mean_error(&agg.mean, gt, None)?;
        let (w, h) = err.dims();
        let err_map = DepthMap::from_vec(w, h, err.into_vec())?;
        save_pfm(&a.out_dir.join("mean_error.pfm"), &err_map)?;
        let valid = gt.valid_mask();
        let n = valid.count();
        if n > 0 {
            let sum = dfd_core::numeric::stable_sum(
                err_map.data().iter().zip(valid.data()).filter(|(_, v)| **v).map(|(e, _)| *e),
            );
            mean_abs_error = Some(sum / n as f64);
        }
    }
    let n = agg.variance.data().len() as f64;
    let summary = UncertaintySummary {
        samples: agg.samples,
        files: files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect(),
        mean_variance: dfd_core::numeric::stable_sum(agg.variance.data().iter().copied()) / n,
        max_variance: agg.variance.data().iter().copied().fold(0.0, f64::max),
        mean_abs_error,
    };
    write_json(&a.out_dir.join("summary.json"), &summary)?;
    println!("aggregated {} samples, mean variance {:.6e}", summary.samples, summary.mean_variance);
    Ok(Outcome::Complete)
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 96)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn generate(a: GenerateArgs) -> Result<Outcome, CliError> {
    create_dir(&a.out_dir)?;
    echo(
        &a.out_dir.join(RUN_ECHO),
        &json!({
            "command": "generate",
            "tool_version": dfd_core::TOOL_VERSION,
            "count": a.count,
            "width": a.width,
            "height": a.height,
            "seed": a.seed,
            "out_dir": a.out_dir,
        }),
    )?;
    let m = procedural::write_dataset(&a.out_dir, a.count, a.width, a.height, a.seed)?;
    println!("wrote {} scenes and manifest.csv", m.entries.len());
    Ok(Outcome::Complete)
}
