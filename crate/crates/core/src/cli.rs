//! Command-line surface of the `nac` tool.
//!
//! Exit codes: 0 success, 1 validation or structural error, 2 configuration
//! error, 3 oracle size limit exceeded.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{fit, FitConfig};
use crate::inference::{infer_all, DEFAULT_MAX_ITERS};
use crate::io::{self, KeypointFile, ReportFile};
use crate::model::Point;
use crate::selection::{best_fitting_parts, count_part_usage, filter_boxes, to_pixels, top_k_parts};
use crate::synth::{generate, oracle_fit, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "nac", version, about = "Part constellations from neural activation keypoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a constellation model to a keypoint file.
    Fit(FitArgs),
    /// Estimate root and view of every image under a fitted model.
    Infer(InferArgs),
    /// Count part usage and pick the most used parts.
    SelectParts(SelectArgs),
    /// Keep object proposals that contain enough best-fitting parts.
    FilterBoxes(FilterArgs),
    /// Generate a synthetic keypoint file with known ground truth.
    Synth(SynthArgs),
    /// Solve a tiny instance exhaustively.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub views: usize,
    #[arg(long, default_value_t = 10)]
    pub parts_per_view: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub boxes: PathBuf,
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub min_inside: usize,
    #[arg(long, default_value_t = 5)]
    pub best_parts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub images: usize,
    #[arg(long, default_value_t = 30)]
    pub proposals: usize,
    #[arg(long, default_value_t = 5)]
    pub views: usize,
    #[arg(long, default_value_t = 10)]
    pub parts_per_view: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.9)]
    pub visibility: f64,
    /// Use one part subset for all views.
    #[arg(long)]
    pub shared_parts: bool,
    #[arg(long, default_value_t = 500)]
    pub width: u32,
    #[arg(long, default_value_t = 400)]
    pub height: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub views: usize,
    #[arg(long)]
    pub parts_per_view: usize,
}

#[derive(Serialize)]
struct InferenceRecord {
    id: String,
    view: usize,
    root: Point,
    residuals: Vec<PartResidual>,
}

#[derive(Serialize)]
struct PartResidual {
    part: usize,
    residual: f64,
}

#[derive(Serialize)]
struct InferenceFile {
    format: &'static str,
    images: Vec<InferenceRecord>,
}

#[derive(Serialize)]
struct PartsFile {
    format: &'static str,
    counts: Vec<usize>,
    top_k: Vec<usize>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Runs one command and returns the text it prints on success.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Infer(a) => run_infer(a),
        Command::SelectParts(a) => run_select(a),
        Command::FilterBoxes(a) => run_filter(a),
        Command::Synth(a) => run_synth(a),
        Command::Oracle(a) => run_oracle(a),
    }
}

fn run_fit(a: FitArgs) -> Result<String> {
    let file = KeypointFile::read(&a.keypoints)?;
    let cfg = FitConfig {
        views: a.views,
        parts_per_view: a.parts_per_view,
        restarts: a.restarts,
        max_iters: a.max_iters,
        seed: a.seed,
        ..FitConfig::default()
    };
    cfg.validate(file.num_proposals)?;
    let report = fit(&file.images, &cfg)?;
    io::write_model(&report.model, &a.out)?;
    ReportFile::from_fit(&file.images, &report).write(&a.report)?;
    Ok(format!(
        "objective {} (restart {} of {}, iterations {:?})\n",
        report.objective,
        report.best_restart,
        cfg.restarts,
        report.iterations_per_restart()
    ))
}

fn run_infer(a: InferArgs) -> Result<String> {
    let file = KeypointFile::read(&a.keypoints)?;
    let model = io::read_model(&a.model)?;
    if file.num_proposals != model.num_parts() {
        return Err(Error::Dimension(format!(
            "keypoints have {} proposals, model has {}",
            file.num_proposals,
            model.num_parts()
        )));
    }
    let results = infer_all(&file.images, &model, a.max_iters)?;
    let records = file
        .images
        .iter()
        .zip(results)
        .map(|(set, r)| InferenceRecord {
            id: set.meta.id.clone(),
            view: r.view,
            root: r.root,
            residuals: r
                .residuals
                .into_iter()
                .map(|(part, residual)| PartResidual { part, residual })
                .collect(),
        })
        .collect::<Vec<_>>();
    let n = records.len();
    write(&a.out, &to_json(&InferenceFile { format: "nac-inference/1", images: records }))?;
    Ok(format!("inferred {n} images\n"))
}

fn load_fitted(
    keypoints: &PathBuf,
    model: &PathBuf,
    report: &PathBuf,
) -> Result<(KeypointFile, crate::model::ConstellationModel, crate::model::LatentState)> {
    let file = KeypointFile::read(keypoints)?;
    let model = io::read_model(model)?;
    if file.num_proposals != model.num_parts() {
        return Err(Error::Dimension(format!(
            "keypoints have {} proposals, model has {}",
            file.num_proposals,
            model.num_parts()
        )));
    }
    let latent = ReportFile::read(report)?.latent_for(&file.images, &model)?;
    Ok((file, model, latent))
}

fn run_select(a: SelectArgs) -> Result<String> {
    let (file, model, latent) = load_fitted(&a.keypoints, &a.model, &a.report)?;
    let counts = count_part_usage(&file.images, &model, &latent)?;
    let top_k = top_k_parts(&counts, a.k);
    let out = format!("top {} parts: {:?}\n", top_k.len(), top_k);
    write(&a.out, &to_json(&PartsFile { format: "nac-parts/1", counts, top_k }))?;
    Ok(out)
}

fn run_filter(a: FilterArgs) -> Result<String> {
    let (file, model, latent) = load_fitted(&a.keypoints, &a.model, &a.report)?;
    let box_sets = io::read_boxes(&a.boxes)?;
    let unknown: Vec<&str> = box_sets
        .iter()
        .filter(|b| !file.images.iter().any(|s| s.meta.id == b.image_id))
        .map(|b| b.image_id.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(format!("unknown image ids in box file: {}", unknown.join(", "))));
    }
    let mut out = String::new();
    let mut kept_sets = Vec::with_capacity(box_sets.len());
    for boxes in &box_sets {
        let i = file
            .images
            .iter()
            .position(|s| s.meta.id == boxes.image_id)
            .expect("checked above");
        let meta = &file.images[i].meta;
        if let Some(b) = boxes.boxes.iter().find(|b| !b.within(meta)) {
            return Err(Error::Validation(format!(
                "image '{}': box [{}, {}, {}, {}] exceeds the {}x{} image",
                meta.id, b.x0, b.y0, b.x1, b.y1, meta.width, meta.height
            )));
        }
        let parts = best_fitting_parts(&file.images, i, &model, &latent, a.best_parts)?;
        let points: Vec<Point> = parts
            .iter()
            .map(|&p| to_pixels(file.images[i].locations[p], meta))
            .collect();
        let kept = filter_boxes(boxes, &meta.id, &points, a.min_inside)?;
        let _ = writeln!(out, "{}: kept {}/{}", meta.id, kept.boxes.len(), boxes.boxes.len());
        kept_sets.push(kept);
    }
    io::write_boxes(&kept_sets, &a.out)?;
    Ok(out)
}

fn run_synth(a: SynthArgs) -> Result<String> {
    let spec = SynthSpec {
        images: a.images,
        parts: a.proposals,
        views: a.views,
        parts_per_view: a.parts_per_view,
        noise_sigma: a.noise,
        visibility_rate: a.visibility,
        shared_parts: a.shared_parts,
        width: a.width,
        height: a.height,
        seed: a.seed,
    };
    let s = generate(&spec)?;
    KeypointFile::new(spec.parts, s.data.clone()).write(&a.out)?;
    write(&a.truth, &io::truth_to_json(&s.data, &s.truth, &s.truth_latent))?;
    Ok(format!(
        "generated {} images with {} proposals ({} clipped coordinates)\n",
        s.data.len(),
        spec.parts,
        s.clip_events
    ))
}

fn run_oracle(a: OracleArgs) -> Result<String> {
    let file = KeypointFile::read(&a.keypoints)?;
    let sol = oracle_fit(&file.images, a.views, a.parts_per_view)?;
    Ok(format!(
        "best objective {}\nminimizing assignments {}\nenumerated {}\n",
        sol.best_objective,
        sol.argmin.len(),
        sol.enumerated
    ))
}
