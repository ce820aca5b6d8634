//! JSON file formats.
//!
//! | format string      | contents                                        |
//! |--------------------|-------------------------------------------------|
//! | `nac-keypoints/1`  | normalized proposal locations and visibilities  |
//! | `nac-model/1`      | selected parts and their shifts, per view       |
//! | `nac-boxes/1`      | object proposal boxes in pixel coordinates      |
//! | `nac-report/1`     | fit result: objective, per-image view and root  |
//! | `nac-truth/1`      | generating model and latents of synthetic data  |
//!
//! Writers emit pretty-printed JSON with a fixed field order and shortest
//! round-trip float formatting, so `write(parse(text)) == text` for any
//! file this module wrote. Parsers check every format invariant and name
//! the offending line and image or view.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitReport;
use crate::model::{ConstellationModel, ImageMeta, LatentState, Point, ProposalSet};
use crate::selection::{Box, BoxSet};

pub const KEYPOINTS_FORMAT: &str = "nac-keypoints/1";
pub const MODEL_FORMAT: &str = "nac-model/1";
pub const BOXES_FORMAT: &str = "nac-boxes/1";
pub const REPORT_FORMAT: &str = "nac-report/1";
pub const TRUTH_FORMAT: &str = "nac-truth/1";

/// 1-based line of the `nth` occurrence of `needle`.
fn line_of(text: &str, needle: &str, nth: usize) -> Option<usize> {
    let (pos, _) = text.match_indices(needle).nth(nth)?;
    Some(text[..pos].bytes().filter(|&b| b == b'\n').count() + 1)
}

fn image_line(text: &str, id: &str) -> String {
    let quoted = serde_json::to_string(id).unwrap_or_default();
    match line_of(text, &quoted, 0) {
        Some(line) => format!("line {line}: "),
        None => String::new(),
    }
}

fn invalid(text: &str, id: &str, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("{}image '{id}': {msg}", image_line(text, id)))
}

fn check_format(text: &str, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        let line = line_of(text, "\"format\"", 0).unwrap_or(1);
        return Err(Error::Validation(format!(
            "line {line}: unsupported format '{found}', expected '{expected}'"
        )));
    }
    Ok(())
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKeypoints {
    format: String,
    num_proposals: usize,
    images: Vec<RawImage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    id: String,
    width: u32,
    height: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<Vec<Point>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    visible: Option<Vec<bool>>,
}

/// Part proposals of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointFile {
    pub num_proposals: usize,
    pub images: Vec<ProposalSet>,
}

impl KeypointFile {
    pub fn new(num_proposals: usize, images: Vec<ProposalSet>) -> Self {
        KeypointFile { num_proposals, images }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawKeypoints = serde_json::from_str(text)?;
        check_format(text, &raw.format, KEYPOINTS_FORMAT)?;
        let p = raw.num_proposals;
        let mut seen = HashSet::new();
        let mut images = Vec::with_capacity(raw.images.len());
        for img in raw.images {
            let id = img.id;
            if !seen.insert(id.clone()) {
                return Err(invalid(text, &id, "duplicate image id"));
            }
            if img.width == 0 || img.height == 0 {
                return Err(invalid(text, &id, "width and height must be positive"));
            }
            let points = img.points.ok_or_else(|| invalid(text, &id, "missing \"points\" array"))?;
            let visible = img.visible.ok_or_else(|| invalid(text, &id, "missing \"visible\" array"))?;
            if points.len() != p {
                return Err(invalid(text, &id, format!("{} points, expected {p}", points.len())));
            }
            if visible.len() != p {
                return Err(invalid(text, &id, format!("{} visibility flags, expected {p}", visible.len())));
            }
            for (k, (pt, &vis)) in points.iter().zip(&visible).enumerate() {
                if vis && !pt.in_unit_square() {
                    return Err(invalid(
                        text,
                        &id,
                        format!("visible point {k} at [{}, {}] lies outside [0,1]^2", pt.x, pt.y),
                    ));
                }
            }
            images.push(ProposalSet {
                meta: ImageMeta::new(id, img.width, img.height),
                locations: points,
                visible,
            });
        }
        Ok(KeypointFile { num_proposals: p, images })
    }

    pub fn to_json(&self) -> String {
        to_pretty(&RawKeypoints {
            format: KEYPOINTS_FORMAT.into(),
            num_proposals: self.num_proposals,
            images: self
                .images
                .iter()
                .map(|set| RawImage {
                    id: set.meta.id.clone(),
                    width: set.meta.width,
                    height: set.meta.height,
                    points: Some(set.locations.clone()),
                    visible: Some(set.visible.clone()),
                })
                .collect(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path.as_ref())?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    format: String,
    #[serde(rename = "P")]
    num_parts: usize,
    #[serde(rename = "V")]
    num_views: usize,
    #[serde(rename = "M")]
    parts_per_view: usize,
    views: Vec<RawView>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawView {
    parts: Vec<usize>,
    shifts: Vec<Point>,
}

impl RawModel {
    fn from_model(model: &ConstellationModel) -> Self {
        RawModel {
            format: MODEL_FORMAT.into(),
            num_parts: model.num_parts(),
            num_views: model.num_views(),
            parts_per_view: model.parts_per_view(),
            views: (0..model.num_views())
                .map(|v| {
                    let parts = model.selected_parts(v);
                    let shifts = parts.iter().map(|&p| model.shift(v, p)).collect();
                    RawView { parts, shifts }
                })
                .collect(),
        }
    }

    fn into_model(self, text: &str) -> Result<ConstellationModel> {
        check_format(text, &self.format, MODEL_FORMAT)?;
        let at = |v: usize| match line_of(text, "\"parts\"", v) {
            Some(line) => format!("line {line}: view {v}"),
            None => format!("view {v}"),
        };
        if self.num_views == 0 {
            return Err(Error::Validation("model must have at least one view".into()));
        }
        if self.views.len() != self.num_views {
            return Err(Error::Validation(format!(
                "model declares V = {} but lists {} views",
                self.num_views,
                self.views.len()
            )));
        }
        if self.parts_per_view == 0 || self.parts_per_view > self.num_parts {
            return Err(Error::Validation(format!(
                "M = {} must lie in 1..={}",
                self.parts_per_view, self.num_parts
            )));
        }
        for (v, view) in self.views.iter().enumerate() {
            if view.parts.len() != self.parts_per_view {
                return Err(Error::Validation(format!(
                    "{}: {} parts, expected M = {}",
                    at(v),
                    view.parts.len(),
                    self.parts_per_view
                )));
            }
            if view.parts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!("{}: part indices must be strictly ascending", at(v))));
            }
            if let Some(&p) = view.parts.iter().find(|&&p| p >= self.num_parts) {
                return Err(Error::Validation(format!("{}: part {p} out of range (P = {})", at(v), self.num_parts)));
            }
            if view.shifts.len() != view.parts.len() {
                return Err(Error::Validation(format!(
                    "{}: {} shifts for {} parts",
                    at(v),
                    view.shifts.len(),
                    view.parts.len()
                )));
            }
            if let Some(d) = view.shifts.iter().find(|d| !(d.x.abs() <= 1.0 && d.y.abs() <= 1.0)) {
                return Err(Error::Validation(format!("{}: shift [{}, {}] outside [-1,1]^2", at(v), d.x, d.y)));
            }
        }
        let selection: Vec<Vec<usize>> = self.views.iter().map(|v| v.parts.clone()).collect();
        let mut model = ConstellationModel::from_selection(self.num_parts, &selection)?;
        for (v, view) in self.views.iter().enumerate() {
            for (&p, &d) in view.parts.iter().zip(&view.shifts) {
                model.set_shift(v, p, d);
            }
        }
        Ok(model)
    }
}

/// Reads a `nac-model/1` document. Shifts of unselected parts are not
/// stored and come back as zero.
pub fn parse_model(text: &str) -> Result<ConstellationModel> {
    let raw: RawModel = serde_json::from_str(text)?;
    raw.into_model(text)
}

pub fn model_to_json(model: &ConstellationModel) -> String {
    to_pretty(&RawModel::from_model(model))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ConstellationModel> {
    parse_model(&read_text(path.as_ref())?)
}

pub fn write_model(model: &ConstellationModel, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &model_to_json(model))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoxes {
    format: String,
    images: Vec<RawBoxImage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoxImage {
    id: String,
    boxes: Vec<Box>,
}

pub fn parse_boxes(text: &str) -> Result<Vec<BoxSet>> {
    let raw: RawBoxes = serde_json::from_str(text)?;
    check_format(text, &raw.format, BOXES_FORMAT)?;
    let mut seen = HashSet::new();
    raw.images
        .into_iter()
        .map(|img| {
            if !seen.insert(img.id.clone()) {
                return Err(invalid(text, &img.id, "duplicate image id"));
            }
            if let Some((k, b)) = img.boxes.iter().enumerate().find(|(_, b)| !b.is_well_formed()) {
                return Err(invalid(
                    text,
                    &img.id,
                    format!("box {k} [{}, {}, {}, {}] needs x0 < x1 and y0 < y1", b.x0, b.y0, b.x1, b.y1),
                ));
            }
            Ok(BoxSet { image_id: img.id, boxes: img.boxes })
        })
        .collect()
}

pub fn boxes_to_json(sets: &[BoxSet]) -> String {
    to_pretty(&RawBoxes {
        format: BOXES_FORMAT.into(),
        images: sets
            .iter()
            .map(|s| RawBoxImage { id: s.image_id.clone(), boxes: s.boxes.clone() })
            .collect(),
    })
}

pub fn read_boxes(path: impl AsRef<Path>) -> Result<Vec<BoxSet>> {
    parse_boxes(&read_text(path.as_ref())?)
}

pub fn write_boxes(sets: &[BoxSet], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &boxes_to_json(sets))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageLatent {
    pub id: String,
    pub view: usize,
    pub root: Point,
}

/// Summary of a fit as written by `nac fit --report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub format: String,
    pub objective: f64,
    pub best_restart: usize,
    pub iterations_per_restart: Vec<usize>,
    pub restart_objectives: Vec<f64>,
    pub images: Vec<ImageLatent>,
}

fn latents(data: &[ProposalSet], latent: &LatentState) -> Vec<ImageLatent> {
    data.iter()
        .zip(latent.roots.iter().zip(&latent.views))
        .map(|(set, (&root, &view))| ImageLatent { id: set.meta.id.clone(), view, root })
        .collect()
}

/// Rebuilds the latent state for `data` from per-image records, matched by
/// image id. Every image needs a record and every view must exist.
fn latent_for(records: &[ImageLatent], data: &[ProposalSet], num_views: usize) -> Result<LatentState> {
    if records.len() != data.len() {
        return Err(Error::Dimension(format!(
            "{} latent records for {} images",
            records.len(),
            data.len()
        )));
    }
    let mut roots = Vec::with_capacity(data.len());
    let mut views = Vec::with_capacity(data.len());
    for set in data {
        let rec = records
            .iter()
            .find(|r| r.id == set.meta.id)
            .ok_or_else(|| Error::Dimension(format!("no latent record for image '{}'", set.meta.id)))?;
        if rec.view >= num_views {
            return Err(Error::Dimension(format!(
                "image '{}' assigned to view {}, model has {num_views}",
                rec.id, rec.view
            )));
        }
        roots.push(rec.root);
        views.push(rec.view);
    }
    Ok(LatentState::new(roots, views))
}

impl ReportFile {
    pub fn from_fit(data: &[ProposalSet], report: &FitReport) -> Self {
        ReportFile {
            format: REPORT_FORMAT.into(),
            objective: report.objective,
            best_restart: report.best_restart,
            iterations_per_restart: report.iterations_per_restart(),
            restart_objectives: report.restarts.iter().map(|r| r.objective).collect(),
            images: latents(data, &report.latent),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let report: ReportFile = serde_json::from_str(text)?;
        check_format(text, &report.format, REPORT_FORMAT)?;
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        to_pretty(self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path.as_ref())?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }

    pub fn latent_for(&self, data: &[ProposalSet], model: &ConstellationModel) -> Result<LatentState> {
        latent_for(&self.images, data, model.num_views())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    format: String,
    model: RawModel,
    images: Vec<ImageLatent>,
}

/// Generating model and latents of a synthetic dataset.
pub fn truth_to_json(data: &[ProposalSet], model: &ConstellationModel, latent: &LatentState) -> String {
    to_pretty(&RawTruth {
        format: TRUTH_FORMAT.into(),
        model: RawModel::from_model(model),
        images: latents(data, latent),
    })
}

pub fn parse_truth(text: &str, data: &[ProposalSet]) -> Result<(ConstellationModel, LatentState)> {
    let raw: RawTruth = serde_json::from_str(text)?;
    check_format(text, &raw.format, TRUTH_FORMAT)?;
    let model = raw.model.into_model(text)?;
    let latent = latent_for(&raw.images, data, model.num_views())?;
    Ok((model, latent))
}
