//! Domain types and the star-model objective.
//!
//! Locations are normalized to the unit square. A part `p` contributes to
//! image `i` only when it is visible there and selected in the view the
//! image is assigned to; the contribution is the squared distance between
//! the observed location and `root + shift`.

use std::ops::{Add, AddAssign, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D point or offset in normalized image coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const CENTER: Point = Point { x: 0.5, y: 0.5 };
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn in_unit_square(self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    /// Componentwise clamp to `[-1, 1]`.
    pub fn clamp_unit(self) -> Self {
        Point::new(self.x.clamp(-1.0, 1.0), self.y.clamp(-1.0, 1.0))
    }

    pub fn max_abs_diff(self, other: Point) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, o: Point) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Div<f64> for Point {
    type Output = Point;
    fn div(self, k: f64) -> Point {
        Point::new(self.x / k, self.y / k)
    }
}

/// Running sum used for the closed-form mean updates.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct MeanAcc {
    sum: Point,
    count: usize,
}

impl MeanAcc {
    pub(crate) fn push(&mut self, p: Point) {
        self.sum += p;
        self.count += 1;
    }

    pub(crate) fn mean(&self) -> Option<Point> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageMeta {
    pub id: String,
    pub width: u32,
    pub height: u32,
}

impl ImageMeta {
    pub fn new(id: impl Into<String>, width: u32, height: u32) -> Self {
        ImageMeta { id: id.into(), width, height }
    }
}

/// Part proposal locations and visibilities of one image.
///
/// Locations of hidden proposals carry no meaning and are never inspected.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalSet {
    pub meta: ImageMeta,
    pub locations: Vec<Point>,
    pub visible: Vec<bool>,
}

impl ProposalSet {
    pub fn new(meta: ImageMeta, locations: Vec<Point>, visible: Vec<bool>) -> Result<Self> {
        let set = ProposalSet { meta, locations, visible };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.len() != self.visible.len() {
            return Err(Error::Dimension(format!(
                "image '{}': {} locations but {} visibility flags",
                self.meta.id,
                self.locations.len(),
                self.visible.len()
            )));
        }
        if self.meta.width == 0 || self.meta.height == 0 {
            return Err(Error::Validation(format!(
                "image '{}': width and height must be positive",
                self.meta.id
            )));
        }
        for (p, (loc, &vis)) in self.locations.iter().zip(&self.visible).enumerate() {
            if vis && !loc.in_unit_square() {
                return Err(Error::Validation(format!(
                    "image '{}': visible proposal {p} at ({}, {}) lies outside [0,1]^2",
                    self.meta.id, loc.x, loc.y
                )));
            }
        }
        Ok(())
    }

    pub fn num_proposals(&self) -> usize {
        self.locations.len()
    }

    /// Location of proposal `p` if it is visible.
    #[inline]
    pub fn get(&self, p: usize) -> Option<Point> {
        self.visible[p].then(|| self.locations[p])
    }
}

/// Common proposal count of a dataset.
pub fn proposal_count(data: &[ProposalSet]) -> Result<usize> {
    let Some(first) = data.first() else {
        return Err(Error::Config("dataset is empty".into()));
    };
    let p = first.num_proposals();
    for set in data {
        if set.num_proposals() != p {
            return Err(Error::Dimension(format!(
                "image '{}' has {} proposals, expected {p}",
                set.meta.id,
                set.num_proposals()
            )));
        }
    }
    Ok(p)
}

/// Multi-view star model: per view a selection of `M` parts and a shift
/// vector for every part.
///
/// Shifts of unselected parts are kept but never enter the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstellationModel {
    num_parts: usize,
    num_views: usize,
    parts_per_view: usize,
    selected: Vec<bool>,
    shifts: Vec<Point>,
}

impl ConstellationModel {
    /// Builds a model from the selected part indices of each view. Shifts
    /// start at zero.
    pub fn from_selection(num_parts: usize, views: &[Vec<usize>]) -> Result<Self> {
        let num_views = views.len();
        if num_views == 0 {
            return Err(Error::Config("a model needs at least one view".into()));
        }
        let parts_per_view = views[0].len();
        let mut selected = vec![false; num_views * num_parts];
        for (v, parts) in views.iter().enumerate() {
            if parts.len() != parts_per_view {
                return Err(Error::Dimension(format!(
                    "view {v} selects {} parts, view 0 selects {parts_per_view}",
                    parts.len()
                )));
            }
            for &p in parts {
                if p >= num_parts {
                    return Err(Error::Dimension(format!(
                        "view {v} selects part {p}, only {num_parts} exist"
                    )));
                }
                if std::mem::replace(&mut selected[v * num_parts + p], true) {
                    return Err(Error::Validation(format!("view {v} selects part {p} twice")));
                }
            }
        }
        Ok(ConstellationModel {
            num_parts,
            num_views,
            parts_per_view,
            selected,
            shifts: vec![Point::ZERO; num_views * num_parts],
        })
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    pub fn num_views(&self) -> usize {
        self.num_views
    }

    pub fn parts_per_view(&self) -> usize {
        self.parts_per_view
    }

    #[inline]
    pub fn is_selected(&self, view: usize, part: usize) -> bool {
        self.selected[view * self.num_parts + part]
    }

    #[inline]
    pub fn shift(&self, view: usize, part: usize) -> Point {
        self.shifts[view * self.num_parts + part]
    }

    pub fn set_shift(&mut self, view: usize, part: usize, shift: Point) {
        self.shifts[view * self.num_parts + part] = shift;
    }

    /// Selection flags of one view, indexed by part.
    pub fn selection(&self, view: usize) -> &[bool] {
        &self.selected[view * self.num_parts..(view + 1) * self.num_parts]
    }

    /// Replaces the selection of one view. The flags must mark exactly
    /// `parts_per_view` parts.
    pub fn set_selection(&mut self, view: usize, flags: &[bool]) -> Result<()> {
        if flags.len() != self.num_parts {
            return Err(Error::Dimension(format!(
                "selection has {} flags, model has {} parts",
                flags.len(),
                self.num_parts
            )));
        }
        let count = flags.iter().filter(|&&b| b).count();
        if count != self.parts_per_view {
            return Err(Error::Validation(format!(
                "view {view} would select {count} parts instead of {}",
                self.parts_per_view
            )));
        }
        self.selected[view * self.num_parts..(view + 1) * self.num_parts].copy_from_slice(flags);
        Ok(())
    }

    /// Ascending indices of the parts selected in `view`.
    pub fn selected_parts(&self, view: usize) -> Vec<usize> {
        self.selection(view)
            .iter()
            .enumerate()
            .filter_map(|(p, &b)| b.then_some(p))
            .collect()
    }

    /// Checks the per-view selection count and the shift range.
    pub fn validate(&self) -> Result<()> {
        for v in 0..self.num_views {
            let count = self.selection(v).iter().filter(|&&b| b).count();
            if count != self.parts_per_view {
                return Err(Error::Validation(format!(
                    "view {v} selects {count} parts instead of {}",
                    self.parts_per_view
                )));
            }
            for p in self.selected_parts(v) {
                let d = self.shift(v, p);
                if !(d.x.abs() <= 1.0 && d.y.abs() <= 1.0) {
                    return Err(Error::Validation(format!(
                        "view {v} part {p}: shift ({}, {}) outside [-1,1]^2",
                        d.x, d.y
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-image latent variables: root point and active view.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub roots: Vec<Point>,
    pub views: Vec<usize>,
}

impl LatentState {
    pub fn new(roots: Vec<Point>, views: Vec<usize>) -> Self {
        assert_eq!(roots.len(), views.len(), "one root and one view per image");
        LatentState { roots, views }
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Whether part `p` is selected in the view of image `i` and visible there.
#[inline]
pub fn is_active(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
    i: usize,
    p: usize,
) -> bool {
    data[i].visible[p] && model.is_selected(latent.views[i], p)
}

pub(crate) fn check_dims(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<()> {
    if data.len() != latent.len() {
        return Err(Error::Dimension(format!(
            "{} images but latent state for {}",
            data.len(),
            latent.len()
        )));
    }
    if latent.roots.len() != latent.views.len() {
        return Err(Error::Dimension("latent roots and views differ in length".into()));
    }
    for (set, &v) in data.iter().zip(&latent.views) {
        if set.num_proposals() != model.num_parts() || set.visible.len() != model.num_parts() {
            return Err(Error::Dimension(format!(
                "image '{}' has {} proposals, model has {}",
                set.meta.id,
                set.num_proposals(),
                model.num_parts()
            )));
        }
        if v >= model.num_views() {
            return Err(Error::Dimension(format!(
                "image '{}' assigned to view {v}, model has {}",
                set.meta.id,
                model.num_views()
            )));
        }
    }
    Ok(())
}

/// Sum of squared residuals of image `i` over its active parts.
pub(crate) fn image_error(
    set: &ProposalSet,
    model: &ConstellationModel,
    view: usize,
    root: Point,
) -> f64 {
    let mut err = 0.0;
    for p in 0..model.num_parts() {
        if model.is_selected(view, p) {
            if let Some(mu) = set.get(p) {
                err += (mu - root - model.shift(view, p)).norm_sq();
            }
        }
    }
    err
}

pub(crate) fn objective_unchecked(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> f64 {
    data.iter()
        .enumerate()
        .map(|(i, set)| image_error(set, model, latent.views[i], latent.roots[i]))
        .sum()
}

/// The fitting objective: summed squared distance between every visible
/// part selected in an image's view and its predicted location
/// `root + shift`.
pub fn objective(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<f64> {
    check_dims(data, model, latent)?;
    Ok(objective_unchecked(data, model, latent))
}

/// Squared residual of part `p` in image `i` under the image's view.
pub fn residual(
    data: &[ProposalSet],
    i: usize,
    p: usize,
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<f64> {
    if i >= data.len() || i >= latent.len() {
        return Err(Error::Dimension(format!("image index {i} out of range")));
    }
    if p >= model.num_parts() || p >= data[i].num_proposals() {
        return Err(Error::Dimension(format!("part index {p} out of range")));
    }
    let view = latent.views[i];
    if view >= model.num_views() {
        return Err(Error::Dimension(format!("image {i} assigned to missing view {view}")));
    }
    let mu = data[i].get(p).ok_or(Error::HiddenPart { image: i, part: p })?;
    Ok((mu - latent.roots[i] - model.shift(view, p)).norm_sq())
}
