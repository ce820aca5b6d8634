//! Post-fit utilities: part usage counts, the final part set, square patch
//! boxes around parts and the object proposal filter used for augmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dims, ConstellationModel, ImageMeta, LatentState, Point, ProposalSet};

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Box {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Box {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Box { x0, y0, x1, y1 }
    }

    pub fn is_well_formed(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn within(&self, meta: &ImageMeta) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= f64::from(meta.width) && self.y1 <= f64::from(meta.height)
    }

    /// Boundary-inclusive containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

impl From<[f64; 4]> for Box {
    fn from([x0, y0, x1, y1]: [f64; 4]) -> Self {
        Box { x0, y0, x1, y1 }
    }
}

impl From<Box> for [f64; 4] {
    fn from(b: Box) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    pub image_id: String,
    pub boxes: Vec<Box>,
}

/// Number of images in which each part is selected in the image's view and
/// visible.
pub fn count_part_usage(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<Vec<usize>> {
    check_dims(data, model, latent)?;
    let mut counts = vec![0; model.num_parts()];
    for (set, &v) in data.iter().zip(&latent.views) {
        for (p, c) in counts.iter_mut().enumerate() {
            if set.visible[p] && model.is_selected(v, p) {
                *c += 1;
            }
        }
    }
    Ok(counts)
}

/// Indices of the `k` largest counts in descending order, lower index first
/// among equal counts. Returns all indices when `k` exceeds the length.
pub fn top_k_parts(counts: &[usize], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Square patch of side `round(sqrt(lambda * W * H))` centered on a
/// normalized location, shifted to lie inside the image. The side is capped
/// at `min(W, H)`.
pub fn patch_box(center: Point, meta: &ImageMeta, lambda: f64) -> Result<Box> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Config(format!("patch scale must be positive, got {lambda}")));
    }
    let (w, h) = (f64::from(meta.width), f64::from(meta.height));
    let side = (lambda * w * h).sqrt().round().min(w.min(h));
    let place = |c: f64, extent: f64| (c * extent - side / 2.0).clamp(0.0, extent - side);
    let x0 = place(center.x, w);
    let y0 = place(center.y, h);
    Ok(Box::new(x0, y0, x0 + side, y0 + side))
}

/// The `n` active parts of image `i` with the smallest residual, ties by
/// part index.
pub fn best_fitting_parts(
    data: &[ProposalSet],
    i: usize,
    model: &ConstellationModel,
    latent: &LatentState,
    n: usize,
) -> Result<Vec<usize>> {
    check_dims(data, model, latent)?;
    let set = data
        .get(i)
        .ok_or_else(|| Error::Dimension(format!("image index {i} out of range")))?;
    let (view, root) = (latent.views[i], latent.roots[i]);
    let mut scored: Vec<(usize, f64)> = (0..model.num_parts())
        .filter(|&p| model.is_selected(view, p))
        .filter_map(|p| set.get(p).map(|mu| (p, (mu - root - model.shift(view, p)).norm_sq())))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(n).map(|(p, _)| p).collect())
}

/// Normalized location to pixel coordinates.
pub fn to_pixels(p: Point, meta: &ImageMeta) -> Point {
    Point::new(p.x * f64::from(meta.width), p.y * f64::from(meta.height))
}

/// Keeps the boxes that contain at least `min_inside` of the given part
/// locations (pixel coordinates of image `image_id`).
pub fn filter_boxes(boxes: &BoxSet, image_id: &str, part_points: &[Point], min_inside: usize) -> Result<BoxSet> {
    if boxes.image_id != image_id {
        return Err(Error::Dimension(format!(
            "boxes belong to image '{}', parts to image '{image_id}'",
            boxes.image_id
        )));
    }
    let kept = boxes
        .boxes
        .iter()
        .filter(|b| part_points.iter().filter(|&&p| b.contains(p)).count() >= min_inside)
        .copied()
        .collect();
    Ok(BoxSet { image_id: boxes.image_id.clone(), boxes: kept })
}
