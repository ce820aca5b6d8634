//! Root and view estimation for unseen images under a fixed model.

use crate::error::{Error, Result};
use crate::estimation::best_view;
use crate::model::{ConstellationModel, Point, ProposalSet};

pub const DEFAULT_MAX_ITERS: usize = 50;

/// Movement below which the root is considered stationary.
const ROOT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub root: Point,
    pub view: usize,
    /// `(part, squared residual)` for every visible part selected in `view`,
    /// in ascending part order.
    pub residuals: Vec<(usize, f64)>,
}

impl Inference {
    pub fn error(&self) -> f64 {
        self.residuals.iter().map(|&(_, r)| r).sum()
    }
}

/// Alternates view selection and root estimation for a single image until
/// both are stationary or `max_iters` rounds have run. Visibility is taken
/// from the proposals as given.
pub fn infer(proposals: &ProposalSet, model: &ConstellationModel, max_iters: usize) -> Result<Inference> {
    if proposals.num_proposals() != model.num_parts() || proposals.visible.len() != model.num_parts() {
        return Err(Error::Dimension(format!(
            "image '{}' has {} proposals, model has {}",
            proposals.meta.id,
            proposals.num_proposals(),
            model.num_parts()
        )));
    }
    let mut root = Point::CENTER;
    let mut view = 0;
    for _ in 0..max_iters.max(1) {
        let (next_view, next_root, _) = best_view(proposals, model, root);
        let done = next_view == view && next_root.max_abs_diff(root) <= ROOT_TOLERANCE;
        view = next_view;
        root = next_root;
        if done {
            break;
        }
    }
    let residuals = (0..model.num_parts())
        .filter(|&p| model.is_selected(view, p))
        .filter_map(|p| proposals.get(p).map(|mu| (p, (mu - root - model.shift(view, p)).norm_sq())))
        .collect();
    Ok(Inference { root, view, residuals })
}

/// Runs [`infer`] on every image independently.
pub fn infer_all(
    data: &[ProposalSet],
    model: &ConstellationModel,
    max_iters: usize,
) -> Result<Vec<Inference>> {
    data.iter().map(|set| infer(set, model, max_iters)).collect()
}
