//! Unsupervised discovery of part constellations from neural activation
//! keypoints.
//!
//! Every channel of an intermediate CNN layer is treated as a part
//! proposal with one location per image. A multi-view star model selects
//! `M` parts per view together with their offsets from a latent root point
//! and is fitted by alternating coordinate minimization of the summed
//! squared part residuals.
//!
//! * [`model`] holds the domain types and the objective.
//! * [`estimation`] fits a model with random restarts.
//! * [`inference`] estimates root and view for unseen images.
//! * [`selection`] aggregates part usage, builds patch boxes and filters
//!   object proposals for augmentation.
//! * [`synth`] generates ground-truth data and solves tiny instances
//!   exhaustively.
//! * [`io`] reads and writes the JSON file formats.
//! * [`cli`] implements the `nac` command-line tool.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod model;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use estimation::{fit, FitConfig, FitReport};
pub use inference::{infer, Inference};
pub use model::{ConstellationModel, ImageMeta, LatentState, Point, ProposalSet};
