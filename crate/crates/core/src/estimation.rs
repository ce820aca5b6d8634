//! Alternating minimization of the star-model objective.
//!
//! Each restart starts from centered roots and random views and part
//! selections, then cycles through closed-form updates of the shifts, the
//! roots, the part selection and the view assignment. Every update is an
//! exact minimization over its block of variables, so the objective never
//! increases.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    check_dims, image_error, objective_unchecked, proposal_count, ConstellationModel,
    LatentState, MeanAcc, Point, ProposalSet,
};

/// Slack allowed for floating-point noise when checking monotone descent.
pub const DESCENT_TOLERANCE: f64 = 1e-12;

/// Objectives below this are compared on an absolute scale when testing
/// convergence, so fits approaching zero error terminate.
pub const OBJECTIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub views: usize,
    pub parts_per_view: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Once the part selection and the view assignment are stable, stop as
    /// soon as an iteration lowers the objective by no more than this
    /// fraction of `max(objective, OBJECTIVE_FLOOR)`.
    pub rel_tolerance: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            views: 5,
            parts_per_view: 10,
            restarts: 5,
            max_iters: 100,
            rel_tolerance: 1e-12,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, num_parts: usize) -> Result<()> {
        if self.views == 0 {
            return Err(Error::Config("at least one view is required".into()));
        }
        if self.parts_per_view == 0 || self.parts_per_view > num_parts {
            return Err(Error::Config(format!(
                "parts per view must lie in 1..={num_parts}, got {}",
                self.parts_per_view
            )));
        }
        if self.restarts == 0 {
            return Err(Error::Config("at least one restart is required".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if self.rel_tolerance.is_nan() || self.rel_tolerance < 0.0 {
            return Err(Error::Config("rel_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which block of variables an update step optimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    Shifts,
    Roots,
    Selection,
    Views,
}

/// Objective before and after a single update inside [`fit_observed`].
#[derive(Clone, Copy, Debug)]
pub struct StepEvent {
    pub restart: usize,
    pub iteration: usize,
    pub step: Step,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartTrace {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Updates that raised the objective by more than [`DESCENT_TOLERANCE`].
    pub descent_violations: usize,
    /// Shift components that had to be clamped to `[-1, 1]`.
    pub clamp_events: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub model: ConstellationModel,
    pub latent: LatentState,
    pub objective: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

impl FitReport {
    pub fn iterations_per_restart(&self) -> Vec<usize> {
        self.restarts.iter().map(|r| r.iterations).collect()
    }
}

pub(crate) fn shifts_in_place(
    data: &[ProposalSet],
    model: &mut ConstellationModel,
    latent: &LatentState,
) -> usize {
    let (nv, np) = (model.num_views(), model.num_parts());
    let mut acc = vec![MeanAcc::default(); nv * np];
    for (i, set) in data.iter().enumerate() {
        let v = latent.views[i];
        for p in 0..np {
            if let Some(mu) = set.get(p) {
                acc[v * np + p].push(mu - latent.roots[i]);
            }
        }
    }
    let mut clamped = 0;
    for v in 0..nv {
        for p in 0..np {
            if let Some(mean) = acc[v * np + p].mean() {
                let d = mean.clamp_unit();
                clamped += usize::from(d.x != mean.x) + usize::from(d.y != mean.y);
                model.set_shift(v, p, d);
            }
        }
    }
    clamped
}

/// Sets every shift `(v, p)` to the mean offset between the location of
/// part `p` and the root over the images of view `v` in which `p` is
/// visible, clamped to `[-1, 1]`. Shifts without such images keep their
/// value.
///
/// For selected parts this is the exact minimizer of the objective. Shifts
/// of unselected parts do not enter the objective but are refreshed the
/// same way, so the part error table compares every candidate part at its
/// best offset.
pub fn update_shifts(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<ConstellationModel> {
    check_dims(data, model, latent)?;
    let mut next = model.clone();
    let clamped = shifts_in_place(data, &mut next, latent);
    if clamped > 0 {
        log::debug!("shift update clamped {clamped} components");
    }
    Ok(next)
}

/// Optimal root of one image for a given view, `None` without active parts.
pub(crate) fn optimal_root(set: &ProposalSet, model: &ConstellationModel, view: usize) -> Option<Point> {
    let mut acc = MeanAcc::default();
    for p in 0..model.num_parts() {
        if model.is_selected(view, p) {
            if let Some(mu) = set.get(p) {
                acc.push(mu - model.shift(view, p));
            }
        }
    }
    acc.mean()
}

pub(crate) fn roots_in_place(data: &[ProposalSet], model: &ConstellationModel, latent: &mut LatentState) {
    for (i, set) in data.iter().enumerate() {
        if let Some(a) = optimal_root(set, model, latent.views[i]) {
            latent.roots[i] = a;
        }
    }
}

/// Sets each root to the mean of `location - shift` over the image's active
/// parts. Images without active parts keep their root.
pub fn update_roots(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<LatentState> {
    check_dims(data, model, latent)?;
    let mut next = latent.clone();
    roots_in_place(data, model, &mut next);
    Ok(next)
}

pub(crate) fn error_table_unchecked(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Vec<Vec<f64>> {
    let np = model.num_parts();
    let mut table = vec![vec![0.0; np]; model.num_views()];
    for (i, set) in data.iter().enumerate() {
        let v = latent.views[i];
        let row = &mut table[v];
        for (p, e) in row.iter_mut().enumerate() {
            if let Some(mu) = set.get(p) {
                *e += (mu - latent.roots[i] - model.shift(v, p)).norm_sq();
            }
        }
    }
    table
}

/// Per view and part, the summed squared residual over the visible
/// occurrences in the images assigned to that view, whether or not the part
/// is currently selected.
pub fn part_error_table(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<Vec<Vec<f64>>> {
    check_dims(data, model, latent)?;
    Ok(error_table_unchecked(data, model, latent))
}

/// Marks the `m` parts with the smallest error in every row. Ties go to the
/// lower part index.
pub fn update_selection(table: &[Vec<f64>], m: usize) -> Result<Vec<Vec<bool>>> {
    table
        .iter()
        .map(|row| {
            if m > row.len() {
                return Err(Error::Config(format!(
                    "cannot select {m} of {} parts",
                    row.len()
                )));
            }
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            let mut flags = vec![false; row.len()];
            for &p in &order[..m] {
                flags[p] = true;
            }
            Ok(flags)
        })
        .collect()
}

pub(crate) fn views_in_place(data: &[ProposalSet], model: &ConstellationModel, latent: &mut LatentState) {
    for (i, set) in data.iter().enumerate() {
        let (view, root, _) = best_view(set, model, latent.roots[i]);
        latent.views[i] = view;
        latent.roots[i] = root;
    }
}

/// Best view for one image with the root re-optimized per candidate view.
/// Returns `(view, root, error)`; `fallback` is the root used for views
/// without active parts.
pub(crate) fn best_view(set: &ProposalSet, model: &ConstellationModel, fallback: Point) -> (usize, Point, f64) {
    let mut best = (0, fallback, f64::INFINITY);
    for v in 0..model.num_views() {
        let root = optimal_root(set, model, v).unwrap_or(fallback);
        let err = image_error(set, model, v, root);
        if err < best.2 {
            best = (v, root, err);
        }
    }
    best
}

/// Assigns every image the view with the smallest error after
/// re-optimizing the root for each candidate view. Ties go to the lower
/// view index.
pub fn update_views(
    data: &[ProposalSet],
    model: &ConstellationModel,
    latent: &LatentState,
) -> Result<LatentState> {
    check_dims(data, model, latent)?;
    let mut next = latent.clone();
    views_in_place(data, model, &mut next);
    Ok(next)
}

fn random_init(
    num_images: usize,
    num_parts: usize,
    cfg: &FitConfig,
    rng: &mut impl Rng,
) -> (ConstellationModel, LatentState) {
    let mut parts: Vec<usize> = (0..num_parts).collect();
    let selection: Vec<Vec<usize>> = (0..cfg.views)
        .map(|_| {
            let (chosen, _) = parts.partial_shuffle(rng, cfg.parts_per_view);
            chosen.to_vec()
        })
        .collect();
    let model = ConstellationModel::from_selection(num_parts, &selection)
        .expect("random selection is valid");
    let views = (0..num_images).map(|_| rng.random_range(0..cfg.views)).collect();
    (model, LatentState::new(vec![Point::CENTER; num_images], views))
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn run_restart<F>(
    data: &[ProposalSet],
    num_parts: usize,
    cfg: &FitConfig,
    restart: usize,
    observer: &F,
) -> (ConstellationModel, LatentState, RestartTrace)
where
    F: Fn(&StepEvent) + Sync,
{
    let mut rng = restart_rng(cfg.seed, restart);
    let (mut model, mut latent) = random_init(data.len(), num_parts, cfg, &mut rng);

    let mut trace = RestartTrace {
        objective: objective_unchecked(data, &model, &latent),
        iterations: 0,
        converged: false,
        descent_violations: 0,
        clamp_events: 0,
    };
    let record = |trace: &mut RestartTrace, iteration: usize, step: Step, after: f64| {
        let before = trace.objective;
        if after > before + DESCENT_TOLERANCE {
            trace.descent_violations += 1;
            log::warn!(
                "restart {restart} iteration {iteration}: {step:?} update raised the objective from {before} to {after}"
            );
        }
        observer(&StepEvent { restart, iteration, step, before, after });
        trace.objective = after;
    };

    for iteration in 1..=cfg.max_iters {
        let start = trace.objective;
        let previous_selection = model.clone();
        let previous_views = latent.views.clone();

        let clamped = shifts_in_place(data, &mut model, &latent);
        if clamped > 0 {
            log::debug!("restart {restart} iteration {iteration}: clamped {clamped} shift components");
            trace.clamp_events += clamped;
        }
        record(&mut trace, iteration, Step::Shifts, objective_unchecked(data, &model, &latent));

        roots_in_place(data, &model, &mut latent);
        record(&mut trace, iteration, Step::Roots, objective_unchecked(data, &model, &latent));

        let table = error_table_unchecked(data, &model, &latent);
        let flags = update_selection(&table, cfg.parts_per_view).expect("validated config");
        for (v, row) in flags.iter().enumerate() {
            model.set_selection(v, row).expect("exactly M parts per view");
        }
        record(&mut trace, iteration, Step::Selection, objective_unchecked(data, &model, &latent));

        views_in_place(data, &model, &mut latent);
        record(&mut trace, iteration, Step::Views, objective_unchecked(data, &model, &latent));

        trace.iterations = iteration;
        let selection_stable = (0..cfg.views)
            .all(|v| model.selection(v) == previous_selection.selection(v));
        let views_stable = latent.views == previous_views;
        if selection_stable && views_stable && start - trace.objective <= cfg.rel_tolerance * start.max(OBJECTIVE_FLOOR) {
            trace.converged = true;
            break;
        }
    }
    (model, latent, trace)
}

/// Fits a constellation model with `cfg.restarts` random restarts and
/// keeps the restart with the smallest objective (lowest index on ties).
///
/// Restarts run in parallel; the result is a pure function of `data` and
/// `cfg`.
pub fn fit(data: &[ProposalSet], cfg: &FitConfig) -> Result<FitReport> {
    fit_observed(data, cfg, &|_: &StepEvent| {})
}

/// Same as [`fit`], reporting the objective around every single update.
pub fn fit_observed<F>(data: &[ProposalSet], cfg: &FitConfig, observer: &F) -> Result<FitReport>
where
    F: Fn(&StepEvent) + Sync,
{
    let num_parts = proposal_count(data)?;
    cfg.validate(num_parts)?;

    let runs: Vec<_> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(data, num_parts, cfg, r, observer))
        .collect();

    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.2.objective < runs[best].2.objective {
            best = r;
        }
    }
    let restarts: Vec<RestartTrace> = runs.iter().map(|r| r.2.clone()).collect();
    let (model, latent, trace) = runs.into_iter().nth(best).expect("at least one restart");
    Ok(FitReport {
        model,
        latent,
        objective: trace.objective,
        best_restart: best,
        restarts,
    })
}
