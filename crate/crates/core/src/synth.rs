//! Ground-truth synthetic data and an exhaustive solver for tiny instances.
//!
//! Selected parts are placed at `root + shift` plus isotropic Gaussian
//! jitter, unselected parts uniformly over the unit square. The exhaustive
//! solver enumerates every part selection and view assignment and solves
//! the remaining least-squares problem in roots and shifts by exact block
//! coordinate minimization.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{roots_in_place, shifts_in_place};
use crate::model::{
    objective_unchecked, proposal_count, ConstellationModel, ImageMeta, LatentState, Point,
    ProposalSet,
};

/// Largest number of (selection, view assignment) pairs the oracle accepts.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// Half-width of the uniform range true shifts are drawn from.
pub const SHIFT_RANGE: f64 = 0.25;
/// True roots are drawn uniformly from `[ROOT_MIN, ROOT_MAX]^2`.
pub const ROOT_MIN: f64 = 0.3;
pub const ROOT_MAX: f64 = 0.7;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub images: usize,
    pub parts: usize,
    pub views: usize,
    pub parts_per_view: usize,
    pub noise_sigma: f64,
    pub visibility_rate: f64,
    /// All views select the same part subset (with different shifts).
    pub shared_parts: bool,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            images: 100,
            parts: 30,
            views: 5,
            parts_per_view: 10,
            noise_sigma: 0.02,
            visibility_rate: 0.9,
            shared_parts: false,
            width: 500,
            height: 400,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.parts == 0 {
            return Err(Error::Config("need at least one view and one part".into()));
        }
        if self.parts_per_view > self.parts {
            return Err(Error::Config(format!(
                "cannot select {} of {} parts",
                self.parts_per_view, self.parts
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility_rate) {
            return Err(Error::Config("visibility rate must lie in [0, 1]".into()));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config("noise sigma must be finite and non-negative".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        Ok(())
    }
}

/// A generated dataset together with the model and latents it came from.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub spec: SynthSpec,
    pub data: Vec<ProposalSet>,
    pub truth: ConstellationModel,
    pub truth_latent: LatentState,
    /// Coordinates of true part placements that had to be clipped to the
    /// unit square.
    pub clip_events: usize,
}

impl Synthetic {
    /// Draws `n` further images from the same ground-truth model, e.g. as a
    /// held-out test set.
    pub fn sample(&self, n: usize, seed: u64) -> (Vec<ProposalSet>, LatentState, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_images(&self.spec, &self.truth, n, "held", &mut rng)
    }
}

/// Samples a ground-truth model and `spec.images` images from it.
pub fn generate(spec: &SynthSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..spec.parts).collect();
    let mut selection = Vec::with_capacity(spec.views);
    for v in 0..spec.views {
        if v == 0 || !spec.shared_parts {
            let (chosen, _) = order.partial_shuffle(&mut rng, spec.parts_per_view);
            selection.push(chosen.to_vec());
        } else {
            selection.push(selection[0].clone());
        }
    }
    let mut truth = ConstellationModel::from_selection(spec.parts, &selection)?;
    for (v, parts) in selection.iter().enumerate() {
        let mut sorted = parts.clone();
        sorted.sort_unstable();
        for p in sorted {
            let d = Point::new(
                rng.random_range(-SHIFT_RANGE..=SHIFT_RANGE),
                rng.random_range(-SHIFT_RANGE..=SHIFT_RANGE),
            );
            truth.set_shift(v, p, d);
        }
    }
    let (data, truth_latent, clip_events) = sample_images(spec, &truth, spec.images, "img", &mut rng);
    Ok(Synthetic { spec: spec.clone(), data, truth, truth_latent, clip_events })
}

fn sample_images(
    spec: &SynthSpec,
    truth: &ConstellationModel,
    n: usize,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> (Vec<ProposalSet>, LatentState, usize) {
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut clips = 0;
    let mut data = Vec::with_capacity(n);
    let mut roots = Vec::with_capacity(n);
    let mut views = Vec::with_capacity(n);
    for i in 0..n {
        let view = rng.random_range(0..truth.num_views());
        let root = Point::new(rng.random_range(ROOT_MIN..=ROOT_MAX), rng.random_range(ROOT_MIN..=ROOT_MAX));
        let mut locations = Vec::with_capacity(truth.num_parts());
        let mut visible = Vec::with_capacity(truth.num_parts());
        for p in 0..truth.num_parts() {
            let loc = if truth.is_selected(view, p) {
                let mut raw = root + truth.shift(view, p);
                if spec.noise_sigma > 0.0 {
                    raw += Point::new(noise.sample(rng), noise.sample(rng));
                }
                let clipped = Point::new(raw.x.clamp(0.0, 1.0), raw.y.clamp(0.0, 1.0));
                clips += usize::from(clipped.x != raw.x) + usize::from(clipped.y != raw.y);
                clipped
            } else {
                Point::new(rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0))
            };
            locations.push(loc);
            visible.push(rng.random_bool(spec.visibility_rate));
        }
        data.push(ProposalSet {
            meta: ImageMeta::new(format!("{prefix}-{i:05}"), spec.width, spec.height),
            locations,
            visible,
        });
        roots.push(root);
        views.push(view);
    }
    (data, LatentState::new(roots, views), clips)
}

/// One feasible discrete configuration: the selected parts of every view
/// (ascending) and the view of every image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub parts: Vec<Vec<usize>>,
    pub views: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub best_objective: f64,
    /// Every assignment whose objective is within `ARGMIN_TOLERANCE` of the
    /// minimum, in lexicographic enumeration order.
    pub argmin: Vec<Assignment>,
    pub enumerated: u128,
}

pub const ARGMIN_TOLERANCE: f64 = 1e-12;
const MOVEMENT_TOLERANCE: f64 = 1e-13;
const MAX_PASSES: usize = 200_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Size of the oracle's search space, `C(P, M)^V * V^N`, or `None` on
/// overflow.
pub fn search_space(num_images: usize, num_parts: usize, views: usize, parts_per_view: usize) -> Option<u128> {
    let selections = binomial(num_parts, parts_per_view).checked_pow(u32::try_from(views).ok()?)?;
    let assignments = (views as u128).checked_pow(u32::try_from(num_images).ok()?)?;
    selections.checked_mul(assignments)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Mixed-radix decoding of `index` into `len` digits of base `radix`, most
/// significant first.
fn digits(mut index: u128, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = (index % radix as u128) as usize;
        index /= radix as u128;
    }
    out
}

/// Minimizes the objective over roots and shifts for a fixed selection and
/// view assignment by alternating the closed-form shift and root updates
/// until no variable moves by more than `1e-13`. `on_pass` sees the
/// objective after every half step.
pub fn solve_assignment_traced(
    data: &[ProposalSet],
    model: &ConstellationModel,
    views: &[usize],
    mut on_pass: impl FnMut(f64),
) -> (ConstellationModel, LatentState, f64) {
    let mut model = model.clone();
    let mut latent = LatentState::new(vec![Point::CENTER; data.len()], views.to_vec());
    for _ in 0..MAX_PASSES {
        let old_model = model.clone();
        let old_roots = latent.roots.clone();
        shifts_in_place(data, &mut model, &latent);
        on_pass(objective_unchecked(data, &model, &latent));
        roots_in_place(data, &model, &mut latent);
        on_pass(objective_unchecked(data, &model, &latent));

        let mut movement = 0.0f64;
        for v in 0..model.num_views() {
            for p in 0..model.num_parts() {
                movement = movement.max(model.shift(v, p).max_abs_diff(old_model.shift(v, p)));
            }
        }
        for (a, b) in latent.roots.iter().zip(&old_roots) {
            movement = movement.max(a.max_abs_diff(*b));
        }
        if movement < MOVEMENT_TOLERANCE {
            break;
        }
    }
    let objective = objective_unchecked(data, &model, &latent);
    (model, latent, objective)
}

pub fn solve_assignment(
    data: &[ProposalSet],
    model: &ConstellationModel,
    views: &[usize],
) -> (ConstellationModel, LatentState, f64) {
    solve_assignment_traced(data, model, views, |_| {})
}

/// Global minimum of the objective by exhaustive enumeration of every part
/// selection and view assignment. Refuses instances whose search space
/// exceeds [`ORACLE_LIMIT`].
pub fn oracle_fit(data: &[ProposalSet], views: usize, parts_per_view: usize) -> Result<OracleSolution> {
    let num_parts = proposal_count(data)?;
    if views == 0 || parts_per_view == 0 || parts_per_view > num_parts {
        return Err(Error::Config(format!(
            "need 1 <= M <= {num_parts} and V >= 1, got M = {parts_per_view}, V = {views}"
        )));
    }
    let required = search_space(data.len(), num_parts, views, parts_per_view).unwrap_or(u128::MAX);
    if required > ORACLE_LIMIT {
        return Err(Error::TooLarge { required, limit: ORACLE_LIMIT });
    }

    let combos = combinations(num_parts, parts_per_view);
    let num_selections = (combos.len() as u128).pow(views as u32);
    let num_assignments = (views as u128).pow(data.len() as u32);

    let selection_of = |sel_index: u128| -> Vec<Vec<usize>> {
        digits(sel_index, combos.len(), views).into_iter().map(|c| combos[c].clone()).collect()
    };
    let objectives: Vec<Vec<f64>> = (0..num_selections)
        .into_par_iter()
        .map(|sel_index| {
            let model = ConstellationModel::from_selection(num_parts, &selection_of(sel_index))
                .expect("valid combination");
            (0..num_assignments)
                .map(|s_index| solve_assignment(data, &model, &digits(s_index, views, data.len())).2)
                .collect()
        })
        .collect();

    let best_objective = objectives.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let mut argmin = Vec::new();
    for (sel_index, row) in objectives.iter().enumerate() {
        for (s_index, &obj) in row.iter().enumerate() {
            if obj <= best_objective + ARGMIN_TOLERANCE {
                argmin.push(Assignment {
                    parts: selection_of(sel_index as u128),
                    views: digits(s_index as u128, views, data.len()),
                });
            }
        }
    }
    Ok(OracleSolution { best_objective, argmin, enumerated: required })
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// F1 score between two part sets.
pub fn part_set_f1(found: &[usize], truth: &[usize]) -> f64 {
    if found.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let common = found.iter().filter(|p| truth.contains(p)).count() as f64;
    2.0 * common / (found.len() + truth.len()) as f64
}

/// Outcome of comparing a fitted model against the generating one.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    /// Fitted view `v` corresponds to true view `mapping[v]`.
    pub mapping: Vec<usize>,
    /// Every fitted view selects exactly the parts of its true view.
    pub parts_match: bool,
    /// Fraction of images whose mapped view equals the true view.
    pub view_agreement: f64,
}

/// Finds the view correspondence between a fitted and a true model.
/// Mappings under which all part sets coincide are preferred; ties and the
/// no-match case are decided by image view agreement.
pub fn compare_to_truth(
    fitted: &ConstellationModel,
    fitted_views: &[usize],
    truth: &ConstellationModel,
    truth_views: &[usize],
) -> Recovery {
    assert_eq!(fitted.num_views(), truth.num_views(), "view counts differ");
    assert_eq!(fitted_views.len(), truth_views.len(), "image counts differ");
    let fitted_parts: Vec<_> = (0..fitted.num_views()).map(|v| fitted.selected_parts(v)).collect();
    let truth_parts: Vec<_> = (0..truth.num_views()).map(|v| truth.selected_parts(v)).collect();
    let mut best: Option<(bool, usize, Vec<usize>)> = None;
    for mapping in permutations(fitted.num_views()) {
        let parts_match = mapping
            .iter()
            .enumerate()
            .all(|(v, &t)| part_set_f1(&fitted_parts[v], &truth_parts[t]) == 1.0);
        let agree = fitted_views
            .iter()
            .zip(truth_views)
            .filter(|(&f, &t)| mapping[f] == t)
            .count();
        let better = match &best {
            None => true,
            Some((m, a, _)) => (parts_match, agree) > (*m, *a),
        };
        if better {
            best = Some((parts_match, agree, mapping));
        }
    }
    let (parts_match, agree, mapping) = best.expect("at least one permutation");
    Recovery {
        mapping,
        parts_match,
        view_agreement: if truth_views.is_empty() { 1.0 } else { agree as f64 / truth_views.len() as f64 },
    }
}
