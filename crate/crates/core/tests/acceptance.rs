//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::Parser;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nac::estimation::{fit_observed, update_roots, update_shifts, StepEvent, DESCENT_TOLERANCE};
use nac::inference::infer;
use nac::io::{model_to_json, parse_model, KeypointFile};
use nac::model::objective;
use nac::selection::{count_part_usage, top_k_parts};
use nac::synth::{compare_to_truth, generate, oracle_fit, permutations, SynthSpec};
use nac::{fit, ConstellationModel, FitConfig, ImageMeta, LatentState, Point, ProposalSet};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Outcome;

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// N=3..4, P=4..5, V=1..2, M=1..2; 25 instances, 20 restarts, 1e-9, >= 24/25, < 60 s
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut misses = Vec::new();
    for k in 0..25u64 {
        let n = 3 + (k % 2) as usize;
        let p = 4 + ((k / 2) % 2) as usize;
        let v = 1 + ((k / 4) % 2) as usize;
        let m = 1 + ((k / 8) % 2) as usize;
        let spec = SynthSpec {
            images: n,
            parts: p,
            views: v,
            parts_per_view: m,
            noise_sigma: 0.05,
            visibility_rate: 0.9,
            seed: k,
            ..SynthSpec::default()
        };
        let s = generate(&spec).unwrap();
        let oracle = oracle_fit(&s.data, v, m).unwrap();
        let cfg = FitConfig { views: v, parts_per_view: m, restarts: 20, seed: k, ..FitConfig::default() };
        let report = fit(&s.data, &cfg).unwrap();
        assert!(oracle.best_objective <= report.objective + 1e-12, "oracle above fit on instance {k}");
        if (report.objective - oracle.best_objective).abs() <= 1e-9 {
            hits += 1;
        } else {
            misses.push(format!(
                "#{k} (N{n} P{p} V{v} M{m}: fit {:.3e} vs {:.3e})",
                report.objective, oracle.best_objective
            ));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        hits >= 24 && elapsed < Duration::from_secs(60),
        format!("{hits}/25 at the global minimum in {elapsed:.2?}; misses: {misses:?}"),
    )
}

// 100 fits, N <= 200, P <= 64, every update non-increasing within 1e-12
fn monotone_descent() -> Outcome {
    let mut updates = 0usize;
    let mut violations = Vec::new();
    for seed in 0..100u64 {
        let s = seed as usize;
        let parts = 4 + (s * 13) % 61;
        let views = 1 + s % 5;
        let spec = SynthSpec {
            images: 10 + (s * 37) % 191,
            parts,
            views,
            parts_per_view: 1 + (s * 7) % parts.min(12),
            noise_sigma: [0.0, 0.01, 0.05, 0.2][s % 4],
            visibility_rate: [1.0, 0.9, 0.6][s % 3],
            seed,
            ..SynthSpec::default()
        };
        let syn = generate(&spec).unwrap();
        let cfg = FitConfig { views, parts_per_view: spec.parts_per_view, restarts: 2, seed, ..FitConfig::default() };
        let events: Mutex<Vec<StepEvent>> = Mutex::new(Vec::new());
        let report = fit_observed(&syn.data, &cfg, &|e: &StepEvent| events.lock().unwrap().push(*e)).unwrap();
        for e in events.into_inner().unwrap() {
            updates += 1;
            if e.after > e.before + DESCENT_TOLERANCE {
                violations.push(format!("fit {seed} restart {} iter {} {:?}", e.restart, e.iteration, e.step));
            }
        }
        let recomputed = objective(&syn.data, &report.model, &report.latent).unwrap();
        if recomputed != report.objective {
            violations.push(format!("fit {seed}: reported objective differs from recomputed"));
        }
        if report.restarts.iter().any(|r| r.descent_violations > 0) {
            violations.push(format!("fit {seed}: trace counted violations"));
        }
    }
    outcome(
        violations.is_empty(),
        format!("{updates} updates over 100 fits, {} violations {:?}", violations.len(), violations),
    )
}

// N=250, P=30, V=5, M=10, sigma 0.02, visibility 0.9; 20 seeds; >= 95% exact
// part sets, >= 98% view agreement in matching runs, < 5 min
fn synthetic_recovery() -> Outcome {
    let start = Instant::now();
    let mut matched = 0;
    let mut worst_agreement = 1.0f64;
    for seed in 0..20u64 {
        let spec = SynthSpec {
            images: 250,
            parts: 30,
            views: 5,
            parts_per_view: 10,
            noise_sigma: 0.02,
            visibility_rate: 0.9,
            seed,
            ..SynthSpec::default()
        };
        let s = generate(&spec).unwrap();
        let report = fit(&s.data, &FitConfig { seed, ..FitConfig::default() }).unwrap();
        let rec = compare_to_truth(&report.model, &report.latent.views, &s.truth, &s.truth_latent.views);
        if rec.parts_match {
            matched += 1;
            worst_agreement = worst_agreement.min(rec.view_agreement);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        matched * 100 >= 95 * 20 && worst_agreement >= 0.98 && elapsed < Duration::from_secs(300),
        format!(
            "{matched}/20 seeds recover every part set, worst view agreement {:.3}, {elapsed:.2?}",
            worst_agreement
        ),
    )
}

// per-view shift c = +-0.01 on (d, a), relative change < 1e-9, 50 configurations
fn gauge_invariance() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let views = rng.random_range(1..=4);
        let parts = rng.random_range(2..=20);
        let m = rng.random_range(1..=parts);
        let spec = SynthSpec {
            images: rng.random_range(1..=60),
            parts,
            views,
            parts_per_view: m,
            noise_sigma: 0.1,
            visibility_rate: 0.8,
            seed,
            ..SynthSpec::default()
        };
        let s = generate(&spec).unwrap();
        let mut model = random_model(&mut rng, parts, views, m);
        let latent = LatentState::new(
            (0..s.data.len()).map(|_| Point::new(rng.random(), rng.random())).collect(),
            (0..s.data.len()).map(|_| rng.random_range(0..views)).collect(),
        );
        let base = objective(&s.data, &model, &latent).unwrap();
        let v = rng.random_range(0..views);
        let c = Point::new(
            if rng.random_bool(0.5) { 0.01 } else { -0.01 },
            if rng.random_bool(0.5) { 0.01 } else { -0.01 },
        );
        for p in 0..parts {
            let d = model.shift(v, p);
            model.set_shift(v, p, d + c);
        }
        let mut moved = latent.clone();
        for (root, &view) in moved.roots.iter_mut().zip(&latent.views) {
            if view == v {
                *root = *root - c;
            }
        }
        let shifted = objective(&s.data, &model, &moved).unwrap();
        let rel = (shifted - base).abs() / base.max(f64::MIN_POSITIVE);
        worst = worst.max(if base == 0.0 { shifted.abs() } else { rel });
    }
    outcome(worst < 1e-9, format!("largest relative change {worst:.3e} over 50 configurations"))
}

fn random_model(rng: &mut ChaCha8Rng, parts: usize, views: usize, m: usize) -> ConstellationModel {
    let mut order: Vec<usize> = (0..parts).collect();
    let selection: Vec<Vec<usize>> = (0..views)
        .map(|_| {
            order.shuffle(rng);
            order[..m].to_vec()
        })
        .collect();
    let mut model = ConstellationModel::from_selection(parts, &selection).unwrap();
    for v in 0..views {
        for p in 0..parts {
            model.set_shift(v, p, Point::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
        }
    }
    model
}

// sigma 0, visibility 1: fitted objective < 1e-12 for every seed
fn noise_free_zero() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let spec = SynthSpec {
            images: 100,
            parts: 20,
            views: 3,
            parts_per_view: 5,
            noise_sigma: 0.0,
            visibility_rate: 1.0,
            seed,
            ..SynthSpec::default()
        };
        let s = generate(&spec).unwrap();
        let cfg = FitConfig { views: 3, parts_per_view: 5, seed, ..FitConfig::default() };
        let report = fit(&s.data, &cfg).unwrap();
        worst = worst.max(report.objective);
        if report.objective.is_nan() || report.objective >= 1e-12 {
            failures.push(seed);
        }
    }
    outcome(failures.is_empty(), format!("largest objective {worst:.3e} over 10 seeds, failing seeds {failures:?}"))
}

/// Share of held-out images whose view is recovered when inference only
/// uses `parts`. Shifts for the subset are re-estimated on the training
/// images with the fitted view assignment held fixed.
fn view_accuracy(
    train: &[ProposalSet],
    fitted: &LatentState,
    mapping: &[usize],
    views: usize,
    parts: &[usize],
    test: &[ProposalSet],
    test_truth: &LatentState,
) -> f64 {
    let num_parts = train[0].num_proposals();
    let mut model = ConstellationModel::from_selection(num_parts, &vec![parts.to_vec(); views]).unwrap();
    let mut latent = fitted.clone();
    for _ in 0..50 {
        model = update_shifts(train, &model, &latent).unwrap();
        latent = update_roots(train, &model, &latent).unwrap();
    }
    let correct = test
        .iter()
        .zip(&test_truth.views)
        .filter(|(set, &truth)| mapping[infer(set, &model, 50).unwrap().view] == truth)
        .count();
    correct as f64 / test.len() as f64
}

// 10 informative + 20 background parts; constellation top-K beats random K
// for K in {2, 5, 10}, averaged over 10 seeds
fn part_count_curve() -> Outcome {
    let ks = [2usize, 5, 10];
    let mut chosen = [0.0f64; 3];
    let mut random = [0.0f64; 3];
    let seeds = 10u64;
    for seed in 0..seeds {
        let spec = SynthSpec {
            images: 250,
            parts: 30,
            views: 3,
            parts_per_view: 10,
            noise_sigma: 0.02,
            visibility_rate: 0.9,
            shared_parts: true,
            seed,
            ..SynthSpec::default()
        };
        let s = generate(&spec).unwrap();
        let (test, test_truth, _) = s.sample(250, 10_000 + seed);
        let report = fit(&s.data, &FitConfig { views: 3, parts_per_view: 10, seed, ..FitConfig::default() }).unwrap();
        let mapping = best_mapping(&report.latent.views, &s.truth_latent.views, 3);
        let counts = count_part_usage(&s.data, &report.model, &report.latent).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + seed);
        for (slot, &k) in ks.iter().enumerate() {
            let top = top_k_parts(&counts, k);
            let mut all: Vec<usize> = (0..spec.parts).collect();
            all.shuffle(&mut rng);
            let rand_parts = all[..k].to_vec();
            chosen[slot] += view_accuracy(&s.data, &report.latent, &mapping, 3, &top, &test, &test_truth);
            random[slot] += view_accuracy(&s.data, &report.latent, &mapping, 3, &rand_parts, &test, &test_truth);
        }
    }
    let n = seeds as f64;
    let lines: Vec<String> = ks
        .iter()
        .enumerate()
        .map(|(i, k)| format!("K={k}: {:.3} vs random {:.3}", chosen[i] / n, random[i] / n))
        .collect();
    outcome((0..3).all(|i| chosen[i] > random[i]), lines.join(", "))
}

fn best_mapping(fitted: &[usize], truth: &[usize], views: usize) -> Vec<usize> {
    permutations(views)
        .into_iter()
        .max_by_key(|perm| fitted.iter().zip(truth).filter(|(&f, &t)| perm[f] == t).count())
        .unwrap()
}

// hand-enumerated fixture of 20 boxes; keep those with >= 3 of the 5 best parts
fn augmentation_filter() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_filter_fixture(dir.path());
    let p = |name: &str| dir.path().join(name).display().to_string();
    let out = dir.path().join("kept.json");
    let cli = nac::cli::Cli::parse_from([
        "nac",
        "filter-boxes",
        "--boxes",
        &p("boxes.json"),
        "--keypoints",
        &p("keypoints.json"),
        "--model",
        &p("model.json"),
        "--report",
        &p("report.json"),
        "--out",
        &out.display().to_string(),
    ]);
    let printed = nac::cli::run(cli).unwrap();
    let kept = nac::io::read_boxes(&out).unwrap();
    let expected: Vec<[f64; 4]> = FILTER_BOXES
        .iter()
        .filter(|(_, keep)| *keep)
        .map(|(b, _)| *b)
        .collect();
    let got: Vec<[f64; 4]> = kept[0].boxes.iter().map(|&b| b.into()).collect();
    outcome(
        got == expected && printed.trim() == "img: kept 10/20",
        format!("{} of 20 boxes kept, expected {} ({})", got.len(), expected.len(), printed.trim()),
    )
}

// 64x64 image, pixel = 64 * normalized, so every coordinate is exact.
// Root (32, 32), zero shifts. Best five parts in pixels:
// P0 (32,32) P1 (33,32) P2 (32,30) P3 (35,35) P4 (28,36).
// Decoys: part 5 (10,10) is the sixth best, part 6 is hidden, part 7 (5,60)
// is not selected.
const FILTER_POINTS: [(f64, f64, bool); 8] = [
    (32.0, 32.0, true),
    (33.0, 32.0, true),
    (32.0, 30.0, true),
    (35.0, 35.0, true),
    (28.0, 36.0, true),
    (10.0, 10.0, true),
    (30.0, 31.0, false),
    (5.0, 60.0, true),
];

const FILTER_BOXES: [([f64; 4], bool); 20] = [
    ([0.0, 0.0, 64.0, 64.0], true),    // all five
    ([31.0, 29.0, 34.0, 33.0], true),  // P0 P1 P2
    ([32.0, 32.0, 33.0, 33.0], false), // P0 P1 on the boundary
    ([32.0, 30.0, 35.0, 35.0], true),  // P0 P1 P2 P3, corners
    ([0.0, 0.0, 20.0, 20.0], false),   // decoy only
    ([0.0, 50.0, 20.0, 64.0], false),  // unselected part only
    ([28.0, 36.0, 29.0, 37.0], false), // P4 on a corner
    ([28.0, 30.0, 32.0, 36.0], true),  // P0 P2 P4 on the boundary
    ([33.0, 31.0, 36.0, 36.0], false), // P1 P3
    ([27.0, 29.0, 36.0, 37.0], true),  // all five
    ([0.0, 0.0, 32.0, 32.0], false),   // P0 P2 and the sixth-best decoy
    ([0.0, 0.0, 33.0, 32.0], true),    // P0 P1 P2
    ([30.0, 31.0, 40.0, 40.0], true),  // P0 P1 P3
    ([34.0, 34.0, 40.0, 40.0], false), // P3
    ([20.0, 30.0, 30.0, 40.0], false), // P4
    ([28.0, 30.0, 33.0, 32.0], true),  // P0 P1 P2
    ([32.5, 29.0, 40.0, 40.0], false), // P1 P3
    ([31.5, 29.5, 33.5, 32.5], true),  // P0 P1 P2
    ([5.0, 10.0, 30.0, 60.0], false),  // P4 plus both decoys
    ([28.0, 30.0, 35.0, 36.0], true),  // all five
];

fn write_filter_fixture(dir: &Path) {
    let locations = FILTER_POINTS.iter().map(|&(x, y, _)| Point::new(x / 64.0, y / 64.0)).collect();
    let visible = FILTER_POINTS.iter().map(|&(_, _, v)| v).collect();
    let set = ProposalSet::new(ImageMeta::new("img", 64, 64), locations, visible).unwrap();
    KeypointFile::new(8, vec![set]).write(dir.join("keypoints.json")).unwrap();
    let model = ConstellationModel::from_selection(8, &[vec![0, 1, 2, 3, 4, 5, 6]]).unwrap();
    nac::io::write_model(&model, dir.join("model.json")).unwrap();
    std::fs::write(
        dir.join("report.json"),
        r#"{
  "format": "nac-report/1",
  "objective": 0.0,
  "best_restart": 0,
  "iterations_per_restart": [1],
  "restart_objectives": [0.0],
  "images": [{ "id": "img", "view": 0, "root": [0.5, 0.5] }]
}
"#,
    )
    .unwrap();
    let boxes = nac::selection::BoxSet {
        image_id: "img".into(),
        boxes: FILTER_BOXES.iter().map(|(b, _)| (*b).into()).collect(),
    };
    nac::io::write_boxes(&[boxes], dir.join("boxes.json")).unwrap();
}

fn arb_keypoints() -> impl Strategy<Value = KeypointFile> {
    (0usize..6, 0usize..5).prop_flat_map(|(p, n)| {
        let image = (
            "[a-z0-9_.-]{1,12}",
            1u32..4000,
            1u32..4000,
            prop::collection::vec(((0.0f64..=1.0, 0.0f64..=1.0), any::<bool>()), p),
        );
        prop::collection::vec(image, n).prop_map(move |imgs| {
            let images = imgs
                .into_iter()
                .enumerate()
                .map(|(i, (id, w, h, pts))| ProposalSet {
                    meta: ImageMeta::new(format!("{id}-{i}"), w, h),
                    locations: pts.iter().map(|&((x, y), _)| Point::new(x, y)).collect(),
                    visible: pts.iter().map(|&(_, v)| v).collect(),
                })
                .collect();
            KeypointFile::new(p, images)
        })
    })
}

fn arb_model() -> impl Strategy<Value = ConstellationModel> {
    (1usize..12, 1usize..5).prop_flat_map(|(p, v)| {
        (1..=p, Just(p), Just(v), any::<u64>()).prop_map(|(m, p, v, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = random_model(&mut rng, p, v, m);
            // only selected shifts are stored; keep them in range
            for view in 0..v {
                for part in 0..p {
                    let d = if model.is_selected(view, part) {
                        Point::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
                    } else {
                        Point::ZERO
                    };
                    model.set_shift(view, part, d);
                }
            }
            model
        })
    })
}

/// Invalid variants of a canonical keypoint document.
fn keypoint_mutations(text: &str, file: &KeypointFile) -> Vec<String> {
    let mut out = vec![
        text.replacen("nac-keypoints/1", "nac-keypoints/9", 1),
        text.replacen("\"num_proposals\"", "\"proposals\"", 1),
        text[..text.len() / 2].to_string(),
    ];
    if let Some(img) = file.images.first() {
        let mut f = file.clone();
        f.images[0].visible.push(true);
        f.images[0].locations.push(Point::CENTER);
        out.push(f.to_json());
        let mut f = file.clone();
        f.images.push(img.clone());
        out.push(f.to_json());
        let mut f = file.clone();
        f.images[0].meta.width = 0;
        out.push(f.to_json());
        out.push(text.replacen("\"visible\"", "\"shown\"", 1));
        if file.num_proposals > 0 {
            let mut f = file.clone();
            f.images[0].visible[0] = true;
            f.images[0].locations[0] = Point::new(1.25, 0.5);
            out.push(f.to_json());
        }
    }
    out
}

fn model_mutations(text: &str, model: &ConstellationModel) -> Vec<String> {
    let mut out = vec![
        text.replacen("nac-model/1", "nac-model/0", 1),
        text.replacen(&format!("\"M\": {}", model.parts_per_view()), &format!("\"M\": {}", model.parts_per_view() + 1), 1),
        text.replacen(&format!("\"V\": {}", model.num_views()), &format!("\"V\": {}", model.num_views() + 1), 1),
        text.replacen(&format!("\"P\": {}", model.num_parts()), "\"P\": 0", 1),
    ];
    let raw: serde_json::Value = serde_json::from_str(text).unwrap();
    let mutate = |f: &dyn Fn(&mut serde_json::Value)| {
        let mut v = raw.clone();
        f(&mut v);
        serde_json::to_string_pretty(&v).unwrap()
    };
    out.push(mutate(&|v| v["views"][0]["shifts"][0][0] = 1.5.into()));
    out.push(mutate(&|v| {
        v["views"][0]["shifts"].as_array_mut().unwrap().pop();
    }));
    out.push(mutate(&|v| v["views"][0]["parts"][0] = 99.into()));
    if model.parts_per_view() > 1 {
        out.push(mutate(&|v| {
            v["views"][0]["parts"].as_array_mut().unwrap().reverse();
        }));
    }
    out
}

// 1000 fuzzed files of each kind; identity both ways, all mutations rejected
fn file_round_trip() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let mut rejected = 0usize;
    let counter = std::cell::Cell::new(0usize);
    let keypoints = runner.run(&arb_keypoints(), |file| {
        let text = file.to_json();
        let parsed = KeypointFile::parse(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&parsed, &file);
        prop_assert_eq!(parsed.to_json(), text.clone());
        for bad in keypoint_mutations(&text, &file) {
            let err = KeypointFile::parse(&bad);
            prop_assert!(err.is_err(), "accepted invalid file:\n{}", bad);
            prop_assert!(!err.unwrap_err().to_string().is_empty());
            counter.set(counter.get() + 1);
        }
        Ok(())
    });
    rejected += counter.replace(0);
    let mut runner = TestRunner::new_with_rng(
        PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let models = runner.run(&arb_model(), |model| {
        let text = model_to_json(&model);
        let parsed = parse_model(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&parsed, &model);
        prop_assert_eq!(model_to_json(&parsed), text.clone());
        for bad in model_mutations(&text, &model) {
            let err = parse_model(&bad);
            prop_assert!(err.is_err(), "accepted invalid model:\n{}", bad);
            prop_assert!(!err.unwrap_err().to_string().is_empty());
            counter.set(counter.get() + 1);
        }
        Ok(())
    });
    rejected += counter.get();
    let pass = keypoints.is_ok() && models.is_ok();
    let detail = match (&keypoints, &models) {
        (Ok(()), Ok(())) => format!("1000 keypoint and 1000 model files round-trip, {rejected} mutations rejected"),
        (Err(e), _) => format!("keypoints: {e}"),
        (_, Err(e)) => format!("model: {e}"),
    };
    outcome(pass, detail)
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("monotone descent", monotone_descent),
        ("synthetic recovery", synthetic_recovery),
        ("gauge invariance", gauge_invariance),
        ("noise-free zero", noise_free_zero),
        ("part-count curve", part_count_curve),
        ("augmentation filter", augmentation_filter),
        ("file round-trip", file_round_trip),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {} ({:.2?})", result.detail, start.elapsed());
        failed += usize::from(!result.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
