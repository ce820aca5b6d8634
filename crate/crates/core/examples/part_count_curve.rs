//! View classification accuracy on held-out images when only K parts are
//! used, for parts chosen by usage count and for random parts.
//!
//!     cargo run --release --example part_count_curve

use nac::estimation::{update_roots, update_shifts};
use nac::inference::infer;
use nac::selection::{count_part_usage, top_k_parts};
use nac::synth::{compare_to_truth, generate, SynthSpec};
use nac::{fit, ConstellationModel, FitConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nac::Result<()> {
    let spec = SynthSpec { images: 250, views: 3, shared_parts: true, seed: 1, ..SynthSpec::default() };
    let s = generate(&spec)?;
    let (test, truth, _) = s.sample(250, 77);
    let report = fit(&s.data, &FitConfig { views: 3, seed: 1, ..FitConfig::default() })?;
    let mapping = compare_to_truth(&report.model, &report.latent.views, &s.truth, &s.truth_latent.views).mapping;
    let counts = count_part_usage(&s.data, &report.model, &report.latent)?;

    let accuracy = |parts: &[usize]| -> nac::Result<f64> {
        let mut model = ConstellationModel::from_selection(spec.parts, &vec![parts.to_vec(); 3])?;
        let mut latent = report.latent.clone();
        for _ in 0..50 {
            model = update_shifts(&s.data, &model, &latent)?;
            latent = update_roots(&s.data, &model, &latent)?;
        }
        let mut correct = 0;
        for (set, &t) in test.iter().zip(&truth.views) {
            correct += usize::from(mapping[infer(set, &model, 50)?.view] == t);
        }
        Ok(correct as f64 / test.len() as f64)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    println!(" K  counted  random");
    for k in 1..=12 {
        let mut all: Vec<usize> = (0..spec.parts).collect();
        all.shuffle(&mut rng);
        println!("{k:2}  {:.3}    {:.3}", accuracy(&top_k_parts(&counts, k))?, accuracy(&all[..k])?);
    }
    Ok(())
}
