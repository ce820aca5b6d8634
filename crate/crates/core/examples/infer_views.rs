//! Estimate the view and root of held-out images under a fitted model.
//!
//!     cargo run --release --example infer_views

use nac::inference::{infer, DEFAULT_MAX_ITERS};
use nac::synth::{compare_to_truth, generate, SynthSpec};
use nac::{fit, FitConfig};

fn main() -> nac::Result<()> {
    let spec = SynthSpec { images: 200, views: 3, seed: 7, ..SynthSpec::default() };
    let s = generate(&spec)?;
    let report = fit(&s.data, &FitConfig { views: 3, seed: 7, ..FitConfig::default() })?;
    let mapping = compare_to_truth(&report.model, &report.latent.views, &s.truth, &s.truth_latent.views).mapping;

    let (test, truth, _) = s.sample(100, 99);
    let mut correct = 0;
    for (i, set) in test.iter().enumerate() {
        let r = infer(set, &report.model, DEFAULT_MAX_ITERS)?;
        correct += usize::from(mapping[r.view] == truth.views[i]);
        if i < 5 {
            println!(
                "{}: view {} root ({:.3}, {:.3}) error {:.2e} from {} parts",
                set.meta.id,
                r.view,
                r.root.x,
                r.root.y,
                r.error(),
                r.residuals.len()
            );
        }
    }
    println!("held-out view accuracy {correct}/{}", test.len());
    Ok(())
}
