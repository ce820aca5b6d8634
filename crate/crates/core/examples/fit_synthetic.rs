//! Fit a constellation model to synthetic keypoints and compare it with the
//! generating model.
//!
//!     cargo run --release --example fit_synthetic -- [seed]

use nac::synth::{compare_to_truth, generate, SynthSpec};
use nac::{fit, FitConfig};

fn main() -> nac::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = SynthSpec { images: 250, seed, ..SynthSpec::default() };
    let s = generate(&spec)?;
    println!(
        "{} images, {} proposals, {} views of {} parts, noise {}",
        spec.images, spec.parts, spec.views, spec.parts_per_view, spec.noise_sigma
    );

    let report = fit(&s.data, &FitConfig { seed, ..FitConfig::default() })?;
    for (r, trace) in report.restarts.iter().enumerate() {
        println!(
            "restart {r}: objective {:.6} after {} iterations{}",
            trace.objective,
            trace.iterations,
            if r == report.best_restart { " (best)" } else { "" }
        );
    }

    let rec = compare_to_truth(&report.model, &report.latent.views, &s.truth, &s.truth_latent.views);
    for v in 0..spec.views {
        println!(
            "view {v} -> true view {}: parts {:?}",
            rec.mapping[v],
            report.model.selected_parts(v)
        );
    }
    println!("part sets recovered: {}, view agreement {:.1}%", rec.parts_match, 100.0 * rec.view_agreement);
    Ok(())
}
