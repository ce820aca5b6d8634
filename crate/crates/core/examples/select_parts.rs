//! Count how often each part is used, keep the most used ones and cut
//! square patches around them in one image.
//!
//!     cargo run --release --example select_parts -- [k]

use nac::selection::{count_part_usage, patch_box, to_pixels, top_k_parts};
use nac::synth::{generate, SynthSpec};
use nac::{fit, FitConfig};

fn main() -> nac::Result<()> {
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let spec = SynthSpec { images: 200, shared_parts: true, views: 3, seed: 2, ..SynthSpec::default() };
    let s = generate(&spec)?;
    let report = fit(&s.data, &FitConfig { views: 3, seed: 2, ..FitConfig::default() })?;

    let counts = count_part_usage(&s.data, &report.model, &report.latent)?;
    let top = top_k_parts(&counts, k);
    println!("usage counts {counts:?}");
    println!("top {k}: {top:?}");
    println!("true parts {:?}", s.truth.selected_parts(0));

    let set = &s.data[0];
    for &p in &top {
        let Some(mu) = set.get(p) else { continue };
        let b = patch_box(mu, &set.meta, 0.01)?;
        let px = to_pixels(mu, &set.meta);
        println!("part {p:2} at ({:.0}, {:.0}) -> patch [{:.1}, {:.1}, {:.1}, {:.1}]", px.x, px.y, b.x0, b.y0, b.x1, b.y1);
    }
    Ok(())
}
