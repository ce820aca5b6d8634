//! Keep only those object proposals that contain at least three of the five
//! best-fitting parts of their image.
//!
//!     cargo run --release --example augment_filter

use nac::selection::{best_fitting_parts, filter_boxes, patch_box, to_pixels, Box, BoxSet};
use nac::synth::{generate, SynthSpec};
use nac::{fit, FitConfig, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> nac::Result<()> {
    let spec = SynthSpec { images: 100, views: 2, seed: 4, ..SynthSpec::default() };
    let s = generate(&spec)?;
    let report = fit(&s.data, &FitConfig { views: 2, seed: 4, ..FitConfig::default() })?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut total, mut kept) = (0, 0);
    for (i, set) in s.data.iter().enumerate().take(10) {
        // random proposals of various sizes, standing in for a detector
        let boxes = (0..40)
            .map(|_| {
                let c = Point::new(rng.random(), rng.random());
                patch_box(c, &set.meta, rng.random_range(0.02..0.6))
            })
            .collect::<nac::Result<Vec<Box>>>()?;
        let set_boxes = BoxSet { image_id: set.meta.id.clone(), boxes };
        let parts = best_fitting_parts(&s.data, i, &report.model, &report.latent, 5)?;
        let points: Vec<Point> = parts.iter().map(|&p| to_pixels(set.locations[p], &set.meta)).collect();
        let out = filter_boxes(&set_boxes, &set.meta.id, &points, 3)?;
        println!("{}: kept {}/{}", set.meta.id, out.boxes.len(), set_boxes.boxes.len());
        total += set_boxes.boxes.len();
        kept += out.boxes.len();
    }
    println!("kept {kept} of {total} proposals");
    Ok(())
}
