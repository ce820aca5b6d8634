//! Compare alternating minimization against the exhaustive solution on
//! tiny instances.
//!
//!     cargo run --release --example oracle_check -- [instances]

use nac::synth::{generate, oracle_fit, SynthSpec};
use nac::{fit, FitConfig};

fn main() -> nac::Result<()> {
    let count: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let mut hits = 0;
    for seed in 0..count {
        let (v, m) = (1 + (seed % 2) as usize, 1 + ((seed / 2) % 2) as usize);
        let spec = SynthSpec {
            images: 4,
            parts: 5,
            views: v,
            parts_per_view: m,
            noise_sigma: 0.05,
            seed,
            ..SynthSpec::default()
        };
        let s = generate(&spec)?;
        let sol = oracle_fit(&s.data, v, m)?;
        let report = fit(&s.data, &FitConfig { views: v, parts_per_view: m, restarts: 20, seed, ..FitConfig::default() })?;
        let gap = report.objective - sol.best_objective;
        if gap.abs() <= 1e-9 {
            hits += 1;
        } else {
            println!("seed {seed} (V={v}, M={m}): fit {:.6} oracle {:.6}", report.objective, sol.best_objective);
        }
    }
    println!("{hits}/{count} fits reach the global minimum");
    Ok(())
}
