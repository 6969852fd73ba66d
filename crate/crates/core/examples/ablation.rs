//! Four-algorithm comparison on the seeded six-class synthetic corpus, with
//! the reduced swarm (N = G_max = 15).
//!
//! `cargo run --release -p opclass-core --example ablation -- [seeds]`

use std::time::Instant;

use opclass_core::pipeline::{cross_validate, Algorithm, CrossvalConfig};
use opclass_core::synth::{tabular, TabularSpec};

fn main() -> opclass_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    for seed in 0..seeds {
        let ds = tabular(&TabularSpec::imbalanced_six_class(seed))?;
        for algorithm in Algorithm::ALL {
            let mut cfg = CrossvalConfig::new(algorithm, seed);
            cfg.bpso.swarm_size = 15;
            cfg.bpso.generation_limit = 15;
            let start = Instant::now();
            let r = cross_validate(&ds, &cfg)?;
            println!(
                "seed {seed} {:<14} AUC_area {:.4}  accuracy {:.4}  ({:.1}s)",
                algorithm.as_str(),
                r.mean_fold_auc_area,
                r.mean_fold_accuracy,
                start.elapsed().as_secs_f64(),
            );
            if algorithm.uses_bpso() {
                println!("  selected: {}", r.selected_features().join(" "));
            }
        }
    }
    Ok(())
}
