//! Runs the four-arm ablation on a cohort and prints the summary table.
//!
//! `cargo run --release -p fairmargin --example ablation -- [n_samples] [epochs]`

use fairmargin::{generate, run_ablation, CohortConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n_samples = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);

    let cohort = generate(&CohortConfig {
        n_samples,
        ..CohortConfig::biased()
    })?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cmp = run_ablation(&cohort, &cfg, &cfg.seeds, jobs)?;
    print!("{}", cmp.render_table());
    Ok(())
}
