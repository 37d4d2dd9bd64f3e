//! Runs the synthetic-corpus comparison and prints the EER table.
//!
//! Usage: cargo run --release --example toy_experiment [seed] [iterations]

use std::time::Instant;

use ratesv::experiment::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::default();
    if let Some(seed) = args.next() {
        cfg.seed = seed.parse()?;
    }
    if let Some(iters) = args.next() {
        cfg.train.iterations = iters.parse()?;
    }
    let start = Instant::now();
    let (table, results) = run_experiment(&cfg)?;
    for r in &results {
        let evals: Vec<String> = r
            .outcome
            .phase_evals
            .iter()
            .map(|e| format!("{} {:.3}->{:.3}", e.phase, e.start.l_cos, e.end.l_cos))
            .collect();
        println!("{}: {:?} {}", r.preset, r.outcome.status, evals.join(", "));
    }
    print!("{}", table.to_text());
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
