// Sweep grid sizes, training sequential and parallel models on one split,
// and print the averaged comparison table with per-grid speedups.
//
// Usage: cargo run --release --example speedup_sweep [N]

use hsom::experiment::{run_bench, ExperimentConfig};

pub fn run_with(n: usize, reps: usize) -> hsom::Result<()> {
    let cfg = ExperimentConfig {
        synthetic: Some(format!("blobs4:n={n},p=20,sep=10")),
        grids: ["2x2", "3x3", "4x4", "5x5"].map(String::from).to_vec(),
        reps,
        ..ExperimentConfig::default()
    };
    let bench = run_bench(&cfg)?;
    println!(
        "{} | {} workers | {} train rows | {} reps",
        bench.source, bench.workers, bench.train_rows, bench.reps
    );
    println!("grid  seq_tt_s  par_tt_s  speedup  seq_acc  par_acc");
    for row in &bench.rows {
        println!(
            "{:<5} {:>8.3} {:>9.3} {:>8.3} {:>8.4} {:>8.4}",
            row.grid,
            row.sequential.mean.tt_s,
            row.parallel.mean.tt_s,
            row.speedup,
            row.sequential.mean.accuracy,
            row.parallel.mean.accuracy
        );
    }
    Ok(())
}

pub fn run_example() -> hsom::Result<()> {
    run_with(10_000, 1)
}

#[allow(dead_code)]
fn main() -> hsom::Result<()> {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200_000);
    run_with(n, 3)
}
