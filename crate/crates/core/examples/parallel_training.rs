// Train the same hierarchy sequentially and on worker pools of several sizes;
// the trees come out identical and only the wall-clock time changes.
//
// Usage: cargo run --release --example parallel_training

use hsom::prelude::*;

pub fn run_example() -> hsom::Result<()> {
    let data = normalize_l2(&SyntheticSpec::new(4, 40_000, 10, 8.0)?.generate(5)?);
    let growth = GrowthConfig::new(GridDim::square(3)?, 2024);

    let reference = train_sequential(&data, &growth)?;
    println!(
        "sequential: {:.3}s, depth {}, {} nodes",
        reference.training_time_s, reference.depth, reference.node_count
    );

    for workers in [1, 2, 4, 8] {
        let model = train_parallel(&data, &ParallelConfig::new(workers, growth)?)?;
        let diff = reference
            .max_weight_diff(&model)
            .ok_or_else(|| HsomError::InvalidInput("tree shapes differ".into()))?;
        println!(
            "parallel x{workers}: {:.3}s, speedup {:.2}, max weight difference {diff:e}",
            model.training_time_s,
            speedup(reference.training_time_s, model.training_time_s)?
        );
    }
    println!("logical cores available: {}", hsom::parallel::default_workers());
    Ok(())
}

#[allow(dead_code)]
fn main() -> hsom::Result<()> {
    run_example()
}
