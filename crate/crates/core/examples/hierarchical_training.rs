// Grow a hierarchical SOM on a four-blob dataset, inspect the tree and
// score it on a held-out split.
//
// Usage: cargo run --release --example hierarchical_training

use hsom::prelude::*;

pub fn run_example() -> hsom::Result<()> {
    let raw = SyntheticSpec::new(4, 20_000, 8, 6.0)?.generate(3)?;
    let split = split_train_test(&normalize_l2(&raw), 0.8, 3)?;
    println!(
        "train {} rows, test {} rows, contamination {:.3}",
        split.train.len(),
        split.test.len(),
        split.train.contamination()
    );

    let config = GrowthConfig {
        tau: 1.0,
        max_depth: 4,
        ..GrowthConfig::new(GridDim::square(3)?, 11)
    };
    let model = train_sequential(&split.train, &config)?;
    println!(
        "depth {}, {} nodes, trained in {:.3}s",
        model.depth, model.node_count, model.training_time_s
    );

    let leaves = model.leaves();
    for level in 1..=model.depth {
        let at: Vec<_> = leaves.iter().filter(|(l, _)| *l == level).collect();
        if at.is_empty() {
            continue;
        }
        let purity = at.iter().map(|(_, leaf)| leaf.majority_fraction).sum::<f64>() / at.len() as f64;
        println!("  level {level}: {} leaves, mean majority fraction {purity:.4}", at.len());
    }

    let report = evaluate(&model, &split.test)?;
    println!("{}", serde_json::to_string_pretty(&report.to_table()).expect("report serializes"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> hsom::Result<()> {
    run_example()
}
