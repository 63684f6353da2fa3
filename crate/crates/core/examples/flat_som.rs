// Train a single flat SOM on two Gaussian blobs and watch the quantization
// error drop.
//
// Usage: cargo run --release --example flat_som

use hsom::data::{synth_blobs, BlobSpec};
use hsom::som::{init_som, map_samples, quantization_error, train_som, GridDim, ScheduleParams};

pub fn run_example() -> hsom::Result<()> {
    let blobs = [
        BlobSpec { center: vec![0.0, 0.0], sigma: 0.5, label: 0 },
        BlobSpec { center: vec![6.0, 6.0], sigma: 0.5, label: 1 },
    ];
    let data = synth_blobs(2_000, &blobs, 42)?;
    let grid = GridDim::new(2, 1)?;
    let sched = ScheduleParams::default().resolve(grid, data.len())?;
    println!(
        "schedule: alpha0={} delta0={} delta_min={} T={}",
        sched.alpha0, sched.delta0, sched.delta_min, sched.iterations
    );

    let initial = init_som(grid, data.features(), 7)?;
    let trained = train_som(data.features(), grid, &sched, 7)?;

    let qe_before = quantization_error(&map_samples(&initial, data.features())?);
    let assignment = map_samples(&trained, data.features())?;
    let qe_after = quantization_error(&assignment);
    println!("quantization error: {qe_before:.2} -> {qe_after:.2}");

    for k in 0..trained.neurons() {
        let (x, y) = grid.coord(k);
        println!(
            "  neuron {k} at ({x},{y}): weight {:?}, {} samples, error {:.2}",
            trained.weight(k).iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            assignment.members[k].len(),
            assignment.errors[k]
        );
    }
    println!("bmu of [5.9, 6.1]: {}", trained.find_bmu(&[5.9, 6.1])?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> hsom::Result<()> {
    run_example()
}
