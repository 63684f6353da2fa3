// End-to-end pipeline from a CSV file with text labels and a non-numeric
// column: load, normalize, split, train, score.
//
// Usage: cargo run --release --example csv_pipeline

use std::io::Write;

use hsom::data::{CsvOptions, LabelMapping};
use hsom::prelude::*;

fn write_flows(path: &std::path::Path) -> std::io::Result<()> {
    let raw = SyntheticSpec::new(2, 3_000, 4, 10.0)
        .and_then(|s| s.generate(9))
        .expect("valid synthetic spec");
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "duration,protocol,src_bytes,dst_bytes,count,Label")?;
    for (i, (row, label)) in raw.features().rows().zip(raw.labels()).enumerate() {
        let proto = ["tcp", "udp", "icmp"][i % 3];
        let name = if *label == 0 { "BENIGN" } else { "DDoS" };
        // one corrupt row to exercise the drop policy
        let first = if i == 17 { "NaN".to_string() } else { row[0].to_string() };
        writeln!(f, "{first},{proto},{},{},{},{name}", row[1], row[2], row[3])?;
    }
    f.flush()
}

pub fn run_example() -> hsom::Result<()> {
    let dir = std::env::temp_dir().join(format!("hsom-csv-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| HsomError::Io { path: dir.clone(), source: e })?;
    let path = dir.join("flows.csv");
    write_flows(&path).map_err(|e| HsomError::Io { path: path.clone(), source: e })?;

    let opts = CsvOptions {
        label_column: Some("Label".into()),
        labels: LabelMapping {
            values: [("BENIGN".to_string(), 0), ("DDoS".to_string(), 1)].into_iter().collect(),
            default: None,
        },
        ..CsvOptions::default()
    };
    let load = load_csv(&path, &opts)?;
    println!(
        "loaded {} rows x {} features, dropped {} rows, skipped columns {:?}",
        load.dataset.len(),
        load.dataset.feature_dim(),
        load.dropped_rows,
        load.skipped_columns
    );

    let split = split_train_test(&normalize_l2(&load.dataset), 0.8, 1)?;
    let model = train_sequential(&split.train, &GrowthConfig::new(GridDim::square(2)?, 1))?;
    let r = evaluate(&model, &split.test)?;
    println!("{}\n{}", EvalReport::CSV_HEADER, r.csv_row());

    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

#[allow(dead_code)]
fn main() -> hsom::Result<()> {
    run_example()
}
