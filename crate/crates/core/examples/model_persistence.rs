// Save a trained model as a versioned JSON document, load it back and check
// that predictions are unchanged.
//
// Usage: cargo run --release --example model_persistence

use hsom::prelude::*;

pub fn run_example() -> hsom::Result<()> {
    let data = normalize_l2(&SyntheticSpec::new(4, 5_000, 6, 5.0)?.generate(8)?);
    let split = split_train_test(&data, 0.8, 8)?;
    let model = train_sequential(&split.train, &GrowthConfig::new(GridDim::square(3)?, 8))?;

    let path = std::env::temp_dir().join(format!("hsom-model-{}.json", std::process::id()));
    let prep = Preprocessing { l2_normalize: true, feature_names: None };
    save_model(&path, &model, &prep)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    let (loaded, _) = load_model(&path)?;

    let before = model.predict_batch(split.test.features())?;
    let after = loaded.predict_batch(split.test.features())?;
    let same = before.iter().zip(&after).filter(|(a, b)| a == b).count();
    println!(
        "{} nodes, {bytes} bytes on disk; {same}/{} predictions identical after reload",
        loaded.node_count,
        before.len()
    );
    let _ = std::fs::remove_file(&path);
    if same != before.len() {
        return Err(HsomError::InvalidInput("reloaded model disagrees".into()));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> hsom::Result<()> {
    run_example()
}
