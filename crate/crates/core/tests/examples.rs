macro_rules! example {
    ($module:ident, $file:literal) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(flat_som, "flat_som.rs");
example!(hierarchical_training, "hierarchical_training.rs");
example!(parallel_training, "parallel_training.rs");
example!(csv_pipeline, "csv_pipeline.rs");
example!(model_persistence, "model_persistence.rs");
example!(speedup_sweep, "speedup_sweep.rs");

#[test]
fn flat_som_runs() {
    flat_som::run_example().expect("flat_som example");
}

#[test]
fn hierarchical_training_runs() {
    hierarchical_training::run_example().expect("hierarchical_training example");
}

#[test]
fn parallel_training_runs() {
    parallel_training::run_example().expect("parallel_training example");
}

#[test]
fn csv_pipeline_runs() {
    csv_pipeline::run_example().expect("csv_pipeline example");
}

#[test]
fn model_persistence_runs() {
    model_persistence::run_example().expect("model_persistence example");
}

#[test]
fn speedup_sweep_runs() {
    speedup_sweep::run_example().expect("speedup_sweep example");
}
