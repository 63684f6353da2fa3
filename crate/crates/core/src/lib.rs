//! Hierarchical self-organizing maps for binary intrusion detection, with a
//! level-synchronous parallel trainer that reproduces the sequential model
//! exactly.
//!
//! ```no_run
//! use hsom::prelude::*;
//!
//! let data = SyntheticSpec::new(4, 20_000, 8, 10.0)?.generate(1)?;
//! let split = split_train_test(&normalize_l2(&data), 0.8, 1)?;
//! let growth = GrowthConfig::new(GridDim::square(3)?, 7);
//! let model = train_parallel(&split.train, &ParallelConfig::new(4, growth)?)?;
//! let report = evaluate(&model, &split.test)?;
//! println!("accuracy {:.3}", report.accuracy);
//! # Ok::<(), hsom::HsomError>(())
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod hierarchy;
pub mod matrix;
pub mod parallel;
pub mod persist;
pub mod som;

pub use error::{HsomError, Result};

pub mod prelude {
    pub use crate::data::{
        load_csv, normalize_l2, split_train_test, synth_blobs, BlobSpec, CsvOptions, LabeledDataset,
        SyntheticSpec,
    };
    pub use crate::error::{HsomError, Result};
    pub use crate::eval::{aggregate, confusion, evaluate, report, speedup, EvalReport};
    pub use crate::hierarchy::{train_sequential, GrowthConfig, HsomModel, HsomNode};
    pub use crate::matrix::Matrix;
    pub use crate::parallel::{train_parallel, ParallelConfig};
    pub use crate::persist::{load_model, save_model, Preprocessing};
    pub use crate::som::{GridDim, ScheduleParams, SomMap, TrainSchedule};
}
