//! Split conformal prediction for hierarchical classification.
//!
//! Prediction sets are unions of at most `r` hierarchy nodes, so each set
//! can be reported with a handful of labels rather than a flat list of
//! classes. Flat baselines share the same calibration machinery.

pub mod ancestors;
pub mod conformal;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod hierarchy;
pub mod io;
pub mod numeric;
pub mod probmodel;

pub use conformal::{
    builtin, conformal_quantile, CalibratedPredictor, ConformalConfig, MethodRegistry,
    NestedSetMethod, Prediction, Randomizer,
};
pub use error::{Error, ErrorKind, Result};
pub use eval::{generate_synthetic, run_benchmark, MethodSpec, MetricReport, SyntheticDataset};
pub use hierarchy::{ClassId, Hierarchy, NodeId, NodeSet};
pub use probmodel::ProbabilityView;
