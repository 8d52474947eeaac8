//! Tree-structured Parzen Estimator search with median pruning.

pub mod parzen;
pub mod space;
pub mod study;

pub use space::{Domain, ParamValue, Params, SearchSpace};
pub use study::{
    optimize, should_prune, suggest, StudyConfig, StudyState, TrialMonitor, TrialRecord, TrialStatus,
};
