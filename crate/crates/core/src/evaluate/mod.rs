//! Accuracy metrics, residual diagnostics and predictive-ability tests.

pub mod diagnostics;
pub mod gw;
pub mod metrics;

pub use diagnostics::{ljung_box, shapiro_wilk, Diagnostic};
pub use gw::{giacomini_white, pava_nonincreasing, weave_covariance, GwReport, DEFAULT_MAX_LAG};
pub use metrics::{metrics, rmsfe_ratio, MetricBundle};
