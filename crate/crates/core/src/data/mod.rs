//! Ingestion and preprocessing of quarterly series.

pub mod adf;
pub mod frame;
pub mod ingest;
pub mod quarter;
pub mod transform;

pub use adf::{adf_filter, adf_test, AdfResult, ColumnScreen, DropReason};
pub use frame::{Column, ColumnKind, SeriesFrame};
pub use ingest::{prepare, read_quarterly_csv, IngestConfig, IngestLedger, RawTable, TargetTransform};
pub use quarter::{q, QuarterIndex, QuarterRange};
pub use transform::{
    aggregate_monthly, build_dummies, deflate_and_growth, forward_fill, iterative_standardize,
    Aggregation, ColumnStats, FillOutcome, TransformSpec,
};
