//! Training-run observability with slice-level fairness metrics.
//!
//! Event files and per-example prediction logs are ingested from a log
//! directory, scalar series are aligned and downsampled, prediction records are
//! partitioned into subgroups with disaggregated metrics and disparity
//! summaries, and everything is served over a JSON HTTP API.

pub mod aggregation;
pub mod correlation;
pub mod fairness;
pub mod ingest;
pub mod server;
pub mod slicing;
pub mod synthgen;
