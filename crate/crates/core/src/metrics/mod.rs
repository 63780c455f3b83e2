//! Objective quality metrics: scale-invariant SDR, STOI and batch reports.

pub mod report;
pub mod sdr;
pub mod stoi;

pub use report::{evaluate_set, ItemResult, ItemScores, MetricReport, Summary};
pub use sdr::{sdr, SDR_CAP_DB};
pub use stoi::stoi;
