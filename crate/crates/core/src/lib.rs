//! privmeter: a crawl-log analysis toolkit for comparing web privacy
//! protection techniques at desk scale.
//!
//! The pipeline: generate or ingest crawl logs, simulate protection
//! techniques on them, compute browsing/HTML metrics, rank configurations
//! with two-sample KS tests, build privacy-footprint graphs, and measure
//! blocked-resource overlap.

pub mod blocker;
pub mod error;
pub mod footprint;
pub mod metrics;
pub mod model;
pub mod overlap;
pub mod psl;
pub mod report;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
