//! Experiment orchestration on top of `soelab-core`: a resumable artifact
//! store keyed to a config digest, the staged pipeline (scenarios through
//! report), and the follow-up studies.

pub mod config;
pub mod report;
pub mod stages;
pub mod store;
pub mod studies;

#[cfg(test)]
mod testutil;
