//! Real-data plumbing and experiment orchestration on top of `betkit-core`.

pub mod datastore;
pub mod harness;
pub mod toy;
