//! Deterministic discrete-event simulator of NAND flash read-retry in SSDs.
//!
//! The crate models page reads on a multi-channel SSD whose pages need a
//! condition-dependent number of read-retry steps, and compares read paths
//! that pipeline retry steps, shorten the precharge phase of retry sensing,
//! or reuse previously successful read voltages.

pub mod analytics;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod policy;
pub mod reliability;
pub mod timing;
pub mod topology;
pub mod workload;
