//! Timing model, FPGA fit model and design-space sweep for tightly-coupled
//! soft-core multiprocessor systems running a Dhrystone-like workload.

pub mod bench;
pub mod cache;
pub mod calibrate;
pub mod config;
pub mod core_model;
pub mod driver;
pub mod dse;
pub mod exec;
pub mod interconnect;
pub mod mailbox;
pub mod reference;
pub mod resources;
pub mod system;
pub mod workload;
