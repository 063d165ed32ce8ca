//! Design-space simulator for electro-photonic DNN inference accelerators.
//!
//! Pipeline: [`workload`] lowers layers to GEMMs, [`timing`] and
//! [`nonlinear`] produce per-layer cycle counts, [`buffering`] picks the batch
//! and next-batch transfer schedule, [`energy`] rolls up power and area, and
//! [`report`] derives throughput metrics and renders output.

pub mod buffering;
pub mod config;
pub mod energy;
pub mod error;
pub mod mesh;
pub mod nonlinear;
pub mod report;
pub mod timing;
pub mod workload;

pub use error::{Error, Result};
