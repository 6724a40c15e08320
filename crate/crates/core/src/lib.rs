//! Power allocation for hierarchical rate splitting in laser-based optical
//! wireless networks.
//!
//! The crate covers the whole chain from room geometry to allocations:
//!
//! - [`channel`]: Gaussian-beam link gains and receiver noise,
//! - [`grouping`]: K-means grouping of users by position,
//! - [`precoding`] and [`rates`]: two-tier precoders, SINRs and rates of HRS
//!   and the RS / OMA baselines,
//! - [`optimizer`]: the constrained allocation solver and a grid oracle,
//! - [`dataset`] and [`dnn`]: offline corpus generation and the neural surrogate,
//! - [`experiments`]: parameter sweeps and reports.

pub mod channel;
pub mod config;
pub mod dataset;
pub mod dnn;
pub mod error;
pub mod experiments;
pub mod grouping;
pub mod optimizer;
pub mod pipeline;
pub mod precoding;
pub mod rates;

pub use error::{Error, Result};
