//! Exact simulation of pre/postselected weak measurements, the ideal Quantum
//! Cheshire Cat configuration, and the intensity-based interferometer
//! experiments that infer weak values from detection rates.
//!
//! Modules, bottom-up:
//!
//! - [`qstate`]: labeled tensor-product states and dense operators
//! - [`pointer`]: Gaussian pointer states with exact translations
//! - [`weakmeas`]: weak values, transition elements, exact pointer evolution
//! - [`qcc`]: the two-arm interferometer scenario and its four weak values
//! - [`neutron`]: absorber and magnetic-field intensity emulation
//! - [`montecarlo`]: finite-statistics sampling and estimators
//! - [`cli`]: scenario configuration, validation and dispatch

pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod montecarlo;
pub mod neutron;
pub mod pointer;
pub mod qcc;
pub mod qstate;
pub mod report;
pub mod weakmeas;

pub use error::{Error, ErrorClass, Result};
