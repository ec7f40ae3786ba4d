//! Quantum battery charging with measurement-driven (daemonic) work extraction.

pub mod cycle;
pub mod dilation;
pub mod error;
pub mod measure;
pub mod model;
pub mod plot;
pub mod qla;
pub mod sweep;
pub mod thermo;

pub use error::{Error, Result};
