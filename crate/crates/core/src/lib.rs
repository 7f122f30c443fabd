//! Multi-user MIMO-OTFS uplink simulation with cyclic-shift embedded pilots.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod modem;
pub mod pilots;
pub mod sequence;

pub use error::{Error, Result};
