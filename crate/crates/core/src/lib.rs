//! Region-aggregated encoder features and a balanced random forest for
//! scan-level out-of-distribution detection on 3D volumes.

pub mod encoder;
pub mod error;
pub mod features;
pub mod forest;
pub mod manifest;
pub mod metrics;
pub mod ovf;
pub mod protocol;
pub mod rng;
pub mod scores;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
