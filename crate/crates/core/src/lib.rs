pub mod controllers;
pub mod convergence;
pub mod error;
pub mod harness;
pub mod hkb;
pub mod kv;
pub mod metrics;
pub mod sigproc;
pub mod trajectory;

pub use error::{Error, Result};
pub use hkb::{ControlInput, HkbParams, Plant, State4};
pub use trajectory::{PlanarSample, Trajectory};
