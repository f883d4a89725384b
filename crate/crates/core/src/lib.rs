pub mod agents;
pub mod dataio;
pub mod encoders;
pub mod envsim;
pub mod error;
pub mod harness;
pub mod numcore;
pub mod training;

pub use error::{Error, Result};
