pub mod audio_io;
pub mod ci_chain;
pub mod error;
pub mod fixtures;
pub mod grid_csv;
pub mod harness;
pub mod masking;
pub mod metrics;
pub mod par;
pub mod reverb;
pub mod tf_analysis;

pub use error::{Error, Result};
