//! File formats, experiment pipeline and command line around `qgen-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod squad;

pub use error::{Error, Result};
