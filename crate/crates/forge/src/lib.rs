//! File formats, generation backends and the pipeline runner behind the
//! `forge` command.

pub mod backend;
pub mod config;
pub mod error;
pub mod io;
pub mod ops;
pub mod pipeline;
pub mod translate;

pub use error::{ForgeError, Result};
