pub mod dataset;
pub mod error;
pub mod mask;
pub mod metrics;

pub use error::{Error, Result};
pub mod backend;
pub mod cli;
pub mod service;
pub mod session;
pub mod training;
