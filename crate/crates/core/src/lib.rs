pub mod cli;
pub mod error;
pub mod estimator;
pub mod models;
pub mod moments;
pub mod signal;
pub mod simulate;
pub mod wavelet;

pub use error::{Error, Result};
pub use signal::MultiSignal;
