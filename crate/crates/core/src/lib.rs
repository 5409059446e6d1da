pub mod copula;
pub mod data;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod qr;
pub mod synth;
pub mod tndfs;

pub use error::{Error, Result};
