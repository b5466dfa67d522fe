pub mod bench;
pub mod cli;
pub mod contrastive;
pub mod correspondence;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod mining;
pub mod retrieval;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
