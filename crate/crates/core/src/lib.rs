pub mod ame;
pub mod characteristics;
pub mod config;
pub mod corpus;
pub mod curves;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod report;
pub mod mlpbv;
pub mod rng;
pub mod shapley;
pub mod srt;
pub mod utility;
pub mod valuation;

pub use error::{Error, Result};
