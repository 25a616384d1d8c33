pub mod codec;
pub mod ctc;
pub mod error;
pub mod features;
pub mod leaderboard;
mod lstk;
pub mod manifest;
pub mod metrics;
pub mod probe;
pub mod runner;
pub mod synthetic;
pub mod task;
pub mod vocab;

pub use error::{Error, ErrorKind, Result};
