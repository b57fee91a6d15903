//! Command-line front-end for hadanet: channel-mixer benchmarks, gradient
//! checks, transform inspection, and toy-network training and evaluation.

pub mod bench;
pub mod cli;
pub mod error;

pub use bench::{bench_channel_mixers, BenchConfig, BenchReport};
pub use cli::{run, Cli};
pub use error::{CliError, CliResult};
