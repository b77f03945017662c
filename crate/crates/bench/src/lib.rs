//! Benchmark scenarios run against the resource manager service.

pub mod harness;
pub mod receiver;
pub mod report;
pub mod scenario1;
pub mod scenario2;
pub mod scenario3;
pub mod usage;

pub use harness::{Harness, HarnessConfig};
pub use report::{ScenarioReport, SummaryRow};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Client(#[from] rm_client::ClientError),
    #[error(transparent)]
    Config(#[from] rm_server::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("setup: {0}")]
    Setup(String),
    #[error("{0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Id of copy `slot` of a testbed node.
pub fn slot_id(base: &str, slot: usize) -> String {
    if slot == 0 {
        base.to_string()
    } else {
        format!("{base}-s{slot}")
    }
}
