use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::kernel::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {fire_at}, clock is already at {now}")]
    SchedulingInPast { fire_at: SimTime, now: SimTime },
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid step spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QdiscError {
    #[error("ToS value {0} is outside [0, 7]")]
    InvalidTos(u8),
    #[error("invalid queue configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrafficError {
    #[error("packet {packet} for host {expected} arrived at host {actual}")]
    MisroutedPacket {
        packet: u64,
        expected: NodeId,
        actual: NodeId,
    },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("packet {packet} delivered at {delivered_at} before its creation at {created_at}")]
    NegativeDelay {
        packet: u64,
        created_at: SimTime,
        delivered_at: SimTime,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// A problem with a `section.key=value` override rather than the file.
    #[error("override: {0}")]
    Override(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
}

/// Any failure of a simulation run.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Qdisc(#[from] QdiscError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
