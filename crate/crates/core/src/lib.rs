//! Deterministic packet-level simulator of a step topology: routers in a
//! chain, hosts star-attached to each router, VoIP and FTP traffic, and
//! FIFO / strict-priority / weighted-fair router queues.

pub mod error;
pub mod kernel;
pub mod metrics;
pub mod network;
pub mod qdisc;
pub mod scenario;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
pub use kernel::{Event, EventKind, RandomStream, SimTime, Simulator};
pub use metrics::{MetricsStore, Summary};
pub use qdisc::{ClassId, Qdisc, QdiscConfig, QdiscKind, QueueDiscipline};
pub use scenario::{compare_disciplines, parse_scenario, run_scenario, ComparisonReport, RunResult, Scenario};
pub use topology::{build_step_topology, compute_routes, HostAddr, StepSpec, Topology};
