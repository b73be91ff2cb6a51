//! Test-side oracles shared by the integration suites. Nothing here calls
//! into the scheduler code under test except the driver in `pgps`, which
//! only feeds a queue and clocks a link.

#![allow(dead_code)]

pub mod gps;
pub mod pgps;

use stepqos_core::topology::NodeId;
use stepqos_core::traffic::Packet;
use stepqos_core::SimTime;

/// One arrival for the single-link drivers.
#[derive(Clone, Copy, Debug)]
pub struct Arrival {
    pub at: SimTime,
    pub flow: usize,
    pub bytes: u32,
}

/// Flow `i` maps to source node `i + 1` and the given ToS.
pub fn packet_for(id: u64, a: &Arrival, tos: u8) -> Packet {
    Packet::new(id, NodeId(a.flow as u32 + 1), NodeId(100), tos, a.bytes, a.at).unwrap()
}
