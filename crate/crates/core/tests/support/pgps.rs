//! Clocks a single link fed by a queue discipline. Transmission of `L`
//! bytes takes `round(8L * 1e9 / rate)` ns; the link is work conserving.

use super::{packet_for, Arrival};
use stepqos_core::qdisc::QueueDiscipline;
use stepqos_core::SimTime;

#[derive(Clone, Copy, Debug)]
pub struct Served {
    /// Index into the arrival list.
    pub index: usize,
    pub start: SimTime,
    pub finish: SimTime,
}

/// Feeds `arrivals` (sorted by time) into `q` and returns departures in
/// service order. Arrivals at the instant a transmission ends are queued
/// before the next packet is chosen.
pub fn drive<Q: QueueDiscipline>(q: &mut Q, arrivals: &[Arrival], tos: &[u8], rate_bps: u64) -> Vec<Served> {
    let mut out = Vec::new();
    let mut next = 0;
    // The link is free from this instant on.
    let mut free_at = SimTime::ZERO;
    loop {
        if let Some(a) = arrivals.get(next).filter(|a| a.at <= free_at || q.is_empty()) {
            let accepted = q.enqueue(packet_for(next as u64, a, tos[a.flow]), a.at).is_accepted();
            assert!(accepted, "oracle traces never overflow the buffer");
            free_at = free_at.max(a.at);
            next += 1;
            continue;
        }
        let Some(p) = q.dequeue(free_at) else { break };
        let tx = SimTime::from_nanos(((p.size_bits() as f64) * 1e9 / rate_bps as f64).round() as u64);
        out.push(Served {
            index: p.id() as usize,
            start: free_at,
            finish: free_at + tx,
        });
        free_at += tx;
    }
    out
}
