use std::collections::VecDeque;

use super::{classify, EnqueueOutcome, PortCounters, QueueDiscipline};
use crate::kernel::SimTime;
use crate::traffic::Packet;

/// Strict priority over per-level FIFO queues sharing one packet budget.
///
/// With the default eight levels each ToS value has its own queue; fewer
/// levels fold adjacent ToS values together.
#[derive(Debug)]
pub struct PqState {
    levels: Vec<VecDeque<Packet>>,
    len: usize,
    capacity: usize,
    counters: PortCounters,
}

impl PqState {
    pub fn new(capacity: usize, levels: u8) -> Self {
        assert!(capacity >= 1, "PQ capacity must be at least 1");
        assert!((1..=8).contains(&levels), "PQ supports 1 to 8 levels");
        PqState {
            levels: (0..levels).map(|_| VecDeque::new()).collect(),
            len: 0,
            capacity,
            counters: PortCounters::default(),
        }
    }

    fn level_of(&self, packet: &Packet) -> usize {
        classify(packet).index() * self.levels.len() / 8
    }

    pub fn level_len(&self, level: usize) -> usize {
        self.levels.get(level).map_or(0, VecDeque::len)
    }
}

impl QueueDiscipline for PqState {
    fn enqueue(&mut self, mut packet: Packet, now: SimTime) -> EnqueueOutcome {
        self.counters.offered += 1;
        if self.len >= self.capacity {
            self.counters.dropped += 1;
            return EnqueueOutcome::Dropped(packet);
        }
        packet.arrived_at = now;
        let level = self.level_of(&packet);
        self.levels[level].push_back(packet);
        self.len += 1;
        self.counters.accepted += 1;
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, _now: SimTime) -> Option<Packet> {
        let p = self.levels.iter_mut().rev().find_map(VecDeque::pop_front)?;
        self.len -= 1;
        self.counters.dequeued += 1;
        Some(p)
    }

    fn len(&self) -> usize {
        self.len
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn counters(&self) -> PortCounters {
        self.counters
    }

    fn packets(&self) -> Box<dyn Iterator<Item = &Packet> + '_> {
        Box::new(self.levels.iter().flatten())
    }
}
