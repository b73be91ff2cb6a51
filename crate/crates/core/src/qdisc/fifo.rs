use std::collections::VecDeque;

use super::{EnqueueOutcome, PortCounters, QueueDiscipline};
use crate::kernel::SimTime;
use crate::traffic::Packet;

/// Single drop-tail queue.
#[derive(Debug)]
pub struct FifoState {
    queue: VecDeque<Packet>,
    capacity: usize,
    counters: PortCounters,
}

impl FifoState {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "FIFO capacity must be at least 1");
        FifoState {
            queue: VecDeque::new(),
            capacity,
            counters: PortCounters::default(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.queue.iter()
    }
}

impl QueueDiscipline for FifoState {
    fn enqueue(&mut self, mut packet: Packet, now: SimTime) -> EnqueueOutcome {
        self.counters.offered += 1;
        if self.queue.len() >= self.capacity {
            self.counters.dropped += 1;
            return EnqueueOutcome::Dropped(packet);
        }
        packet.arrived_at = now;
        self.queue.push_back(packet);
        self.counters.accepted += 1;
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, _now: SimTime) -> Option<Packet> {
        let p = self.queue.pop_front()?;
        self.counters.dequeued += 1;
        Some(p)
    }

    fn len(&self) -> usize {
        self.queue.len()
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn counters(&self) -> PortCounters {
        self.counters
    }

    fn packets(&self) -> Box<dyn Iterator<Item = &Packet> + '_> {
        Box::new(self.queue.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;
    use proptest::prelude::*;

    fn pkt(id: u64) -> Packet {
        Packet::new(id, NodeId(1), NodeId(2), (id % 8) as u8, 100, SimTime::ZERO).unwrap()
    }

    #[test]
    fn accepts_into_empty_queue() {
        let mut q = FifoState::new(500);
        assert!(q.enqueue(pkt(0), SimTime::ZERO).is_accepted());
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn full_queue_drops() {
        let mut q = FifoState::new(500);
        for i in 0..500 {
            assert!(q.enqueue(pkt(i), SimTime::ZERO).is_accepted());
        }
        match q.enqueue(pkt(500), SimTime::ZERO) {
            EnqueueOutcome::Dropped(p) => assert_eq!(p.id(), 500),
            EnqueueOutcome::Accepted => panic!("full queue accepted"),
        }
        assert_eq!(q.len(), 500);
        assert_eq!(q.counters().dropped, 1);
    }

    #[test]
    fn departs_in_arrival_order() {
        let mut q = FifoState::new(10);
        for i in 1..=3 {
            q.enqueue(pkt(i), SimTime::ZERO);
        }
        let ids: Vec<_> = std::iter::from_fn(|| q.dequeue(SimTime::ZERO)).map(|p| p.id()).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert!(q.dequeue(SimTime::ZERO).is_none());
    }

    proptest! {
        /// Random enqueue/dequeue interleavings: departures replay acceptances.
        #[test]
        fn order_and_conservation(ops in proptest::collection::vec(any::<bool>(), 1..400), cap in 1usize..20) {
            let mut q = FifoState::new(cap);
            let mut accepted = Vec::new();
            let mut departed = Vec::new();
            for (i, enq) in ops.iter().enumerate() {
                if *enq {
                    if q.enqueue(pkt(i as u64), SimTime::ZERO).is_accepted() {
                        accepted.push(i as u64);
                    }
                } else if let Some(p) = q.dequeue(SimTime::ZERO) {
                    departed.push(p.id());
                }
                prop_assert!(q.len() <= cap);
            }
            let c = q.counters();
            prop_assert_eq!(c.accepted + c.dropped, c.offered);
            prop_assert_eq!(c.accepted, c.dequeued + q.len() as u64);
            prop_assert_eq!(&accepted[..departed.len()], &departed[..]);
        }
    }
}
