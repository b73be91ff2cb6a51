//! Packet-by-packet GPS (weighted fair queueing).
//!
//! Each arrival is stamped with a virtual finish tag
//! `F = max(V, F_prev) + L / w`, and the head-of-flow packet with the
//! smallest tag is served next (lower flow key on ties). `V` is the GPS
//! virtual time: between epochs it grows at `line_rate / sum(w)` over the
//! flows still backlogged in the fluid reference system, and a flow leaves
//! that set exactly when `V` reaches its last finish tag.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{ClassId, EnqueueOutcome, PortCounters, QdiscConfig, QueueDiscipline};
use crate::kernel::SimTime;
use crate::traffic::{FlowKey, Packet};

/// Virtual time value with a total order.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Tag(f64);

impl Eq for Tag {}

impl Ord for Tag {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Tag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Computes `max(v_now, F_prev) + size_bits / weight` and stores it as the
/// flow's new `F_prev`.
pub fn wfq_finish_time(last_finish: &mut f64, size_bits: f64, weight: f64, v_now: f64) -> f64 {
    debug_assert!(size_bits > 0.0 && weight > 0.0);
    let finish = v_now.max(*last_finish) + size_bits / weight;
    *last_finish = finish;
    finish
}

#[derive(Debug)]
struct FlowQueue {
    weight: f64,
    last_finish: f64,
    queue: VecDeque<(Packet, f64)>,
}

#[derive(Debug)]
pub struct WfqState {
    flows: BTreeMap<FlowKey, FlowQueue>,
    /// Head-of-line tag per nonempty flow.
    heads: BTreeSet<(Tag, FlowKey)>,
    /// Flows backlogged in the fluid reference, keyed by last finish tag.
    fluid_backlog: BTreeSet<(Tag, FlowKey)>,
    active_weight: f64,
    virtual_time: f64,
    last_update: SimTime,
    line_rate_bps: f64,
    weights: [f64; 8],
    len: usize,
    capacity: usize,
    counters: PortCounters,
}

impl WfqState {
    pub fn new(config: &QdiscConfig, line_rate_bps: u64) -> Self {
        assert!(config.buffer_capacity_packets >= 1, "WFQ capacity must be at least 1");
        assert!(line_rate_bps > 0, "WFQ needs a positive line rate");
        let mut weights = [0.0; 8];
        for class in ClassId::all() {
            weights[class.index()] = config.weight(class);
        }
        WfqState {
            flows: BTreeMap::new(),
            heads: BTreeSet::new(),
            fluid_backlog: BTreeSet::new(),
            active_weight: 0.0,
            virtual_time: 0.0,
            last_update: SimTime::ZERO,
            line_rate_bps: line_rate_bps as f64,
            weights,
            len: 0,
            capacity: config.buffer_capacity_packets,
            counters: PortCounters::default(),
        }
    }

    pub fn virtual_time(&self) -> f64 {
        self.virtual_time
    }

    pub fn last_finish(&self, flow: &FlowKey) -> Option<f64> {
        self.flows.get(flow).map(|f| f.last_finish)
    }

    /// Finish tag of the packet at the head of `flow`, if any.
    pub fn head_tag(&self, flow: &FlowKey) -> Option<f64> {
        self.flows.get(flow)?.queue.front().map(|(_, tag)| *tag)
    }

    pub fn flow_len(&self, flow: &FlowKey) -> usize {
        self.flows.get(flow).map_or(0, |f| f.queue.len())
    }

    pub fn weight_of(&self, class: ClassId) -> f64 {
        self.weights[class.index()]
    }

    /// Brings `V` forward to `now`, retiring fluid-idle flows as it passes
    /// their finish tags.
    pub fn advance(&mut self, now: SimTime) {
        let mut remaining = now.saturating_sub(self.last_update).as_secs_f64();
        if now > self.last_update {
            self.last_update = now;
        }
        while let Some(&(Tag(finish), key)) = self.fluid_backlog.first() {
            if finish > self.virtual_time {
                if remaining <= 0.0 {
                    break;
                }
                let to_finish = (finish - self.virtual_time) * self.active_weight / self.line_rate_bps;
                if to_finish > remaining {
                    self.virtual_time += remaining * self.line_rate_bps / self.active_weight;
                    break;
                }
                remaining -= to_finish;
                self.virtual_time = finish;
            }
            self.fluid_backlog.pop_first();
            self.retire(key);
        }
    }

    fn retire(&mut self, key: FlowKey) {
        let flow = self.flows.get(&key).expect("backlogged flow exists");
        self.active_weight -= flow.weight;
        if self.fluid_backlog.is_empty() {
            self.active_weight = 0.0;
        }
        if flow.queue.is_empty() {
            self.flows.remove(&key);
        }
    }
}

impl QueueDiscipline for WfqState {
    fn enqueue(&mut self, mut packet: Packet, now: SimTime) -> EnqueueOutcome {
        self.counters.offered += 1;
        if self.len >= self.capacity {
            self.counters.dropped += 1;
            return EnqueueOutcome::Dropped(packet);
        }
        self.advance(now);
        packet.arrived_at = now;

        let key = packet.flow();
        let weight = self.weights[key.tos.index()];
        let v = self.virtual_time;
        let flow = self.flows.entry(key).or_insert_with(|| FlowQueue {
            weight,
            last_finish: 0.0,
            queue: VecDeque::new(),
        });
        let previous = flow.last_finish;
        let finish = wfq_finish_time(&mut flow.last_finish, packet.size_bits() as f64, flow.weight, v);
        if flow.queue.is_empty() {
            self.heads.insert((Tag(finish), key));
        }
        flow.queue.push_back((packet, finish));

        if !self.fluid_backlog.remove(&(Tag(previous), key)) {
            self.active_weight += weight;
        }
        self.fluid_backlog.insert((Tag(finish), key));

        self.len += 1;
        self.counters.accepted += 1;
        EnqueueOutcome::Accepted
    }

    fn dequeue(&mut self, now: SimTime) -> Option<Packet> {
        self.advance(now);
        let (_, key) = self.heads.pop_first()?;
        let flow = self.flows.get_mut(&key).expect("head flow exists");
        let (packet, _) = flow.queue.pop_front().expect("head flow is nonempty");
        if let Some((_, next)) = flow.queue.front() {
            self.heads.insert((Tag(*next), key));
        } else if !self.fluid_backlog.contains(&(Tag(flow.last_finish), key)) {
            self.flows.remove(&key);
        }
        self.len -= 1;
        self.counters.dequeued += 1;
        Some(packet)
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
        Box::new(self.flows.values().flat_map(|f| f.queue.iter().map(|(p, _)| p)))
    }
}
