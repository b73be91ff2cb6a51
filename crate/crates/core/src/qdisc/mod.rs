//! Router egress-port schedulers behind one queue contract.
//!
//! Every discipline tail-drops: an arrival is accepted iff the packet
//! count before insertion is below capacity. PQ and WFQ account all of
//! their sub-queues against one shared budget.

mod fifo;
mod pq;
mod wfq;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

pub use fifo::FifoState;
pub use pq::PqState;
pub use wfq::{wfq_finish_time, WfqState};

use crate::error::QdiscError;
use crate::kernel::SimTime;
use crate::traffic::Packet;

/// A ToS value in `[0, 7]`; higher is more important.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassId(u8);

impl ClassId {
    pub const BEST_EFFORT: ClassId = ClassId(0);
    pub const VOICE: ClassId = ClassId(6);

    pub fn new(tos: u8) -> Result<ClassId, QdiscError> {
        if tos <= 7 {
            Ok(ClassId(tos))
        } else {
            Err(QdiscError::InvalidTos(tos))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..=7).map(ClassId)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for ClassId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

pub fn classify_tos(tos: u8) -> Result<ClassId, QdiscError> {
    ClassId::new(tos)
}

/// The packet's class is its ToS value. WFQ further keys queues by flow.
pub fn classify(packet: &Packet) -> ClassId {
    packet.tos()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QdiscKind {
    Fifo,
    Pq,
    Wfq,
}

impl QdiscKind {
    pub const ALL: [QdiscKind; 3] = [QdiscKind::Fifo, QdiscKind::Pq, QdiscKind::Wfq];

    pub fn name(self) -> &'static str {
        match self {
            QdiscKind::Fifo => "fifo",
            QdiscKind::Pq => "pq",
            QdiscKind::Wfq => "wfq",
        }
    }
}

impl fmt::Display for QdiscKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QdiscKind {
    type Err = QdiscError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(QdiscKind::Fifo),
            "pq" => Ok(QdiscKind::Pq),
            "wfq" => Ok(QdiscKind::Wfq),
            other => Err(QdiscError::InvalidConfig(format!("unknown discipline `{other}`"))),
        }
    }
}

pub const DEFAULT_BUFFER_PACKETS: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct QdiscConfig {
    pub kind: QdiscKind,
    pub buffer_capacity_packets: usize,
    /// Explicit WFQ weights; classes not listed weigh `max(tos, 1)`.
    pub wfq_weights: BTreeMap<ClassId, f64>,
    pub pq_levels: u8,
}

impl Default for QdiscConfig {
    fn default() -> Self {
        QdiscConfig {
            kind: QdiscKind::Fifo,
            buffer_capacity_packets: DEFAULT_BUFFER_PACKETS,
            wfq_weights: BTreeMap::new(),
            pq_levels: 8,
        }
    }
}

impl QdiscConfig {
    pub fn with_kind(kind: QdiscKind) -> Self {
        QdiscConfig {
            kind,
            ..QdiscConfig::default()
        }
    }

    /// A FIFO of the given size.
    pub fn with_buffer(packets: usize) -> Self {
        QdiscConfig {
            buffer_capacity_packets: packets,
            ..QdiscConfig::default()
        }
    }

    pub fn weight(&self, class: ClassId) -> f64 {
        self.wfq_weights
            .get(&class)
            .copied()
            .unwrap_or_else(|| f64::from(class.value().max(1)))
    }

    pub fn validate(&self) -> Result<(), QdiscError> {
        if self.buffer_capacity_packets == 0 {
            return Err(QdiscError::InvalidConfig("buffer capacity must be at least 1 packet".into()));
        }
        if let Some((c, w)) = self.wfq_weights.iter().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(QdiscError::InvalidConfig(format!("WFQ weight for ToS {c} must be positive, got {w}")));
        }
        if !(1..=8).contains(&self.pq_levels) {
            return Err(QdiscError::InvalidConfig("pq_levels must lie in [1, 8]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, PartialEq)]
pub enum EnqueueOutcome {
    Accepted,
    /// Tail drop; the packet is handed back, not stored.
    Dropped(Packet),
}

impl EnqueueOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, EnqueueOutcome::Accepted)
    }
}

/// Counters every discipline keeps for its port.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PortCounters {
    pub offered: u64,
    pub accepted: u64,
    pub dropped: u64,
    pub dequeued: u64,
}

pub trait QueueDiscipline {
    fn enqueue(&mut self, packet: Packet, now: SimTime) -> EnqueueOutcome;
    fn dequeue(&mut self, now: SimTime) -> Option<Packet>;
    fn len(&self) -> usize;
    fn capacity(&self) -> usize;
    fn counters(&self) -> PortCounters;
    /// Every queued packet, in no particular order.
    fn packets(&self) -> Box<dyn Iterator<Item = &Packet> + '_>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-port scheduler state, one of the three disciplines.
#[derive(Debug)]
pub enum Qdisc {
    Fifo(FifoState),
    Pq(PqState),
    Wfq(WfqState),
}

impl Qdisc {
    /// `line_rate_bps` is the rate of the link the port feeds; WFQ needs it
    /// to advance virtual time.
    pub fn new(config: &QdiscConfig, line_rate_bps: u64) -> Qdisc {
        match config.kind {
            QdiscKind::Fifo => Qdisc::Fifo(FifoState::new(config.buffer_capacity_packets)),
            QdiscKind::Pq => Qdisc::Pq(PqState::new(config.buffer_capacity_packets, config.pq_levels)),
            QdiscKind::Wfq => Qdisc::Wfq(WfqState::new(config, line_rate_bps)),
        }
    }

    pub fn kind(&self) -> QdiscKind {
        match self {
            Qdisc::Fifo(_) => QdiscKind::Fifo,
            Qdisc::Pq(_) => QdiscKind::Pq,
            Qdisc::Wfq(_) => QdiscKind::Wfq,
        }
    }

    fn inner(&self) -> &dyn QueueDiscipline {
        match self {
            Qdisc::Fifo(q) => q,
            Qdisc::Pq(q) => q,
            Qdisc::Wfq(q) => q,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn QueueDiscipline {
        match self {
            Qdisc::Fifo(q) => q,
            Qdisc::Pq(q) => q,
            Qdisc::Wfq(q) => q,
        }
    }
}

impl QueueDiscipline for Qdisc {
    fn enqueue(&mut self, packet: Packet, now: SimTime) -> EnqueueOutcome {
        self.inner_mut().enqueue(packet, now)
    }

    fn dequeue(&mut self, now: SimTime) -> Option<Packet> {
        self.inner_mut().dequeue(now)
    }

    fn len(&self) -> usize {
        self.inner().len()
    }

    fn capacity(&self) -> usize {
        self.inner().capacity()
    }

    fn counters(&self) -> PortCounters {
        self.inner().counters()
    }

    fn packets(&self) -> Box<dyn Iterator<Item = &Packet> + '_> {
        self.inner().packets()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;

    #[test]
    fn classify_by_tos() {
        let voice = Packet::new(0, NodeId(1), NodeId(2), 6, 200, SimTime::ZERO).unwrap();
        let ftp = Packet::new(1, NodeId(1), NodeId(2), 0, 1500, SimTime::ZERO).unwrap();
        assert_eq!(classify(&voice), ClassId::VOICE);
        assert_eq!(classify(&ftp), ClassId::BEST_EFFORT);
        assert_eq!(classify_tos(9), Err(QdiscError::InvalidTos(9)));
    }

    #[test]
    fn default_weights_follow_tos() {
        let mut cfg = QdiscConfig::with_kind(QdiscKind::Wfq);
        assert_eq!(cfg.weight(ClassId::VOICE), 6.0);
        assert_eq!(cfg.weight(ClassId::BEST_EFFORT), 1.0);
        cfg.wfq_weights.insert(ClassId::VOICE, 2.5);
        assert_eq!(cfg.weight(ClassId::VOICE), 2.5);
    }

    #[test]
    fn config_validation() {
        assert!(QdiscConfig::default().validate().is_ok());
        assert_eq!(QdiscConfig::default().buffer_capacity_packets, 500);
        let mut cfg = QdiscConfig {
            buffer_capacity_packets: 0,
            ..QdiscConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.buffer_capacity_packets = 10;
        cfg.wfq_weights.insert(ClassId::VOICE, 0.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("WFQ".parse::<QdiscKind>().unwrap(), QdiscKind::Wfq);
        assert!("red".parse::<QdiscKind>().is_err());
    }
}
