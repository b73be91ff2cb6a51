//! Packets, traffic sources, and sinks.
//!
//! Voice is constant-bit-rate PCM framing (ToS 6); FTP is an open-loop
//! bulk source whose file requests arrive as a Poisson process and are
//! segmented back to back (ToS 0).

use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{QdiscError, TrafficError};
use crate::kernel::{PacketId, RandomStream, SimTime};
use crate::qdisc::ClassId;
use crate::topology::NodeId;

pub const VOICE_TOS: u8 = 6;
pub const BEST_EFFORT_TOS: u8 = 0;

/// A unidirectional conversation; also the WFQ flow key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FlowKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub tos: ClassId,
}

impl FlowKey {
    /// Packed numeric id, `src << 32 | dst << 8 | tos`; orders like the key.
    pub fn id(&self) -> u64 {
        (u64::from(self.src.0) << 32) | (u64::from(self.dst.0 & 0x00ff_ffff) << 8) | u64::from(self.tos.value())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    id: PacketId,
    flow: FlowKey,
    size_bytes: u32,
    created_at: SimTime,
    /// Index of the next link on the packet's route.
    pub hop: u16,
    /// Time the packet last arrived at a node or queue.
    pub arrived_at: SimTime,
}

impl Packet {
    pub fn new(
        id: PacketId,
        src: NodeId,
        dst: NodeId,
        tos: u8,
        size_bytes: u32,
        created_at: SimTime,
    ) -> Result<Packet, QdiscError> {
        let tos = ClassId::new(tos)?;
        assert!(size_bytes >= 1, "packets carry at least one byte");
        Ok(Packet {
            id,
            flow: FlowKey { src, dst, tos },
            size_bytes,
            created_at,
            hop: 0,
            arrived_at: created_at,
        })
    }

    pub fn id(&self) -> PacketId {
        self.id
    }

    pub fn flow(&self) -> FlowKey {
        self.flow
    }

    pub fn src(&self) -> NodeId {
        self.flow.src
    }

    pub fn dst(&self) -> NodeId {
        self.flow.dst
    }

    pub fn tos(&self) -> ClassId {
        self.flow.tos
    }

    pub fn size_bytes(&self) -> u32 {
        self.size_bytes
    }

    pub fn size_bits(&self) -> u64 {
        u64::from(self.size_bytes) * 8
    }

    pub fn created_at(&self) -> SimTime {
        self.created_at
    }
}

/// Hands out run-unique packet ids.
#[derive(Debug, Default)]
pub struct PacketIds(PacketId);

impl PacketIds {
    pub fn next_id(&mut self) -> PacketId {
        let id = self.0;
        self.0 += 1;
        id
    }

    pub fn issued(&self) -> u64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoipSourceSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub frame_interval: SimTime,
    pub payload_bytes: u32,
    pub header_bytes: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

impl VoipSourceSpec {
    /// 64 kbit/s PCM in 20 ms frames behind a 40-byte RTP/UDP/IP header.
    pub fn pcm(src: NodeId, dst: NodeId, start: SimTime, stop: SimTime) -> Self {
        VoipSourceSpec {
            src,
            dst,
            frame_interval: SimTime::from_millis(20),
            payload_bytes: 160,
            header_bytes: 40,
            start,
            stop,
        }
    }

    pub fn packet_bytes(&self) -> u32 {
        self.payload_bytes + self.header_bytes
    }
}

#[derive(Clone, Debug)]
pub struct VoipSource {
    spec: VoipSourceSpec,
    next_emit: Option<SimTime>,
}

impl VoipSource {
    pub fn new(spec: VoipSourceSpec) -> Self {
        assert!(spec.frame_interval > SimTime::ZERO, "frame interval must be positive");
        let next_emit = (spec.start < spec.stop).then_some(spec.start);
        VoipSource { spec, next_emit }
    }

    pub fn spec(&self) -> &VoipSourceSpec {
        &self.spec
    }

    pub fn next_emit(&self) -> Option<SimTime> {
        self.next_emit
    }

    /// Emits one frame and returns the next emission time, if any remains
    /// before `stop`.
    pub fn emit(&mut self, now: SimTime, ids: &mut PacketIds) -> (Packet, Option<SimTime>) {
        debug_assert!(now >= self.spec.start && now < self.spec.stop);
        let packet = Packet::new(
            ids.next_id(),
            self.spec.src,
            self.spec.dst,
            VOICE_TOS,
            self.spec.packet_bytes(),
            now,
        )
        .expect("voice ToS is valid");
        let next = now + self.spec.frame_interval;
        self.next_emit = (next < self.spec.stop).then_some(next);
        (packet, self.next_emit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FtpSourceSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub mean_interrequest: SimTime,
    pub file_size_bytes: u64,
    pub segment_payload_bytes: u32,
    pub header_bytes: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

/// Sizes in bytes (payload + header) of the segments carrying one file.
pub fn ftp_segments(file_size_bytes: u64, segment_payload: u32, header: u32) -> Vec<u32> {
    assert!(file_size_bytes >= 1 && segment_payload >= 1);
    let seg = u64::from(segment_payload);
    let full = file_size_bytes / seg;
    let rest = file_size_bytes % seg;
    let mut sizes = vec![segment_payload + header; full as usize];
    if rest > 0 {
        sizes.push(rest as u32 + header);
    }
    sizes
}

#[derive(Clone, Debug)]
pub struct FtpSource {
    spec: FtpSourceSpec,
    rng: RandomStream,
    gap: Exp<f64>,
    next_request: Option<SimTime>,
}

impl FtpSource {
    /// The first request is issued at `start`; later ones follow
    /// exponential gaps.
    pub fn new(spec: FtpSourceSpec, rng: RandomStream) -> Self {
        assert!(spec.mean_interrequest > SimTime::ZERO, "mean inter-request must be positive");
        let gap = Exp::new(1.0 / spec.mean_interrequest.as_secs_f64()).expect("positive rate");
        let next_request = (spec.start < spec.stop).then_some(spec.start);
        FtpSource {
            spec,
            rng,
            gap,
            next_request,
        }
    }

    pub fn spec(&self) -> &FtpSourceSpec {
        &self.spec
    }

    pub fn next_request(&self) -> Option<SimTime> {
        self.next_request
    }

    pub fn draw_gap(&mut self) -> SimTime {
        SimTime::from_secs_f64(self.gap.sample(&mut self.rng))
    }

    /// Emits every segment of one file at `now` and draws the next request epoch.
    pub fn emit(&mut self, now: SimTime, ids: &mut PacketIds) -> (Vec<Packet>, Option<SimTime>) {
        let packets = ftp_segments(
            self.spec.file_size_bytes,
            self.spec.segment_payload_bytes,
            self.spec.header_bytes,
        )
        .into_iter()
        .map(|size| {
            Packet::new(ids.next_id(), self.spec.src, self.spec.dst, BEST_EFFORT_TOS, size, now)
                .expect("best-effort ToS is valid")
        })
        .collect();
        let next = now + self.draw_gap();
        self.next_request = (next < self.spec.stop).then_some(next);
        (packets, self.next_request)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DeliveryRecord {
    pub packet: PacketId,
    pub created_at: SimTime,
    pub delivered_at: SimTime,
    pub src: NodeId,
    pub dst: NodeId,
    pub tos: ClassId,
    pub size_bytes: u32,
}

/// Terminates packets at one host; counts what it accepts per ToS.
#[derive(Clone, Debug)]
pub struct Sink {
    host: NodeId,
    received: [u64; 8],
}

impl Sink {
    pub fn new(host: NodeId) -> Self {
        Sink {
            host,
            received: [0; 8],
        }
    }

    pub fn host(&self) -> NodeId {
        self.host
    }

    pub fn received(&self, tos: ClassId) -> u64 {
        self.received[tos.index()]
    }

    pub fn receive(&mut self, packet: &Packet, now: SimTime) -> Result<DeliveryRecord, TrafficError> {
        if packet.dst() != self.host {
            return Err(TrafficError::MisroutedPacket {
                packet: packet.id(),
                expected: packet.dst(),
                actual: self.host,
            });
        }
        self.received[packet.tos().index()] += 1;
        Ok(DeliveryRecord {
            packet: packet.id(),
            created_at: packet.created_at(),
            delivered_at: now,
            src: packet.src(),
            dst: packet.dst(),
            tos: packet.tos(),
            size_bytes: packet.size_bytes(),
        })
    }
}
