//! Wires topology, ports, sources, and sinks onto the event kernel.
//!
//! Every directed link has one egress port at its source node. Router
//! ports run the configured discipline; host ports are unbounded FIFOs
//! (the sending host's own backlog). A port that receives a packet while
//! idle schedules a `PortDequeueReady` at the current instant, so packets
//! arriving at the same instant all reach the queue before the first one
//! is pulled into service.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Error;
use crate::kernel::{Event, EventKind, Handler, PacketId, RandomStream, RunStats, SimTime, Simulator};
use crate::metrics::{DropReason, MetricsStore, RunMeta, Summary};
use crate::qdisc::{EnqueueOutcome, PortCounters, Qdisc, QdiscConfig, QueueDiscipline};
use crate::topology::{LinkId, NodeId, RoutingTable, Topology};
use crate::traffic::{FtpSource, FtpSourceSpec, Packet, PacketIds, Sink, VoipSource, VoipSourceSpec};

/// Egress port feeding one directed link.
#[derive(Debug)]
pub struct EgressPort {
    pub link: LinkId,
    pub qdisc: Qdisc,
    busy: bool,
    kick_pending: bool,
}

impl EgressPort {
    pub fn new(link: LinkId, qdisc: Qdisc) -> Self {
        EgressPort {
            link,
            qdisc,
            busy: false,
            kick_pending: false,
        }
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    /// Enqueues and, if the port is idle, schedules it to start sending now.
    pub fn offer(&mut self, packet: Packet, sim: &mut Simulator) -> EnqueueOutcome {
        let outcome = self.qdisc.enqueue(packet, sim.now());
        if outcome.is_accepted() && !self.busy && !self.kick_pending {
            self.kick_pending = true;
            sim.schedule_in(SimTime::ZERO, EventKind::PortDequeueReady, self.link.0, None);
        }
        outcome
    }

    /// Handles `PortDequeueReady`: the previous transmission (if any) has
    /// finished; pull the next packet into service.
    pub fn on_ready(&mut self, now: SimTime) -> Option<Packet> {
        self.kick_pending = false;
        let next = self.qdisc.dequeue(now);
        self.busy = next.is_some();
        next
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DropLogEntry {
    pub time: SimTime,
    pub port: LinkId,
    pub tos: u8,
    pub flow_id: u64,
    pub reason: DropReason,
}

/// `time_ns,port_id,tos,flow_id,reason` lines with a header row.
pub fn drop_log_csv(entries: &[DropLogEntry]) -> String {
    let mut out = String::from("time_ns,port_id,tos,flow_id,reason\n");
    for e in entries {
        writeln!(out, "{},{},{},{},{}", e.time.as_nanos(), e.port, e.tos, e.flow_id, e.reason.as_str())
            .expect("string write");
    }
    out
}

/// A packet leaving a port: start of its transmission.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Departure {
    pub time: SimTime,
    pub link: LinkId,
    pub packet: PacketId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkOptions {
    pub qdisc: QdiscConfig,
    pub seed: u64,
    pub bucket_width: SimTime,
    pub drop_log: bool,
    pub record_departures: bool,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            qdisc: QdiscConfig::default(),
            seed: 1,
            bucket_width: SimTime::from_secs(1),
            drop_log: false,
            record_departures: false,
        }
    }
}

pub struct NetworkRun {
    pub metrics: MetricsStore,
    pub summary: Summary,
    pub stats: RunStats,
    pub port_counters: Vec<PortCounters>,
    pub drop_log: Option<Vec<DropLogEntry>>,
    pub departures: Option<Vec<Departure>>,
    pub duration: SimTime,
}

pub struct Network {
    topology: Topology,
    routes: RoutingTable,
    ports: Vec<EgressPort>,
    voip: Vec<VoipSource>,
    ftp: Vec<FtpSource>,
    sinks: HashMap<NodeId, Sink>,
    in_transit: HashMap<PacketId, Packet>,
    ids: PacketIds,
    error_rng: RandomStream,
    metrics: MetricsStore,
    options: NetworkOptions,
    drop_log: Option<Vec<DropLogEntry>>,
    departures: Option<Vec<Departure>>,
}

impl Network {
    /// FTP source `i` draws from the stream labelled `ftp.<i>`.
    pub fn new(
        topology: Topology,
        routes: RoutingTable,
        voip: Vec<VoipSourceSpec>,
        ftp: Vec<FtpSourceSpec>,
        options: NetworkOptions,
    ) -> Self {
        let ports = topology
            .links()
            .iter()
            .map(|l| {
                let qdisc = if topology.node(l.src).is_router() {
                    Qdisc::new(&options.qdisc, l.rate_bps)
                } else {
                    Qdisc::new(&QdiscConfig::with_buffer(usize::MAX), l.rate_bps)
                };
                EgressPort::new(l.id, qdisc)
            })
            .collect();
        let sinks = topology.hosts().map(|h| (h.id, Sink::new(h.id))).collect();
        let ftp = ftp
            .into_iter()
            .enumerate()
            .map(|(i, spec)| FtpSource::new(spec, RandomStream::new(options.seed, &format!("ftp.{i}"))))
            .collect();
        Network {
            routes,
            ports,
            voip: voip.into_iter().map(VoipSource::new).collect(),
            ftp,
            sinks,
            in_transit: HashMap::new(),
            ids: PacketIds::default(),
            error_rng: RandomStream::new(options.seed, "link-errors"),
            metrics: MetricsStore::new(options.bucket_width, options.seed),
            drop_log: options.drop_log.then(Vec::new),
            departures: options.record_departures.then(Vec::new),
            topology,
            options,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Runs to `duration` and summarizes.
    pub fn run(mut self, duration: SimTime) -> Result<NetworkRun, Error> {
        let mut sim = Simulator::new(self.options.seed);
        let n_voip = self.voip.len() as u32;
        for (i, s) in self.voip.iter().enumerate() {
            if let Some(t) = s.next_emit() {
                sim.schedule(t, EventKind::SourceEmit, i as u32, None)?;
            }
        }
        for (i, s) in self.ftp.iter().enumerate() {
            if let Some(t) = s.next_request() {
                sim.schedule(t, EventKind::SourceEmit, n_voip + i as u32, None)?;
            }
        }
        let stats = sim.run_until(duration, &mut self)?;

        let mut in_flight = [0u64; 8];
        for p in self.in_transit.values().chain(self.ports.iter().flat_map(|port| port.qdisc.packets())) {
            in_flight[p.tos().index()] += 1;
        }
        let summary = self.metrics.summary(
            RunMeta {
                discipline: self.options.qdisc.kind.to_string(),
                seed: self.options.seed,
                duration_s: duration.as_secs_f64(),
                events_processed: stats.events_processed,
            },
            in_flight,
        );
        Ok(NetworkRun {
            summary,
            stats,
            port_counters: self.ports.iter().map(|p| p.qdisc.counters()).collect(),
            drop_log: self.drop_log,
            departures: self.departures,
            metrics: self.metrics,
            duration,
        })
    }

    fn inject(&mut self, packet: Packet, sim: &mut Simulator) -> Result<(), Error> {
        self.metrics.record_sent(&packet, sim.now());
        self.forward(packet, sim)
    }

    /// Offers the packet to the port of its next route link.
    fn forward(&mut self, packet: Packet, sim: &mut Simulator) -> Result<(), Error> {
        let route = self
            .routes
            .route(packet.src(), packet.dst())
            .expect("sources are placed on distinct hosts");
        let link = route[usize::from(packet.hop)];
        let now = sim.now();
        if let EnqueueOutcome::Dropped(p) = self.ports[link.0 as usize].offer(packet, sim) {
            self.log_drop(&p, link, DropReason::BufferFull, now);
        }
        Ok(())
    }

    fn log_drop(&mut self, packet: &Packet, link: LinkId, reason: DropReason, now: SimTime) {
        self.metrics.record_drop(packet, reason, now);
        if let Some(log) = self.drop_log.as_mut() {
            log.push(DropLogEntry {
                time: now,
                port: link,
                tos: packet.tos().value(),
                flow_id: packet.flow().id(),
                reason,
            });
        }
    }

    fn on_source(&mut self, index: u32, sim: &mut Simulator) -> Result<(), Error> {
        let now = sim.now();
        let n_voip = self.voip.len();
        let (packets, next) = if (index as usize) < n_voip {
            let (p, next) = self.voip[index as usize].emit(now, &mut self.ids);
            (vec![p], next)
        } else {
            self.ftp[index as usize - n_voip].emit(now, &mut self.ids)
        };
        for p in packets {
            self.inject(p, sim)?;
        }
        if let Some(t) = next {
            sim.schedule(t, EventKind::SourceEmit, index, None)?;
        }
        Ok(())
    }

    fn on_port_ready(&mut self, link_id: LinkId, sim: &mut Simulator) {
        let now = sim.now();
        let Some(mut packet) = self.ports[link_id.0 as usize].on_ready(now) else {
            return;
        };
        let link = *self.topology.link(link_id);
        let tx = link.transmission_delay(packet.size_bytes());
        if let Some(d) = self.departures.as_mut() {
            d.push(Departure {
                time: now,
                link: link_id,
                packet: packet.id(),
            });
        }
        packet.arrived_at = now;
        let id = packet.id();
        self.in_transit.insert(id, packet);
        sim.schedule_in(tx, EventKind::PortDequeueReady, link_id.0, None);
        sim.schedule_in(tx + link.prop_delay, EventKind::LinkDeliver, link_id.0, Some(id));
    }

    fn on_deliver(&mut self, link_id: LinkId, packet_id: PacketId, sim: &mut Simulator) -> Result<(), Error> {
        let now = sim.now();
        let mut packet = self.in_transit.remove(&packet_id).expect("delivered packet is in transit");
        let link = *self.topology.link(link_id);
        let p_err = link.error_probability(packet.size_bytes());
        if p_err > 0.0 && self.error_rng.uniform() < p_err {
            self.log_drop(&packet, link_id, DropReason::BitError, now);
            return Ok(());
        }
        packet.arrived_at = now;
        if self.topology.node(link.dst).is_router() {
            packet.hop += 1;
            return self.forward(packet, sim);
        }
        let sink = self.sinks.get_mut(&link.dst).expect("every host has a sink");
        let record = sink.receive(&packet, now).map_err(Error::from)?;
        self.metrics.record_delivery(&record)?;
        Ok(())
    }
}

impl Handler for Network {
    type Error = Error;

    fn on_event(&mut self, event: Event, sim: &mut Simulator) -> Result<(), Error> {
        match event.kind {
            EventKind::SourceEmit => self.on_source(event.target, sim),
            EventKind::PortDequeueReady => {
                self.on_port_ready(LinkId(event.target), sim);
                Ok(())
            }
            EventKind::LinkDeliver => {
                let id = event.payload.expect("link deliveries carry a packet");
                self.on_deliver(LinkId(event.target), id, sim)
            }
            EventKind::StatsSample | EventKind::RunEnd => Ok(()),
        }
    }
}

/// Sum of per-hop serialization and propagation for a packet on `route`
/// with no queueing anywhere.
pub fn path_latency(topology: &Topology, route: &[LinkId], size_bytes: u32) -> SimTime {
    route
        .iter()
        .map(|&l| {
            let link = topology.link(l);
            link.transmission_delay(size_bytes) + link.prop_delay
        })
        .fold(SimTime::ZERO, |a, b| a + b)
}
