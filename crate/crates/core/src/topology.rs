//! Step topology: one router per step joined in a chain, hosts star-attached
//! to their step's router, full-duplex links modeled as directed pairs.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::error::TopologyError;
use crate::kernel::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LinkId(pub u32);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A host position: `index`-th host attached to the router of `step`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HostAddr {
    pub step: u32,
    pub index: u32,
}

impl fmt::Display for HostAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}.{}", self.step, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Router { step: u32 },
    Host(HostAddr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_router(&self) -> bool {
        matches!(self.kind, NodeKind::Router { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub rate_bps: u64,
    pub prop_delay: SimTime,
    pub ber: f64,
}

impl Link {
    /// Serialization time of `size_bytes` on this link, rounded to the nearest ns.
    pub fn transmission_delay(&self, size_bytes: u32) -> SimTime {
        link_transmission_delay(self, size_bytes)
    }

    pub fn error_probability(&self, size_bytes: u32) -> f64 {
        link_error_probability(self, size_bytes)
    }
}

pub fn link_transmission_delay(link: &Link, size_bytes: u32) -> SimTime {
    let bits = u128::from(size_bytes) * 8;
    let rate = u128::from(link.rate_bps);
    let ns = (bits * 1_000_000_000 + rate / 2) / rate;
    SimTime::from_nanos(ns as u64)
}

/// Probability that at least one of the packet's bits is flipped,
/// `1 - (1 - ber)^(8 * size_bytes)`.
pub fn link_error_probability(link: &Link, size_bytes: u32) -> f64 {
    if link.ber <= 0.0 {
        return 0.0;
    }
    let bits = 8.0 * f64::from(size_bytes);
    -(bits * (-link.ber).ln_1p()).exp_m1()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSpec {
    pub steps: u32,
    pub hosts_per_step: u32,
    pub backbone_rate_bps: u64,
    pub access_rate_bps: u64,
    pub backbone_prop_delay: SimTime,
    pub access_prop_delay: SimTime,
    pub ber: f64,
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec {
            steps: 4,
            hosts_per_step: 2,
            backbone_rate_bps: 10_000_000,
            access_rate_bps: 10_000_000,
            backbone_prop_delay: SimTime::from_micros(5),
            access_prop_delay: SimTime::from_micros(5),
            ber: 0.0,
        }
    }
}

impl StepSpec {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let fail = |m: &str| Err(TopologyError::InvalidSpec(m.to_owned()));
        if self.steps == 0 {
            return fail("steps must be at least 1");
        }
        if self.hosts_per_step == 0 {
            return fail("hosts_per_step must be at least 1");
        }
        if self.backbone_rate_bps == 0 || self.access_rate_bps == 0 {
            return fail("link rates must be positive");
        }
        if !(0.0..1.0).contains(&self.ber) {
            return fail("ber must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Topology {
    spec: StepSpec,
    nodes: Vec<Node>,
    links: Vec<Link>,
    outgoing: Vec<Vec<LinkId>>,
    by_endpoints: BTreeMap<(NodeId, NodeId), LinkId>,
}

/// Builds routers `0..S`, then hosts in `(step, index)` order; backbone
/// links first (forward, then reverse per router pair), then each host's
/// uplink followed by its downlink.
pub fn build_step_topology(spec: StepSpec) -> Result<Topology, TopologyError> {
    spec.validate()?;
    let s = spec.steps;
    let h = spec.hosts_per_step;

    let mut nodes = Vec::with_capacity((s + s * h) as usize);
    for step in 0..s {
        nodes.push(Node {
            id: NodeId(step),
            kind: NodeKind::Router { step },
        });
    }
    for step in 0..s {
        for index in 0..h {
            nodes.push(Node {
                id: NodeId(s + step * h + index),
                kind: NodeKind::Host(HostAddr { step, index }),
            });
        }
    }

    let mut links = Vec::new();
    let mut push = |src: NodeId, dst: NodeId, rate_bps: u64, prop_delay: SimTime| {
        let id = LinkId(links.len() as u32);
        links.push(Link {
            id,
            src,
            dst,
            rate_bps,
            prop_delay,
            ber: spec.ber,
        });
    };
    for step in 0..s.saturating_sub(1) {
        let (a, b) = (NodeId(step), NodeId(step + 1));
        push(a, b, spec.backbone_rate_bps, spec.backbone_prop_delay);
        push(b, a, spec.backbone_rate_bps, spec.backbone_prop_delay);
    }
    for step in 0..s {
        for index in 0..h {
            let host = NodeId(s + step * h + index);
            let router = NodeId(step);
            push(host, router, spec.access_rate_bps, spec.access_prop_delay);
            push(router, host, spec.access_rate_bps, spec.access_prop_delay);
        }
    }

    let mut outgoing = vec![Vec::new(); nodes.len()];
    let mut by_endpoints = BTreeMap::new();
    for link in &links {
        outgoing[link.src.0 as usize].push(link.id);
        by_endpoints.insert((link.src, link.dst), link.id);
    }

    Ok(Topology {
        spec,
        nodes,
        links,
        outgoing,
        by_endpoints,
    })
}

impl Topology {
    pub fn spec(&self) -> &StepSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }

    pub fn routers(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_router())
    }

    pub fn hosts(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.is_router())
    }

    pub fn outgoing(&self, node: NodeId) -> &[LinkId] {
        &self.outgoing[node.0 as usize]
    }

    pub fn link_between(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.by_endpoints.get(&(src, dst)).copied()
    }

    pub fn router(&self, step: u32) -> Option<NodeId> {
        (step < self.spec.steps).then_some(NodeId(step))
    }

    pub fn host(&self, addr: HostAddr) -> Option<NodeId> {
        (addr.step < self.spec.steps && addr.index < self.spec.hosts_per_step)
            .then(|| NodeId(self.spec.steps + addr.step * self.spec.hosts_per_step + addr.index))
    }

    pub fn host_addr(&self, id: NodeId) -> Option<HostAddr> {
        match self.nodes.get(id.0 as usize)?.kind {
            NodeKind::Host(addr) => Some(addr),
            NodeKind::Router { .. } => None,
        }
    }

    pub fn is_backbone(&self, link: LinkId) -> bool {
        let l = self.link(link);
        self.node(l.src).is_router() && self.node(l.dst).is_router()
    }

    /// One line per directed link: `src dst rate_bps prop_delay_ns ber`.
    pub fn adjacency_dump(&self) -> String {
        let mut out = String::new();
        for l in &self.links {
            writeln!(
                out,
                "{} {} {} {} {}",
                l.src,
                l.dst,
                l.rate_bps,
                l.prop_delay.as_nanos(),
                l.ber
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Host-to-host paths. Every ordered pair of distinct hosts has exactly one.
#[derive(Clone, Debug, Default)]
pub struct RoutingTable {
    routes: BTreeMap<(NodeId, NodeId), Vec<LinkId>>,
}

impl RoutingTable {
    pub fn route(&self, src: NodeId, dst: NodeId) -> Option<&[LinkId]> {
        self.routes.get(&(src, dst)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &Vec<LinkId>)> {
        self.routes.iter()
    }
}

/// Uplink, the router chain between the two steps, downlink.
pub fn compute_routes(topology: &Topology) -> RoutingTable {
    let hosts: Vec<(NodeId, HostAddr)> = topology
        .hosts()
        .map(|n| (n.id, topology.host_addr(n.id).expect("host")))
        .collect();
    let hop = |a: NodeId, b: NodeId| topology.link_between(a, b).expect("adjacent nodes");

    let mut routes = BTreeMap::new();
    for &(src, sa) in &hosts {
        for &(dst, da) in &hosts {
            if src == dst {
                continue;
            }
            let mut path = Vec::with_capacity(sa.step.abs_diff(da.step) as usize + 2);
            path.push(hop(src, NodeId(sa.step)));
            let mut step = sa.step;
            while step != da.step {
                let next = if da.step > step { step + 1 } else { step - 1 };
                path.push(hop(NodeId(step), NodeId(next)));
                step = next;
            }
            path.push(hop(NodeId(da.step), dst));
            routes.insert((src, dst), path);
        }
    }
    RoutingTable { routes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn spec(steps: u32, hosts: u32) -> StepSpec {
        StepSpec {
            steps,
            hosts_per_step: hosts,
            ..StepSpec::default()
        }
    }

    fn count(t: &Topology) -> (usize, usize) {
        let backbone = t.links().iter().filter(|l| t.is_backbone(l.id)).count();
        (backbone, t.links().len() - backbone)
    }

    #[test]
    fn minimal_topology() {
        let t = build_step_topology(spec(1, 1)).unwrap();
        assert_eq!(t.routers().count(), 1);
        assert_eq!(t.hosts().count(), 1);
        assert_eq!(count(&t), (0, 2));
    }

    #[test]
    fn four_steps_two_hosts() {
        let t = build_step_topology(spec(4, 2)).unwrap();
        assert_eq!(t.routers().count(), 4);
        assert_eq!(t.hosts().count(), 8);
        assert_eq!(count(&t), (6, 16));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(build_step_topology(spec(0, 1)).is_err());
        assert!(build_step_topology(spec(1, 0)).is_err());
        let mut s = spec(2, 2);
        s.backbone_rate_bps = 0;
        assert!(build_step_topology(s).is_err());
        s = spec(2, 2);
        s.ber = 1.0;
        assert!(build_step_topology(s).is_err());
    }

    #[test]
    fn edge_counts_match_closed_form() {
        for s in 1..=16u32 {
            for h in 1..=8u32 {
                let t = build_step_topology(spec(s, h)).unwrap();
                let (bb, acc) = count(&t);
                assert_eq!(bb, 2 * (s as usize - 1), "S={s} H={h}");
                assert_eq!(acc, 2 * (s * h) as usize, "S={s} H={h}");
            }
        }
    }

    fn router_degree(t: &Topology, r: NodeId) -> usize {
        t.outgoing(r)
            .iter()
            .filter(|&&l| t.node(t.link(l).dst).is_router())
            .count()
    }

    #[test]
    fn routers_form_a_path() {
        for s in 2..=10u32 {
            let t = build_step_topology(spec(s, 2)).unwrap();
            let degrees: Vec<_> = t.routers().map(|r| router_degree(&t, r.id)).collect();
            assert_eq!(degrees.iter().filter(|&&d| d == 1).count(), 2);
            assert_eq!(degrees.iter().filter(|&&d| d == 2).count(), s as usize - 2);
            for i in 0..s - 1 {
                assert!(t.link_between(NodeId(i), NodeId(i + 1)).is_some());
                assert!(t.link_between(NodeId(i + 1), NodeId(i)).is_some());
            }
        }
    }

    #[test]
    fn every_host_has_one_access_pair() {
        let t = build_step_topology(spec(3, 4)).unwrap();
        for h in t.hosts() {
            let out = t.outgoing(h.id);
            assert_eq!(out.len(), 1);
            let r = t.link(out[0]).dst;
            assert!(t.node(r).is_router());
            assert!(t.link_between(r, h.id).is_some());
        }
    }

    /// Components of the router subgraph with one backbone pair removed.
    fn router_components_without(t: &Topology, cut: (NodeId, NodeId)) -> usize {
        let routers: Vec<_> = t.routers().map(|n| n.id).collect();
        let mut seen = vec![false; routers.len()];
        let mut components = 0;
        for &start in &routers {
            if seen[start.0 as usize] {
                continue;
            }
            components += 1;
            let mut queue = VecDeque::from([start]);
            seen[start.0 as usize] = true;
            while let Some(n) = queue.pop_front() {
                for &l in t.outgoing(n) {
                    let d = t.link(l).dst;
                    if !t.node(d).is_router() || (n, d) == cut || (d, n) == cut {
                        continue;
                    }
                    if !seen[d.0 as usize] {
                        seen[d.0 as usize] = true;
                        queue.push_back(d);
                    }
                }
            }
        }
        components
    }

    #[test]
    fn backbone_failure_splits_into_two_components() {
        for s in 2..=8u32 {
            let t = build_step_topology(spec(s, 1)).unwrap();
            for i in 0..s - 1 {
                assert_eq!(router_components_without(&t, (NodeId(i), NodeId(i + 1))), 2);
            }
        }
    }

    #[test]
    fn same_step_route_has_two_links() {
        let t = build_step_topology(spec(4, 2)).unwrap();
        let r = compute_routes(&t);
        let a = t.host(HostAddr { step: 0, index: 0 }).unwrap();
        let b = t.host(HostAddr { step: 0, index: 1 }).unwrap();
        let path = r.route(a, b).unwrap();
        assert_eq!(path.len(), 2);
        assert!(path.iter().all(|&l| !t.is_backbone(l)));
    }

    #[test]
    fn cross_chain_route_length() {
        let t = build_step_topology(spec(4, 2)).unwrap();
        let r = compute_routes(&t);
        let a = t.host(HostAddr { step: 0, index: 0 }).unwrap();
        let b = t.host(HostAddr { step: 3, index: 1 }).unwrap();
        assert_eq!(r.route(a, b).unwrap().len(), 5);
    }

    /// Independent shortest path by BFS over node adjacency.
    fn bfs_path(t: &Topology, src: NodeId, dst: NodeId) -> Vec<LinkId> {
        let mut prev: Vec<Option<LinkId>> = vec![None; t.nodes().len()];
        let mut seen = vec![false; t.nodes().len()];
        let mut queue = VecDeque::from([src]);
        seen[src.0 as usize] = true;
        while let Some(n) = queue.pop_front() {
            if n == dst {
                break;
            }
            for &l in t.outgoing(n) {
                let d = t.link(l).dst;
                if !seen[d.0 as usize] {
                    seen[d.0 as usize] = true;
                    prev[d.0 as usize] = Some(l);
                    queue.push_back(d);
                }
            }
        }
        let mut path = Vec::new();
        let mut at = dst;
        while let Some(l) = prev[at.0 as usize] {
            path.push(l);
            at = t.link(l).src;
        }
        path.reverse();
        path
    }

    #[test]
    fn routes_match_bfs_and_are_symmetric() {
        for s in 1..=6u32 {
            for h in 1..=3u32 {
                let t = build_step_topology(spec(s, h)).unwrap();
                let table = compute_routes(&t);
                let n_hosts = (s * h) as usize;
                assert_eq!(table.len(), n_hosts * (n_hosts - 1));
                for (&(src, dst), path) in table.iter() {
                    assert_eq!(path, &bfs_path(&t, src, dst));
                    let sa = t.host_addr(src).unwrap();
                    let da = t.host_addr(dst).unwrap();
                    assert_eq!(path.len(), sa.step.abs_diff(da.step) as usize + 2);

                    let back: Vec<_> = table
                        .route(dst, src)
                        .unwrap()
                        .iter()
                        .rev()
                        .map(|&l| {
                            let l = t.link(l);
                            t.link_between(l.dst, l.src).unwrap()
                        })
                        .collect();
                    assert_eq!(path, &back);
                }
            }
        }
    }

    #[test]
    fn transmission_delay_arithmetic() {
        let t = build_step_topology(spec(1, 1)).unwrap();
        let l = t.link(LinkId(0));
        assert_eq!(l.transmission_delay(1500), SimTime::from_micros(1_200));
        assert_eq!(l.transmission_delay(200), SimTime::from_micros(160));
    }

    #[test]
    fn error_probability_values() {
        let mut s = spec(1, 1);
        let zero = build_step_topology(s).unwrap().link(LinkId(0)).error_probability(1500);
        assert_eq!(zero, 0.0);

        s.ber = 1e-5;
        let t = build_step_topology(s).unwrap();
        let l = t.link(LinkId(0));
        let p125 = l.error_probability(125);
        let p250 = l.error_probability(250);
        // Cross-checks by the exp/ln form and by direct powering.
        assert!((p125 - (1.0 - (1000.0 * (1.0 - 1e-5f64).ln()).exp())).abs() < 1e-12);
        assert!((p125 - (1.0 - (1.0 - 1e-5f64).powi(1000))).abs() < 1e-12);
        assert!((p125 - 0.009950).abs() < 5e-7);
        assert!((p250 - 0.019801).abs() < 5e-7);
        assert!(p250 > p125);
    }

    #[test]
    fn adjacency_dump_format() {
        let t = build_step_topology(spec(2, 1)).unwrap();
        let dump = t.adjacency_dump();
        let lines: Vec<_> = dump.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "0 1 10000000 5000 0");
        assert_eq!(lines[2], "2 0 10000000 5000 0");
    }
}
