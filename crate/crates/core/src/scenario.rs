//! Scenario files, run orchestration, and the FIFO/PQ/WFQ comparison.
//!
//! A scenario is a flat sectioned key-value text file:
//!
//! ```text
//! # comment
//! [topology]
//! steps = 4
//! [qdisc]
//! kind = wfq
//! weight.6 = 6
//! [voip.0]
//! src = h0.0
//! dst = h3.0
//! [ftp.0]
//! src = h0.1
//! dst = h3.1
//! [run]
//! duration_s = 60
//! ```
//!
//! Hosts are written `h<step>.<index>`. Unknown sections and keys are
//! rejected; every omitted key takes its documented default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::thread;

use serde::Serialize;

use crate::error::{Error, MetricsError, ScenarioError};
use crate::kernel::SimTime;
use crate::metrics::{self, Summary};
use crate::network::{drop_log_csv, Network, NetworkOptions, NetworkRun};
use crate::qdisc::{ClassId, QdiscConfig, QdiscKind};
use crate::topology::{build_step_topology, compute_routes, HostAddr, StepSpec, Topology};
use crate::traffic::{FtpSourceSpec, VoipSourceSpec};

pub type RunResult = NetworkRun;

/// `count` identical voice sources between one host pair. Replica `i`
/// starts at `start + i * stagger`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoipPlacement {
    pub src: HostAddr,
    pub dst: HostAddr,
    pub count: u32,
    pub stagger: SimTime,
    pub frame_interval: SimTime,
    pub payload_bytes: u32,
    pub header_bytes: u32,
    pub start: SimTime,
    /// `None` runs to the end of the scenario.
    pub stop: Option<SimTime>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FtpPlacement {
    pub src: HostAddr,
    pub dst: HostAddr,
    pub mean_interrequest: SimTime,
    pub file_size_bytes: u64,
    pub segment_payload_bytes: u32,
    pub header_bytes: u32,
    pub start: SimTime,
    pub stop: Option<SimTime>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub step_spec: StepSpec,
    pub voip: Vec<VoipPlacement>,
    pub ftp: Vec<FtpPlacement>,
    pub qdisc: QdiscConfig,
    pub duration: SimTime,
    pub seed: u64,
    pub bucket_width: SimTime,
    pub drop_log: bool,
}

/// The scenarios shipped in the repository's `scenarios/` directory.
pub const BUNDLED: [(&str, &str); 3] = [
    ("uncongested", include_str!("../../../scenarios/uncongested.scn")),
    ("overload", include_str!("../../../scenarios/overload.scn")),
    ("sweep", include_str!("../../../scenarios/sweep.scn")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text).expect("bundled scenarios parse"))
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
}

/// Sections in file order, each with its keys.
#[derive(Clone, Debug, Default)]
struct RawScenario {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

const TOPOLOGY_KEYS: &[&str] = &[
    "steps",
    "hosts_per_step",
    "access_rate_bps",
    "backbone_rate_bps",
    "access_prop_delay_s",
    "backbone_prop_delay_s",
    "ber",
];
const QDISC_KEYS: &[&str] = &["kind", "buffer_packets", "pq_levels"];
const VOIP_KEYS: &[&str] = &[
    "src",
    "dst",
    "count",
    "stagger_s",
    "frame_interval_s",
    "payload_bytes",
    "header_bytes",
    "start_s",
    "stop_s",
];
const FTP_KEYS: &[&str] = &[
    "src",
    "dst",
    "mean_interrequest_s",
    "file_size_bytes",
    "segment_payload_bytes",
    "header_bytes",
    "start_s",
    "stop_s",
];
const RUN_KEYS: &[&str] = &["duration_s", "seed", "bucket_width_s", "drop_log"];

/// Line 0 marks values that came from an override.
fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    if line == 0 {
        ScenarioError::Override(message.into())
    } else {
        ScenarioError::Parse {
            line,
            message: message.into(),
        }
    }
}

fn check_section(name: &str, line: usize) -> Result<(), ScenarioError> {
    let ok = match name.split_once('.') {
        None => matches!(name, "topology" | "qdisc" | "run"),
        Some((kind, idx)) => matches!(kind, "voip" | "ftp") && !idx.is_empty() && idx.parse::<u32>().is_ok(),
    };
    if ok {
        Ok(())
    } else {
        Err(parse_err(line, format!("unknown section `[{name}]`")))
    }
}

fn check_key(section: &str, key: &str, line: usize) -> Result<(), ScenarioError> {
    let known = match section.split_once('.').map_or(section, |(k, _)| k) {
        "topology" => TOPOLOGY_KEYS.contains(&key),
        "qdisc" => QDISC_KEYS.contains(&key) || key.strip_prefix("weight.").is_some_and(|t| t.parse::<u8>().is_ok()),
        "voip" => VOIP_KEYS.contains(&key),
        "ftp" => FTP_KEYS.contains(&key),
        "run" => RUN_KEYS.contains(&key),
        _ => false,
    };
    if known {
        Ok(())
    } else {
        Err(parse_err(line, format!("unknown key `{key}` in section [{section}]")))
    }
}

impl RawScenario {
    fn parse(text: &str) -> Result<RawScenario, ScenarioError> {
        let mut raw = RawScenario::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(n, "unterminated section header"))?
                    .trim();
                check_section(name, n)?;
                if raw.sections.contains_key(name) {
                    return Err(parse_err(n, format!("duplicate section `[{name}]`")));
                }
                raw.sections.insert(name.to_owned(), BTreeMap::new());
                current = Some(name.to_owned());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(n, format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let section = current.as_deref().ok_or_else(|| parse_err(n, "key outside of any section"))?;
            check_key(section, key, n)?;
            let keys = raw.sections.get_mut(section).expect("section registered");
            if keys.contains_key(key) {
                return Err(parse_err(n, format!("duplicate key `{key}`")));
            }
            keys.insert(
                key.to_owned(),
                Entry {
                    value: value.to_owned(),
                    line: n,
                },
            );
        }
        Ok(raw)
    }

    /// Applies `section.key=value`; `voip.N.key` and `ftp.N.key` address
    /// numbered sections.
    fn set(&mut self, assignment: &str) -> Result<(), ScenarioError> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| parse_err(0, format!("override `{assignment}` is not `section.key=value`")))?;
        let path = path.trim();
        let parts: Vec<&str> = path.splitn(3, '.').collect();
        let (section, key) = match parts.as_slice() {
            [s, n, k] if *s == "voip" || *s == "ftp" => (format!("{s}.{n}"), (*k).to_owned()),
            [s, rest @ ..] if !rest.is_empty() => ((*s).to_owned(), rest.join(".")),
            _ => return Err(parse_err(0, format!("override `{path}` lacks a section"))),
        };
        check_section(&section, 0)?;
        check_key(&section, &key, 0)?;
        self.sections.entry(section).or_default().insert(
            key,
            Entry {
                value: value.trim().to_owned(),
                line: 0,
            },
        );
        Ok(())
    }
}

struct Section<'a> {
    name: &'a str,
    keys: Option<&'a BTreeMap<String, Entry>>,
}

impl Section<'_> {
    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ScenarioError> {
        match self.keys.and_then(|k| k.get(key)) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|_| parse_err(e.line, format!("invalid value `{}` for {}.{key}", e.value, self.name))),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, ScenarioError> {
        let e = self
            .keys
            .and_then(|k| k.get(key))
            .ok_or_else(|| ScenarioError::Validation(format!("[{}] requires `{key}`", self.name)))?;
        e.value
            .parse()
            .map_err(|_| parse_err(e.line, format!("invalid value `{}` for {}.{key}", e.value, self.name)))
    }

    fn secs(&self, key: &str, default: SimTime) -> Result<SimTime, ScenarioError> {
        match self.keys.and_then(|k| k.get(key)) {
            None => Ok(default),
            Some(e) => parse_secs(&e.value).ok_or_else(|| {
                parse_err(e.line, format!("invalid duration `{}` for {}.{key} (seconds, >= 0)", e.value, self.name))
            }),
        }
    }

    fn opt_secs(&self, key: &str) -> Result<Option<SimTime>, ScenarioError> {
        if self.keys.is_some_and(|k| k.contains_key(key)) {
            self.secs(key, SimTime::ZERO).map(Some)
        } else {
            Ok(None)
        }
    }

    fn host(&self, key: &str) -> Result<HostAddr, ScenarioError> {
        let e = self
            .keys
            .and_then(|k| k.get(key))
            .ok_or_else(|| ScenarioError::Validation(format!("[{}] requires `{key}`", self.name)))?;
        parse_host(&e.value).ok_or_else(|| {
            parse_err(e.line, format!("invalid host `{}` for {}.{key}; expected h<step>.<index>", e.value, self.name))
        })
    }
}

fn parse_secs(s: &str) -> Option<SimTime> {
    let v: f64 = s.parse().ok()?;
    (v.is_finite() && v >= 0.0).then(|| SimTime::from_secs_f64(v))
}

fn parse_host(s: &str) -> Option<HostAddr> {
    let (step, index) = s.strip_prefix('h')?.split_once('.')?;
    Some(HostAddr {
        step: step.parse().ok()?,
        index: index.parse().ok()?,
    })
}

fn numbered<'a>(raw: &'a RawScenario, kind: &str) -> Vec<(u32, &'a str)> {
    let mut v: Vec<(u32, &str)> = raw
        .sections
        .keys()
        .filter_map(|name| {
            let (k, idx) = name.split_once('.')?;
            (k == kind).then(|| (idx.parse().expect("checked at parse"), name.as_str()))
        })
        .collect();
    v.sort();
    v
}

impl RawScenario {
    fn section<'a>(&'a self, name: &'a str) -> Section<'a> {
        Section {
            name,
            keys: self.sections.get(name),
        }
    }

    fn build(&self) -> Result<Scenario, ScenarioError> {
        let defaults = StepSpec::default();
        let t = self.section("topology");
        let step_spec = StepSpec {
            steps: t.get("steps", defaults.steps)?,
            hosts_per_step: t.get("hosts_per_step", defaults.hosts_per_step)?,
            backbone_rate_bps: t.get("backbone_rate_bps", defaults.backbone_rate_bps)?,
            access_rate_bps: t.get("access_rate_bps", defaults.access_rate_bps)?,
            backbone_prop_delay: t.secs("backbone_prop_delay_s", defaults.backbone_prop_delay)?,
            access_prop_delay: t.secs("access_prop_delay_s", defaults.access_prop_delay)?,
            ber: t.get("ber", defaults.ber)?,
        };

        let q = self.section("qdisc");
        let mut qdisc = QdiscConfig::default();
        if let Some(e) = q.keys.and_then(|k| k.get("kind")) {
            qdisc.kind = e
                .value
                .parse()
                .map_err(|_| parse_err(e.line, format!("unknown discipline `{}`", e.value)))?;
        }
        qdisc.buffer_capacity_packets = q.get("buffer_packets", qdisc.buffer_capacity_packets)?;
        qdisc.pq_levels = q.get("pq_levels", qdisc.pq_levels)?;
        for (key, e) in q.keys.into_iter().flatten() {
            if let Some(tos) = key.strip_prefix("weight.") {
                let class = tos
                    .parse::<u8>()
                    .ok()
                    .and_then(|t| ClassId::new(t).ok())
                    .ok_or_else(|| parse_err(e.line, format!("weight key `{key}` names an invalid ToS")))?;
                let w: f64 = e
                    .value
                    .parse()
                    .map_err(|_| parse_err(e.line, format!("invalid weight `{}`", e.value)))?;
                qdisc.wfq_weights.insert(class, w);
            }
        }

        let mut voip = Vec::new();
        for (_, name) in numbered(self, "voip") {
            let s = self.section(name);
            voip.push(VoipPlacement {
                src: s.host("src")?,
                dst: s.host("dst")?,
                count: s.get("count", 1)?,
                stagger: s.secs("stagger_s", SimTime::ZERO)?,
                frame_interval: s.secs("frame_interval_s", SimTime::from_millis(20))?,
                payload_bytes: s.get("payload_bytes", 160)?,
                header_bytes: s.get("header_bytes", 40)?,
                start: s.secs("start_s", SimTime::ZERO)?,
                stop: s.opt_secs("stop_s")?,
            });
        }
        let mut ftp = Vec::new();
        for (_, name) in numbered(self, "ftp") {
            let s = self.section(name);
            ftp.push(FtpPlacement {
                src: s.host("src")?,
                dst: s.host("dst")?,
                mean_interrequest: s.secs("mean_interrequest_s", SimTime::from_secs(10))?,
                file_size_bytes: s.get("file_size_bytes", 1_000_000)?,
                segment_payload_bytes: s.get("segment_payload_bytes", 1460)?,
                header_bytes: s.get("header_bytes", 40)?,
                start: s.secs("start_s", SimTime::ZERO)?,
                stop: s.opt_secs("stop_s")?,
            });
        }

        let r = self.section("run");
        let run_duration = r.required::<String>("duration_s")?;
        let duration = parse_secs(&run_duration)
            .ok_or_else(|| ScenarioError::Validation(format!("invalid run duration `{run_duration}`")))?;
        let scenario = Scenario {
            step_spec,
            voip,
            ftp,
            qdisc,
            duration,
            seed: r.get("seed", 1)?,
            bucket_width: r.secs("bucket_width_s", SimTime::from_secs(1))?,
            drop_log: r.get("drop_log", false)?,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_with(text, &[])
}

/// Parses, then applies `section.key=value` overrides before defaults are
/// filled and the result validated.
pub fn parse_scenario_with(text: &str, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    let mut raw = RawScenario::parse(text)?;
    for o in overrides {
        raw.set(o)?;
    }
    raw.build()
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Validation(m));
        if let Err(e) = self.step_spec.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.qdisc.validate() {
            return invalid(e.to_string());
        }
        if self.duration == SimTime::ZERO {
            return invalid("duration must be positive".into());
        }
        if self.bucket_width == SimTime::ZERO {
            return invalid("bucket width must be positive".into());
        }
        if self.voip.is_empty() && self.ftp.is_empty() {
            return invalid("at least one traffic source is required".into());
        }
        let spec = &self.step_spec;
        let exists = |h: &HostAddr| h.step < spec.steps && h.index < spec.hosts_per_step;
        for (i, v) in self.voip.iter().enumerate() {
            for h in [&v.src, &v.dst] {
                if !exists(h) {
                    return invalid(format!("voip.{i}: host {h} does not exist"));
                }
            }
            if v.src == v.dst {
                return invalid(format!("voip.{i}: source and destination are the same host"));
            }
            if v.count == 0 || v.frame_interval == SimTime::ZERO || v.payload_bytes == 0 {
                return invalid(format!("voip.{i}: count, frame interval and payload must be positive"));
            }
        }
        for (i, f) in self.ftp.iter().enumerate() {
            for h in [&f.src, &f.dst] {
                if !exists(h) {
                    return invalid(format!("ftp.{i}: host {h} does not exist"));
                }
            }
            if f.src == f.dst {
                return invalid(format!("ftp.{i}: source and destination are the same host"));
            }
            if f.mean_interrequest == SimTime::ZERO || f.file_size_bytes == 0 || f.segment_payload_bytes == 0 {
                return invalid(format!("ftp.{i}: inter-request time, file size and segment size must be positive"));
            }
        }
        Ok(())
    }

    pub fn with_kind(&self, kind: QdiscKind) -> Scenario {
        let mut s = self.clone();
        s.qdisc.kind = kind;
        s
    }

    pub fn topology(&self) -> Result<Topology, Error> {
        Ok(build_step_topology(self.step_spec)?)
    }

    /// Number of individual voice sources after expanding `count`.
    pub fn voip_source_count(&self) -> u32 {
        self.voip.iter().map(|v| v.count).sum()
    }

    /// The scenario in its file format, every key spelled out.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let s = &self.step_spec;
        let secs = |t: SimTime| t.as_secs_f64();
        let _ = writeln!(o, "[topology]");
        let _ = writeln!(o, "steps = {}", s.steps);
        let _ = writeln!(o, "hosts_per_step = {}", s.hosts_per_step);
        let _ = writeln!(o, "access_rate_bps = {}", s.access_rate_bps);
        let _ = writeln!(o, "backbone_rate_bps = {}", s.backbone_rate_bps);
        let _ = writeln!(o, "access_prop_delay_s = {}", secs(s.access_prop_delay));
        let _ = writeln!(o, "backbone_prop_delay_s = {}", secs(s.backbone_prop_delay));
        let _ = writeln!(o, "ber = {}", s.ber);
        let _ = writeln!(o, "\n[qdisc]");
        let _ = writeln!(o, "kind = {}", self.qdisc.kind);
        let _ = writeln!(o, "buffer_packets = {}", self.qdisc.buffer_capacity_packets);
        let _ = writeln!(o, "pq_levels = {}", self.qdisc.pq_levels);
        let _ = writeln!(o, "# unlisted classes weigh max(tos, 1)");
        for (c, w) in &self.qdisc.wfq_weights {
            let _ = writeln!(o, "weight.{c} = {w}");
        }
        for (i, v) in self.voip.iter().enumerate() {
            let _ = writeln!(o, "\n[voip.{i}]");
            let _ = writeln!(o, "src = {}", v.src);
            let _ = writeln!(o, "dst = {}", v.dst);
            let _ = writeln!(o, "count = {}", v.count);
            let _ = writeln!(o, "stagger_s = {}", secs(v.stagger));
            let _ = writeln!(o, "frame_interval_s = {}", secs(v.frame_interval));
            let _ = writeln!(o, "payload_bytes = {}", v.payload_bytes);
            let _ = writeln!(o, "header_bytes = {}", v.header_bytes);
            let _ = writeln!(o, "start_s = {}", secs(v.start));
            match v.stop {
                Some(t) => {
                    let _ = writeln!(o, "stop_s = {}", secs(t));
                }
                None => {
                    let _ = writeln!(o, "# stop_s: end of run");
                }
            }
        }
        for (i, f) in self.ftp.iter().enumerate() {
            let _ = writeln!(o, "\n[ftp.{i}]");
            let _ = writeln!(o, "src = {}", f.src);
            let _ = writeln!(o, "dst = {}", f.dst);
            let _ = writeln!(o, "mean_interrequest_s = {}", secs(f.mean_interrequest));
            let _ = writeln!(o, "file_size_bytes = {}", f.file_size_bytes);
            let _ = writeln!(o, "segment_payload_bytes = {}", f.segment_payload_bytes);
            let _ = writeln!(o, "header_bytes = {}", f.header_bytes);
            let _ = writeln!(o, "start_s = {}", secs(f.start));
            match f.stop {
                Some(t) => {
                    let _ = writeln!(o, "stop_s = {}", secs(t));
                }
                None => {
                    let _ = writeln!(o, "# stop_s: end of run");
                }
            }
        }
        let _ = writeln!(o, "\n[run]");
        let _ = writeln!(o, "duration_s = {}", secs(self.duration));
        let _ = writeln!(o, "seed = {}", self.seed);
        let _ = writeln!(o, "bucket_width_s = {}", secs(self.bucket_width));
        let _ = writeln!(o, "drop_log = {}", self.drop_log);
        o
    }

    fn source_specs(&self, topo: &Topology) -> (Vec<VoipSourceSpec>, Vec<FtpSourceSpec>) {
        let node = |h: HostAddr| topo.host(h).expect("validated placement");
        let end = |stop: Option<SimTime>| stop.map_or(self.duration, |s| s.min(self.duration));
        let mut voip = Vec::new();
        for v in &self.voip {
            for i in 0..v.count {
                voip.push(VoipSourceSpec {
                    src: node(v.src),
                    dst: node(v.dst),
                    frame_interval: v.frame_interval,
                    payload_bytes: v.payload_bytes,
                    header_bytes: v.header_bytes,
                    start: v.start + SimTime::from_nanos(v.stagger.as_nanos() * u64::from(i)),
                    stop: end(v.stop),
                });
            }
        }
        let ftp = self
            .ftp
            .iter()
            .map(|f| FtpSourceSpec {
                src: node(f.src),
                dst: node(f.dst),
                mean_interrequest: f.mean_interrequest,
                file_size_bytes: f.file_size_bytes,
                segment_payload_bytes: f.segment_payload_bytes,
                header_bytes: f.header_bytes,
                start: f.start,
                stop: end(f.stop),
            })
            .collect();
        (voip, ftp)
    }
}

// ---------------------------------------------------------------------------
// Running

pub fn run_scenario(scenario: &Scenario) -> Result<RunResult, Error> {
    run_scenario_traced(scenario, false)
}

/// Like [`run_scenario`], optionally recording every port departure.
pub fn run_scenario_traced(scenario: &Scenario, record_departures: bool) -> Result<RunResult, Error> {
    scenario.validate()?;
    let topo = scenario.topology()?;
    let routes = compute_routes(&topo);
    let (voip, ftp) = scenario.source_specs(&topo);
    let options = NetworkOptions {
        qdisc: scenario.qdisc.clone(),
        seed: scenario.seed,
        bucket_width: scenario.bucket_width,
        drop_log: scenario.drop_log,
        record_departures,
    };
    Network::new(topo, routes, voip, ftp, options).run(scenario.duration)
}

/// Writes `series.csv`, `summary.json`, `effective-scenario` and, when the
/// drop log is enabled, `drops.csv`.
pub fn write_outputs(scenario: &Scenario, result: &RunResult, dir: &Path) -> Result<(), Error> {
    metrics::export(&result.metrics, &result.summary, result.duration, dir)?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| MetricsError::Io { path, source })
    };
    write("effective-scenario", scenario.to_text())?;
    if let Some(log) = &result.drop_log {
        write("drops.csv", drop_log_csv(log))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Comparison

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    /// Holds only because every discipline produced the same value.
    PassByTie,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self != Verdict::Fail
    }
}

/// Voice-class figures of one discipline's run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VoiceFigures {
    pub discipline: QdiscKind,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub errored: u64,
    pub mean_delay_s: f64,
    pub sent_series: Vec<u64>,
}

impl VoiceFigures {
    fn from_run(kind: QdiscKind, run: &RunResult) -> Self {
        let c = run.summary.class(ClassId::VOICE);
        VoiceFigures {
            discipline: kind,
            sent: c.map_or(0, |c| c.sent_packets),
            received: c.map_or(0, |c| c.received_packets),
            dropped: c.map_or(0, |c| c.dropped_buffer_full),
            errored: c.map_or(0, |c| c.dropped_bit_error),
            mean_delay_s: c.and_then(|c| c.delay_mean_s).unwrap_or(0.0),
            sent_series: run.metrics.sent_series(ClassId::VOICE, run.duration),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerdictLine {
    pub name: &'static str,
    pub expectation: &'static str,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub fifo: VoiceFigures,
    pub pq: VoiceFigures,
    pub wfq: VoiceFigures,
    pub verdicts: Vec<VerdictLine>,
    #[serde(skip)]
    pub summaries: Vec<Summary>,
}

impl ComparisonReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.verdict.passed())
    }

    pub fn verdict(&self, name: &str) -> Option<Verdict> {
        self.verdicts.iter().find(|v| v.name == name).map(|v| v.verdict)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn table(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "{:<6} {:>10} {:>10} {:>10} {:>14}", "qdisc", "sent", "received", "dropped", "mean_delay_s");
        for f in [&self.fifo, &self.pq, &self.wfq] {
            let _ = writeln!(
                o,
                "{:<6} {:>10} {:>10} {:>10} {:>14.6}",
                f.discipline.name(),
                f.sent,
                f.received,
                f.dropped,
                f.mean_delay_s
            );
        }
        for v in &self.verdicts {
            let _ = writeln!(o, "{:<18} {:<34} {:?}", v.name, v.expectation, v.verdict);
        }
        o
    }
}

/// `a >= b >= c`, with a tie across all three reported separately.
fn chain<T: PartialOrd>(a: T, b: T, c: T) -> Verdict {
    if a == b && b == c {
        Verdict::PassByTie
    } else if a >= b && b >= c {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

pub fn evaluate(seed: u64, fifo: VoiceFigures, pq: VoiceFigures, wfq: VoiceFigures) -> ComparisonReport {
    let delay = if fifo.mean_delay_s == wfq.mean_delay_s && fifo.mean_delay_s == pq.mean_delay_s {
        Verdict::PassByTie
    } else if fifo.mean_delay_s >= wfq.mean_delay_s && fifo.mean_delay_s >= pq.mean_delay_s {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let sent = if fifo.sent_series == pq.sent_series && pq.sent_series == wfq.sent_series {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let verdicts = vec![
        VerdictLine {
            name: "drops_ordering",
            expectation: "voice drops FIFO >= WFQ >= PQ",
            verdict: chain(fifo.dropped, wfq.dropped, pq.dropped),
        },
        VerdictLine {
            name: "received_ordering",
            expectation: "voice received PQ >= WFQ >= FIFO",
            verdict: chain(pq.received, wfq.received, fifo.received),
        },
        VerdictLine {
            name: "delay_ordering",
            expectation: "voice delay FIFO >= WFQ, FIFO >= PQ",
            verdict: delay,
        },
        VerdictLine {
            name: "sent_equality",
            expectation: "voice sent series identical",
            verdict: sent,
        },
    ];
    ComparisonReport {
        seed,
        fifo,
        pq,
        wfq,
        verdicts,
        summaries: Vec::new(),
    }
}

/// Runs the scenario under FIFO, PQ and WFQ (concurrently, same seed and
/// sources) and checks the voice orderings.
pub fn compare_disciplines(scenario: &Scenario) -> Result<ComparisonReport, Error> {
    let (report, _) = compare_disciplines_with_runs(scenario)?;
    Ok(report)
}

/// Also returns the three runs, in FIFO, PQ, WFQ order.
pub fn compare_disciplines_with_runs(scenario: &Scenario) -> Result<(ComparisonReport, Vec<(Scenario, RunResult)>), Error> {
    scenario.validate()?;
    let runs: Vec<Result<(Scenario, RunResult), Error>> = thread::scope(|scope| {
        let handles: Vec<_> = QdiscKind::ALL
            .iter()
            .map(|&kind| {
                let s = scenario.with_kind(kind);
                scope.spawn(move || run_scenario(&s).map(|r| (s, r)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let fig = |i: usize| VoiceFigures::from_run(QdiscKind::ALL[i], &runs[i].1);
    let mut report = evaluate(scenario.seed, fig(0), fig(1), fig(2));
    report.summaries = runs.iter().map(|(_, r)| r.summary.clone()).collect();
    Ok((report, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
        [voip.0]
        src = h0.0
        dst = h1.0
        [run]
        duration_s = 5
    ";

    #[test]
    fn minimal_scenario_takes_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.qdisc.buffer_capacity_packets, 500);
        assert_eq!(s.qdisc.kind, QdiscKind::Fifo);
        assert_eq!(s.voip.len(), 1);
        assert_eq!(s.voip[0].payload_bytes, 160);
        assert_eq!(s.voip[0].frame_interval, SimTime::from_millis(20));
        assert_eq!(s.step_spec, StepSpec::default());
        assert_eq!(s.duration, SimTime::from_secs(5));
    }

    #[test]
    fn zero_steps_is_a_validation_error() {
        let text = format!("[topology]\nsteps = 0\n{MINIMAL}");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let text = format!("{MINIMAL}\ncolour = red\n");
        match parse_scenario(&text) {
            Err(ScenarioError::Parse { line, message }) => {
                assert!(message.contains("colour"), "{message}");
                assert_eq!(line, 8);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = parse_scenario("[run]\nduration_s = 5\nnonsense\n").unwrap_err();
        assert_eq!(err, ScenarioError::Parse { line: 3, message: "expected `key = value`, found `nonsense`".into() });
        assert!(matches!(parse_scenario("[bogus]\n"), Err(ScenarioError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_scenario("[run]\nduration_s = abc\n"),
            Err(ScenarioError::Validation(_))
        ));
        assert!(matches!(
            parse_scenario(&format!("{MINIMAL}\n[voip.1]\nsrc = x\ndst = h0.0\n")),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn zero_duration_is_rejected() {
        let text = MINIMAL.replace("duration_s = 5", "duration_s = 0");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Validation(_))));
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.duration = SimTime::ZERO;
        assert!(matches!(run_scenario(&s), Err(Error::Scenario(ScenarioError::Validation(_)))));
    }

    #[test]
    fn placements_must_exist() {
        let text = MINIMAL.replace("h1.0", "h9.0");
        assert!(matches!(parse_scenario(&text), Err(ScenarioError::Validation(_))));
        assert!(matches!(parse_scenario("[run]\nduration_s = 1\n"), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn overrides_apply_before_validation() {
        let s = parse_scenario_with(
            MINIMAL,
            &[
                "qdisc.kind=wfq".into(),
                "qdisc.weight.6=3.5".into(),
                "voip.0.payload_bytes=320".into(),
                "run.seed=9".into(),
            ],
        )
        .unwrap();
        assert_eq!(s.qdisc.kind, QdiscKind::Wfq);
        assert_eq!(s.qdisc.weight(ClassId::VOICE), 3.5);
        assert_eq!(s.voip[0].payload_bytes, 320);
        assert_eq!(s.seed, 9);
        assert!(parse_scenario_with(MINIMAL, &["run.colour=red".into()]).is_err());
        assert!(parse_scenario_with(MINIMAL, &["topology.steps=0".into()]).is_err());
    }

    #[test]
    fn effective_text_round_trips() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap();
            assert_eq!(parse_scenario(&s.to_text()).unwrap(), s, "{name}");
        }
    }

    #[test]
    fn verdicts_on_ties_and_orderings() {
        let f = |kind, dropped, received, delay: f64| VoiceFigures {
            discipline: kind,
            sent: 100,
            received,
            dropped,
            errored: 0,
            mean_delay_s: delay,
            sent_series: vec![50, 50],
        };
        let tie = evaluate(1, f(QdiscKind::Fifo, 0, 100, 0.01), f(QdiscKind::Pq, 0, 100, 0.01), f(QdiscKind::Wfq, 0, 100, 0.01));
        assert!(tie.all_pass());
        assert_eq!(tie.verdict("drops_ordering"), Some(Verdict::PassByTie));
        let good = evaluate(1, f(QdiscKind::Fifo, 30, 70, 0.5), f(QdiscKind::Pq, 2, 98, 0.01), f(QdiscKind::Wfq, 9, 91, 0.05));
        assert!(good.all_pass());
        let bad = evaluate(1, f(QdiscKind::Fifo, 1, 99, 0.5), f(QdiscKind::Pq, 2, 98, 0.01), f(QdiscKind::Wfq, 9, 91, 0.05));
        assert_eq!(bad.verdict("drops_ordering"), Some(Verdict::Fail));
        assert_eq!(bad.verdict("received_ordering"), Some(Verdict::Fail));
        assert!(!bad.all_pass());
    }
}
