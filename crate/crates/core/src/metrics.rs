//! Counters, delay/jitter statistics, time-bucketed series, and export.
//!
//! `series.csv` holds one row per `(metric, tos, bucket)`:
//! `bucket_start_s,metric,tos,value`, sorted by metric name, then ToS,
//! then bucket. Counts are packets (or bytes) per bucket. A bucket with no
//! deliveries has an empty `delay_mean_s` value. `summary.json` holds the
//! per-class totals, delay percentiles, jitter, and the conservation check.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::MetricsError;
use crate::kernel::{RandomStream, SimTime};
use crate::qdisc::ClassId;
use crate::traffic::{DeliveryRecord, FlowKey, Packet};

/// Delay samples retained per class for percentile estimation.
pub const DELAY_RESERVOIR_CAP: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DropReason {
    BufferFull,
    BitError,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::BufferFull => "BufferFull",
            DropReason::BitError => "BitError",
        }
    }
}

pub fn e2e_delay(record: &DeliveryRecord) -> Result<SimTime, MetricsError> {
    record
        .delivered_at
        .checked_sub(record.created_at)
        .ok_or(MetricsError::NegativeDelay {
            packet: record.packet,
            created_at: record.created_at,
            delivered_at: record.delivered_at,
        })
}

/// Smoothed interarrival jitter, `J += (|D| - J) / 16`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JitterState {
    pub jitter: f64,
    pub last_transit: f64,
    pub initialized: bool,
}

impl JitterState {
    pub fn update(&mut self, transit: f64) -> f64 {
        if self.initialized {
            let d = transit - self.last_transit;
            self.jitter += (d.abs() - self.jitter) / 16.0;
        } else {
            self.initialized = true;
        }
        self.last_transit = transit;
        self.jitter
    }
}

/// Per-bucket sums and sample counts over `[k*width, (k+1)*width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    width: SimTime,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl Series {
    pub fn new(width: SimTime) -> Self {
        assert!(width > SimTime::ZERO, "bucket width must be positive");
        Series {
            width,
            sums: Vec::new(),
            counts: Vec::new(),
        }
    }

    pub fn add(&mut self, at: SimTime, value: f64) {
        let k = (at.as_nanos() / self.width.as_nanos()) as usize;
        if k >= self.sums.len() {
            self.sums.resize(k + 1, 0.0);
            self.counts.resize(k + 1, 0);
        }
        self.sums[k] += value;
        self.counts[k] += 1;
    }

    pub fn sum(&self, k: usize) -> f64 {
        self.sums.get(k).copied().unwrap_or(0.0)
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn mean(&self, k: usize) -> Option<f64> {
        let n = self.count(k);
        (n > 0).then(|| self.sum(k) / n as f64)
    }

    /// Sums for buckets `0..n`, zero-filled.
    pub fn sums(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.sum(k)).collect()
    }

    pub fn counts(&self, n: usize) -> Vec<u64> {
        (0..n).map(|k| self.count(k)).collect()
    }
}

/// Number of buckets of `width` needed to cover `[0, horizon)`.
pub fn bucket_count(horizon: SimTime, width: SimTime) -> usize {
    horizon.as_nanos().div_ceil(width.as_nanos()) as usize
}

/// Counts event timestamps per bucket over `[0, horizon)`.
pub fn bucketize(events: &[SimTime], width: SimTime, horizon: SimTime) -> Vec<u64> {
    let mut s = Series::new(width);
    for &t in events {
        s.add(t, 1.0);
    }
    s.counts(bucket_count(horizon, width))
}

#[derive(Clone, Debug)]
struct ClassMetrics {
    sent_packets: u64,
    sent_bytes: u64,
    received_packets: u64,
    received_bytes: u64,
    dropped_buffer_full: u64,
    dropped_bit_error: u64,
    delay_sum: f64,
    delay_sq_sum: f64,
    delay_min: f64,
    delay_max: f64,
    delay_samples: Vec<f64>,
    sent: Series,
    received: Series,
    received_bytes_series: Series,
    dropped: Series,
    errored: Series,
    delay: Series,
    deliveries: Vec<(SimTime, u32)>,
}

impl ClassMetrics {
    fn new(width: SimTime) -> Self {
        ClassMetrics {
            sent_packets: 0,
            sent_bytes: 0,
            received_packets: 0,
            received_bytes: 0,
            dropped_buffer_full: 0,
            dropped_bit_error: 0,
            delay_sum: 0.0,
            delay_sq_sum: 0.0,
            delay_min: f64::INFINITY,
            delay_max: 0.0,
            delay_samples: Vec::new(),
            sent: Series::new(width),
            received: Series::new(width),
            received_bytes_series: Series::new(width),
            dropped: Series::new(width),
            errored: Series::new(width),
            delay: Series::new(width),
            deliveries: Vec::new(),
        }
    }
}

/// Everything measured during one run.
#[derive(Clone, Debug)]
pub struct MetricsStore {
    bucket_width: SimTime,
    classes: Vec<ClassMetrics>,
    jitter: BTreeMap<FlowKey, JitterState>,
    reservoir_rng: RandomStream,
}

impl MetricsStore {
    pub fn new(bucket_width: SimTime, seed: u64) -> Self {
        MetricsStore {
            bucket_width,
            classes: (0..8).map(|_| ClassMetrics::new(bucket_width)).collect(),
            jitter: BTreeMap::new(),
            reservoir_rng: RandomStream::new(seed, "metrics.reservoir"),
        }
    }

    pub fn bucket_width(&self) -> SimTime {
        self.bucket_width
    }

    fn class(&mut self, tos: ClassId) -> &mut ClassMetrics {
        &mut self.classes[tos.index()]
    }

    pub fn record_sent(&mut self, packet: &Packet, now: SimTime) {
        let c = self.class(packet.tos());
        c.sent_packets += 1;
        c.sent_bytes += u64::from(packet.size_bytes());
        c.sent.add(now, 1.0);
    }

    pub fn record_drop(&mut self, packet: &Packet, reason: DropReason, now: SimTime) {
        let c = self.class(packet.tos());
        match reason {
            DropReason::BufferFull => {
                c.dropped_buffer_full += 1;
                c.dropped.add(now, 1.0);
            }
            DropReason::BitError => {
                c.dropped_bit_error += 1;
                c.errored.add(now, 1.0);
            }
        }
    }

    /// Records a delivery and returns its end-to-end delay.
    pub fn record_delivery(&mut self, record: &DeliveryRecord) -> Result<SimTime, MetricsError> {
        let delay = e2e_delay(record)?;
        let d = delay.as_secs_f64();
        self.jitter.entry(FlowKey { src: record.src, dst: record.dst, tos: record.tos }).or_default().update(d);

        let at = record.delivered_at;
        let c = &mut self.classes[record.tos.index()];
        c.received_packets += 1;
        c.received_bytes += u64::from(record.size_bytes);
        c.received.add(at, 1.0);
        c.received_bytes_series.add(at, f64::from(record.size_bytes));
        c.delay.add(at, d);
        c.deliveries.push((at, record.size_bytes));
        c.delay_sum += d;
        c.delay_sq_sum += d * d;
        c.delay_min = c.delay_min.min(d);
        c.delay_max = c.delay_max.max(d);

        // Reservoir sampling (algorithm R) once the cap is reached.
        if c.delay_samples.len() < DELAY_RESERVOIR_CAP {
            c.delay_samples.push(d);
        } else {
            let seen = c.received_packets;
            let j = (self.reservoir_rng.uniform() * seen as f64) as usize;
            if j < DELAY_RESERVOIR_CAP {
                c.delay_samples[j] = d;
            }
        }
        Ok(delay)
    }

    pub fn sent_packets(&self, tos: ClassId) -> u64 {
        self.classes[tos.index()].sent_packets
    }

    pub fn received_packets(&self, tos: ClassId) -> u64 {
        self.classes[tos.index()].received_packets
    }

    pub fn dropped_packets(&self, tos: ClassId, reason: DropReason) -> u64 {
        let c = &self.classes[tos.index()];
        match reason {
            DropReason::BufferFull => c.dropped_buffer_full,
            DropReason::BitError => c.dropped_bit_error,
        }
    }

    pub fn jitter(&self, flow: &FlowKey) -> Option<f64> {
        self.jitter.get(flow).map(|j| j.jitter)
    }

    /// Per-bucket sent counts for a class over `[0, horizon)`.
    pub fn sent_series(&self, tos: ClassId, horizon: SimTime) -> Vec<u64> {
        self.classes[tos.index()].sent.counts(bucket_count(horizon, self.bucket_width))
    }

    /// Received bits per second over `[start, end)`.
    pub fn throughput(&self, tos: ClassId, start: SimTime, end: SimTime) -> f64 {
        assert!(end > start, "throughput window must have positive length");
        let bytes: u64 = self.classes[tos.index()]
            .deliveries
            .iter()
            .filter(|(t, _)| *t >= start && *t < end)
            .map(|(_, b)| u64::from(*b))
            .sum();
        bytes as f64 * 8.0 / (end - start).as_secs_f64()
    }

    /// Classes that emitted at least one packet.
    pub fn active_classes(&self) -> Vec<ClassId> {
        ClassId::all().filter(|c| self.classes[c.index()].sent_packets > 0).collect()
    }

    pub fn series_csv(&self, horizon: SimTime) -> String {
        let n = bucket_count(horizon, self.bucket_width);
        let width_s = self.bucket_width.as_secs_f64();
        let mut out = String::from("bucket_start_s,metric,tos,value\n");
        let metrics: [(&str, CellFn); 7] = [
            ("delay_mean_s", |c, k, _| c.delay.mean(k).map(|m| m.to_string()).unwrap_or_default()),
            ("dropped_packets", |c, k, _| c.dropped.count(k).to_string()),
            ("errored_packets", |c, k, _| c.errored.count(k).to_string()),
            ("received_bytes", |c, k, _| (c.received_bytes_series.sum(k) as u64).to_string()),
            ("received_packets", |c, k, _| c.received.count(k).to_string()),
            ("sent_packets", |c, k, _| c.sent.count(k).to_string()),
            ("throughput_bps", |c, k, w| (c.received_bytes_series.sum(k) * 8.0 / w).to_string()),
        ];
        let classes = self.active_classes();
        for (name, value) in metrics {
            for &tos in &classes {
                let c = &self.classes[tos.index()];
                for k in 0..n {
                    let start = SimTime::from_nanos(k as u64 * self.bucket_width.as_nanos()).as_secs_f64();
                    writeln!(out, "{start},{name},{tos},{}", value(c, k, width_s)).expect("string write");
                }
            }
        }
        out
    }

    /// Builds the run summary. `in_flight` counts, per ToS, packets still
    /// queued or on a link when the run stopped.
    pub fn summary(&self, meta: RunMeta, in_flight: [u64; 8]) -> Summary {
        let mut classes = BTreeMap::new();
        let mut conservation_ok = true;
        let duration = meta.duration_s;
        for tos in self.active_classes() {
            let c = &self.classes[tos.index()];
            let n = c.received_packets;
            let mean = (n > 0).then(|| c.delay_sum / n as f64);
            let std = mean.map(|m| (c.delay_sq_sum / n as f64 - m * m).max(0.0).sqrt());
            let jitters: Vec<f64> = self
                .jitter
                .iter()
                .filter(|(k, _)| k.tos == tos)
                .map(|(_, j)| j.jitter)
                .collect();
            let conserved = c.sent_packets
                == c.received_packets + c.dropped_buffer_full + c.dropped_bit_error + in_flight[tos.index()];
            conservation_ok &= conserved;
            classes.insert(
                tos.to_string(),
                ClassSummary {
                    sent_packets: c.sent_packets,
                    sent_bytes: c.sent_bytes,
                    received_packets: c.received_packets,
                    received_bytes: c.received_bytes,
                    dropped_buffer_full: c.dropped_buffer_full,
                    dropped_bit_error: c.dropped_bit_error,
                    in_flight: in_flight[tos.index()],
                    conserved,
                    error_rate: ratio(c.dropped_bit_error, c.sent_packets),
                    drop_rate: ratio(c.dropped_buffer_full, c.sent_packets),
                    throughput_bps: c.received_bytes as f64 * 8.0 / duration,
                    delay_mean_s: mean,
                    delay_std_s: std,
                    delay_min_s: (n > 0).then_some(c.delay_min),
                    delay_max_s: (n > 0).then_some(c.delay_max),
                    delay_p95_s: percentile(&c.delay_samples, 0.95),
                    jitter_mean_s: (!jitters.is_empty()).then(|| jitters.iter().sum::<f64>() / jitters.len() as f64),
                    jitter_max_s: jitters.iter().copied().reduce(f64::max),
                },
            );
        }
        Summary {
            discipline: meta.discipline,
            seed: meta.seed,
            duration_s: meta.duration_s,
            bucket_width_s: self.bucket_width.as_secs_f64(),
            events_processed: meta.events_processed,
            classes,
            conservation_ok,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Nearest-rank percentile by exact sort.
/// Formats one class's value for bucket `k`, given the bucket width in seconds.
type CellFn = fn(&ClassMetrics, usize, f64) -> String;

pub fn percentile(samples: &[f64], q: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// Run identification carried into the summary.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub discipline: String,
    pub seed: u64,
    pub duration_s: f64,
    pub events_processed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassSummary {
    pub sent_packets: u64,
    pub sent_bytes: u64,
    pub received_packets: u64,
    pub received_bytes: u64,
    pub dropped_buffer_full: u64,
    pub dropped_bit_error: u64,
    pub in_flight: u64,
    pub conserved: bool,
    pub error_rate: f64,
    pub drop_rate: f64,
    pub throughput_bps: f64,
    pub delay_mean_s: Option<f64>,
    pub delay_std_s: Option<f64>,
    pub delay_min_s: Option<f64>,
    pub delay_max_s: Option<f64>,
    pub delay_p95_s: Option<f64>,
    pub jitter_mean_s: Option<f64>,
    pub jitter_max_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub discipline: String,
    pub seed: u64,
    pub duration_s: f64,
    pub bucket_width_s: f64,
    pub events_processed: u64,
    /// Keyed by ToS value.
    pub classes: BTreeMap<String, ClassSummary>,
    pub conservation_ok: bool,
}

impl Summary {
    pub fn class(&self, tos: ClassId) -> Option<&ClassSummary> {
        self.classes.get(&tos.to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Writes `series.csv` and `summary.json` into `dir`, creating it if needed.
pub fn export(store: &MetricsStore, summary: &Summary, horizon: SimTime, dir: &Path) -> Result<(), MetricsError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MetricsError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let series = dir.join("series.csv");
    fs::write(&series, store.series_csv(horizon)).map_err(io(&series))?;
    let json = dir.join("summary.json");
    fs::write(&json, summary.to_json()).map_err(io(&json))?;
    Ok(())
}
