//! Brute-force fluid GPS: advance from event to event, serving every
//! backlogged flow at `rate * w_i / sum(w)`.

use super::Arrival;

/// Fluid finish time (seconds) of every arrival, in input order.
/// `arrivals` must be sorted by time.
pub fn gps_finish_times(arrivals: &[Arrival], weights: &[f64], rate_bps: f64) -> Vec<f64> {
    let n_flows = weights.len();
    // Per flow: queue of (arrival index, remaining bits).
    let mut queues: Vec<std::collections::VecDeque<(usize, f64)>> = vec![Default::default(); n_flows];
    let mut finish = vec![f64::NAN; arrivals.len()];
    let mut t = 0.0_f64;
    let mut next = 0;
    loop {
        // Admit everything that has arrived by `t`.
        while next < arrivals.len() && arrivals[next].at.as_secs_f64() <= t {
            let a = &arrivals[next];
            queues[a.flow].push_back((next, f64::from(a.bytes) * 8.0));
            next += 1;
        }
        let active: f64 = (0..n_flows).filter(|&f| !queues[f].is_empty()).map(|f| weights[f]).sum();
        if active == 0.0 {
            match arrivals.get(next) {
                Some(a) => {
                    t = a.at.as_secs_f64();
                    continue;
                }
                None => break,
            }
        }
        // Time until the first head-of-line packet completes.
        let mut dt = f64::INFINITY;
        for f in 0..n_flows {
            if let Some(&(_, bits)) = queues[f].front() {
                dt = dt.min(bits / (rate_bps * weights[f] / active));
            }
        }
        if let Some(a) = arrivals.get(next) {
            dt = dt.min(a.at.as_secs_f64() - t);
        }
        for (queue, w) in queues.iter_mut().zip(weights) {
            if let Some(head) = queue.front_mut() {
                head.1 -= rate_bps * w / active * dt;
            }
        }
        t += dt;
        for queue in &mut queues {
            // A nano-bit of slack absorbs rounding in the subtraction above.
            while let Some(&(idx, bits)) = queue.front() {
                if bits > 1e-9 {
                    break;
                }
                finish[idx] = t;
                queue.pop_front();
            }
        }
    }
    finish
}

#[test]
fn two_equal_flows_share_the_link() {
    use stepqos_core::SimTime;
    // 1000-bit packets at 1 kb/s, both at t=0: each finishes at 2 s.
    let a = [
        Arrival { at: SimTime::ZERO, flow: 0, bytes: 125 },
        Arrival { at: SimTime::ZERO, flow: 1, bytes: 125 },
    ];
    let f = gps_finish_times(&a, &[1.0, 1.0], 1000.0);
    assert!((f[0] - 2.0).abs() < 1e-9 && (f[1] - 2.0).abs() < 1e-9);
    // Weights 3:1: flow 0 finishes at 4/3 s, then flow 1 alone until 2 s.
    let f = gps_finish_times(&a, &[3.0, 1.0], 1000.0);
    assert!((f[0] - 4.0 / 3.0).abs() < 1e-9, "{f:?}");
    assert!((f[1] - 2.0).abs() < 1e-9, "{f:?}");
}
