//! The realized schedule of a simulation run and its CSV exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::FlowId;
use crate::model::{MachineId, Placement, TaskId};

/// Execution window of one task occurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSpan {
    pub start_s: f64,
    pub end_s: f64,
}

/// A constant-rate stretch of one flow. Segments of a flow are disjoint and
/// carry positive rates; their rate-time area equals the flow volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0_s: f64,
    pub t1_s: f64,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub dst_iter: u32,
    pub src_machine: MachineId,
    pub dst_machine: MachineId,
    pub volume_bits: f64,
    pub admitted_s: f64,
    pub completed_s: f64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub events: usize,
    /// Largest ingress flow degree observed per machine at any event.
    pub max_deg_in: Vec<usize>,
    /// Largest egress flow degree observed per machine at any event.
    pub max_deg_out: Vec<usize>,
}

/// Realized task start/end times and per-flow rate timelines of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRecord {
    pub task_spans: BTreeMap<(TaskId, u32), TaskSpan>,
    pub flows: BTreeMap<FlowId, FlowTrace>,
    pub makespan_s: f64,
    pub stats: SimStats,
}

/// Formats a float with 9 significant digits, `%.9g` style: fixed notation
/// for moderate magnitudes, scientific otherwise, trailing zeros trimmed.
pub fn fmt_g9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("valid exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl ScheduleRecord {
    /// `task,iteration,start_s,end_s` rows, ascending by (task, iteration).
    pub fn task_starts_csv(&self) -> String {
        let mut out = String::from("task,iteration,start_s,end_s\n");
        for ((task, iter), span) in &self.task_spans {
            let _ = writeln!(out, "{},{},{},{}", task.0, iter, fmt_g9(span.start_s), fmt_g9(span.end_s));
        }
        out
    }

    /// `src,dst,iteration,t0_s,t1_s,rate_gbps` rows; zero-volume flows have
    /// no segments and therefore no rows.
    pub fn flow_segments_csv(&self) -> String {
        let mut out = String::from("src,dst,iteration,t0_s,t1_s,rate_gbps\n");
        for (id, trace) in &self.flows {
            for seg in &trace.segments {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    id.src.0,
                    id.dst.0,
                    id.iter,
                    fmt_g9(seg.t0_s),
                    fmt_g9(seg.t1_s),
                    fmt_g9(seg.rate_bps / 1e9),
                );
            }
        }
        out
    }

    /// Piecewise-constant per-machine NIC usage:
    /// `machine,t0_s,t1_s,in_gbps,out_gbps`. Intervals where a machine moves
    /// no traffic are omitted.
    pub fn nic_util_csv(&self, placement: &Placement) -> String {
        let mut out = String::from("machine,t0_s,t1_s,in_gbps,out_gbps\n");
        for m in 0..placement.n_machines {
            let machine = MachineId(m);
            // Rate deltas at segment boundaries.
            let mut deltas: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            let mut add = |t: f64, din: f64, dout: f64| {
                let e = deltas.entry(t.to_bits()).or_insert((0.0, 0.0));
                e.0 += din;
                e.1 += dout;
            };
            for trace in self.flows.values() {
                for seg in &trace.segments {
                    if trace.dst_machine == machine {
                        add(seg.t0_s, seg.rate_bps, 0.0);
                        add(seg.t1_s, -seg.rate_bps, 0.0);
                    }
                    if trace.src_machine == machine {
                        add(seg.t0_s, 0.0, seg.rate_bps);
                        add(seg.t1_s, 0.0, -seg.rate_bps);
                    }
                }
            }
            let mut times: Vec<f64> = deltas.keys().map(|b| f64::from_bits(*b)).collect();
            times.sort_by(|a, b| a.total_cmp(b));
            let mut r_in = 0.0f64;
            let mut r_out = 0.0f64;
            for w in times.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                let d = deltas[&t0.to_bits()];
                r_in += d.0;
                r_out += d.1;
                if t1 > t0 && (r_in.abs() > 1e-6 || r_out.abs() > 1e-6) {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        m,
                        fmt_g9(t0),
                        fmt_g9(t1),
                        fmt_g9(r_in.max(0.0) / 1e9),
                        fmt_g9(r_out.max(0.0) / 1e9),
                    );
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_formatting() {
        assert_eq!(fmt_g9(0.0), "0");
        assert_eq!(fmt_g9(1.0), "1");
        assert_eq!(fmt_g9(1.5), "1.5");
        assert_eq!(fmt_g9(0.125), "0.125");
        assert_eq!(fmt_g9(123456789.0), "123456789");
        assert_eq!(fmt_g9(1234567891.0), "1.23456789e9");
        assert_eq!(fmt_g9(0.000012345), "1.2345e-5");
        assert_eq!(fmt_g9(-2.5), "-2.5");
        // 9 significant digits, rounding beyond them.
        assert_eq!(fmt_g9(1.234567894), "1.23456789");
        assert_eq!(fmt_g9(1.234567896), "1.2345679");
    }
}
