//! The degree-balanced online rate policy.
//!
//! At every event each active flow from machine `m` to machine `m'` gets
//! rate `min(B_in(m') / deg_in(m'), B_out(m) / deg_out(m))`, where the
//! degrees count currently active flows entering and leaving each machine.
//! Splitting each NIC evenly across its active flows keeps every per-NIC sum
//! within capacity no matter how the flow pattern looks, at the price of
//! leaving slack when a flow is bottlenecked at its other endpoint.
//!
//! The policy is deliberately not work-conserving; `work_conserving: true`
//! enables an optional progressive-filling pass that re-distributes the
//! slack (off by default).

use crate::engine::{ActiveFlow, SchedulerPolicy};
use crate::model::ClusterSpec;

/// Active-flow counts per machine at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeSnapshot {
    pub deg_in: Vec<usize>,
    pub deg_out: Vec<usize>,
}

/// Counts active flows entering and leaving each machine.
pub fn degree_snapshot(flows: &[ActiveFlow], n_machines: usize) -> DegreeSnapshot {
    let mut deg_in = vec![0usize; n_machines];
    let mut deg_out = vec![0usize; n_machines];
    for f in flows {
        deg_out[f.src_machine.0] += 1;
        deg_in[f.dst_machine.0] += 1;
    }
    DegreeSnapshot { deg_in, deg_out }
}

/// The degree-balanced rate for one flow.
pub fn balanced_rate(
    cluster: &ClusterSpec,
    snapshot: &DegreeSnapshot,
    flow: &ActiveFlow,
) -> f64 {
    let src = &cluster.machines[flow.src_machine.0];
    let dst = &cluster.machines[flow.dst_machine.0];
    let din = snapshot.deg_in[flow.dst_machine.0].max(1) as f64;
    let dout = snapshot.deg_out[flow.src_machine.0].max(1) as f64;
    (dst.bw_in_bps / din).min(src.bw_out_bps / dout)
}

#[derive(Debug, Default, Clone)]
pub struct OesPolicy {
    /// Redistribute NIC slack left by the balanced rule (extension).
    pub work_conserving: bool,
}

impl SchedulerPolicy for OesPolicy {
    fn name(&self) -> &'static str {
        if self.work_conserving {
            "oes-wc"
        } else {
            "oes"
        }
    }

    fn assign_rates(&mut self, _now: f64, flows: &[ActiveFlow], cluster: &ClusterSpec) -> Vec<f64> {
        let snapshot = degree_snapshot(flows, cluster.n_machines());
        let mut rates: Vec<f64> =
            flows.iter().map(|f| balanced_rate(cluster, &snapshot, f)).collect();
        if self.work_conserving {
            progressive_fill(flows, cluster, &mut rates);
        }
        rates
    }
}

/// Water-fills leftover NIC headroom on top of the given floor rates:
/// repeatedly raise all unfrozen flows by the largest uniform increment any
/// of their NICs allows, freezing flows at saturated NICs.
fn progressive_fill(flows: &[ActiveFlow], cluster: &ClusterSpec, rates: &mut [f64]) {
    const EPS: f64 = 1e-6;
    let m = cluster.n_machines();
    let mut frozen = vec![false; flows.len()];
    for _round in 0..(4 * flows.len() + 8) {
        let mut head_in = vec![0.0f64; m];
        let mut head_out = vec![0.0f64; m];
        for mc in &cluster.machines {
            head_in[mc.id.0] = mc.bw_in_bps;
            head_out[mc.id.0] = mc.bw_out_bps;
        }
        for (f, r) in flows.iter().zip(rates.iter()) {
            head_out[f.src_machine.0] -= r;
            head_in[f.dst_machine.0] -= r;
        }
        // Flows touching a saturated NIC cannot grow.
        for (f, fr) in flows.iter().zip(frozen.iter_mut()) {
            if head_out[f.src_machine.0] <= EPS || head_in[f.dst_machine.0] <= EPS {
                *fr = true;
            }
        }
        let mut users_in = vec![0usize; m];
        let mut users_out = vec![0usize; m];
        for (f, fr) in flows.iter().zip(frozen.iter()) {
            if !fr {
                users_out[f.src_machine.0] += 1;
                users_in[f.dst_machine.0] += 1;
            }
        }
        // Largest uniform raise every unfrozen flow can take.
        let mut step = f64::INFINITY;
        let mut any = false;
        for (f, fr) in flows.iter().zip(frozen.iter()) {
            if *fr {
                continue;
            }
            any = true;
            let cap_out = head_out[f.src_machine.0].max(0.0) / users_out[f.src_machine.0] as f64;
            let cap_in = head_in[f.dst_machine.0].max(0.0) / users_in[f.dst_machine.0] as f64;
            step = step.min(cap_out).min(cap_in);
        }
        if !any || step <= EPS {
            return;
        }
        for (fr, r) in frozen.iter().zip(rates.iter_mut()) {
            if !fr {
                *r += step;
            }
        }
    }
}
