//! Comparison systems: colocation placement with FIFO transmission
//! (DistDGL-style), OMCoflow, and minimum-remaining-time-first rate
//! policies. OMCoflow and MRTF run on the planner's placement; DistDGL
//! brings its own.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::{ActiveFlow, SchedulerPolicy};
use crate::model::{
    check_placement, ClusterSpec, JobSpec, MachineId, Placement, Resources, TaskId, TaskKind,
};

/// The comparison systems. DistDGL pairs its own colocation placement with
/// FIFO transmission; the other two reuse the planner's placement and only
/// change the rate policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineId {
    DistDgl,
    OmCoflow,
    Mrtf,
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("task {task} fits on no machine even after splitting its bundle")]
    NoMachineFits { task: TaskId },
    #[error("colocated placement violates capacities (penalty {penalty:.6})")]
    Infeasible { penalty: f64 },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

fn add_demands(usage: &mut Resources, demands: &Resources) {
    for (r, w) in demands {
        *usage.entry(r.clone()).or_insert(0.0) += *w;
    }
}

fn fits(capacities: &Resources, usage: &Resources, extra: &Resources) -> bool {
    for (r, w) in extra {
        let used = usage.get(r).copied().unwrap_or(0.0);
        let cap = capacities.get(r).copied().unwrap_or(0.0);
        if used + w > cap + 1e-12 {
            return false;
        }
    }
    true
}

/// Normalized remaining headroom, used to pick the "most remaining
/// capacity" machine: the sum over resources of free/capacity fractions.
fn headroom(capacities: &Resources, usage: &Resources) -> f64 {
    let mut h = 0.0;
    for (r, cap) in capacities {
        if *cap > 0.0 {
            let used = usage.get(r).copied().unwrap_or(0.0);
            h += ((cap - used) / cap).max(0.0);
        }
    }
    h
}

/// Colocation placement: place each worker together with all its samplers
/// on the machine with the most remaining capacity that fits the bundle,
/// splitting the bundle only when no machine can take it whole; parameter
/// servers go to the least-loaded machines. Workers with more samplers are
/// packed first.
pub fn colocated_placement(job: &JobSpec, cluster: &ClusterSpec) -> Result<Placement, BaselineError> {
    let m = cluster.n_machines();
    let mut usage: Vec<Resources> = vec![Resources::new(); m];
    let mut assign: Vec<Option<MachineId>> = vec![None; job.n_tasks()];

    for t in job.tasks_of_kind(TaskKind::GraphStore) {
        let pin = t.pin.expect("validated job pins every graph store");
        add_demands(&mut usage[pin.0], &t.demands);
        assign[t.id.0] = Some(pin);
    }

    let mut workers: Vec<(TaskId, Vec<TaskId>)> = job
        .tasks_of_kind(TaskKind::Worker)
        .map(|w| (w.id, job.samplers_of_worker(w.id)))
        .collect();
    workers.sort_by_key(|(id, samplers)| (std::cmp::Reverse(samplers.len()), *id));

    for (worker, samplers) in &workers {
        let mut bundle = job.task(*worker).demands.clone();
        for s in samplers {
            add_demands(&mut bundle, &job.task(*s).demands);
        }
        let best = best_fitting_machine(cluster, &usage, &bundle);
        if let Some(mid) = best {
            add_demands(&mut usage[mid.0], &bundle);
            assign[worker.0] = Some(mid);
            for s in samplers {
                assign[s.0] = Some(mid);
            }
        } else {
            // Bundle splits: worker and each sampler placed individually.
            for task in std::iter::once(*worker).chain(samplers.iter().copied()) {
                let d = &job.task(task).demands;
                let mid = best_fitting_machine(cluster, &usage, d)
                    .ok_or(BaselineError::NoMachineFits { task })?;
                add_demands(&mut usage[mid.0], d);
                assign[task.0] = Some(mid);
            }
        }
    }

    for ps in job.tasks_of_kind(TaskKind::Ps) {
        let mid = best_fitting_machine(cluster, &usage, &ps.demands)
            .ok_or(BaselineError::NoMachineFits { task: ps.id })?;
        add_demands(&mut usage[mid.0], &ps.demands);
        assign[ps.id.0] = Some(mid);
    }

    let placement = Placement::new(
        assign.into_iter().map(|a| a.expect("every task placed")).collect(),
        m,
    );
    let report = check_placement(&placement, cluster, job, 0.0)?;
    if !report.overall_feasible {
        return Err(BaselineError::Infeasible { penalty: report.penalty_sum });
    }
    Ok(placement)
}

fn best_fitting_machine(
    cluster: &ClusterSpec,
    usage: &[Resources],
    demands: &Resources,
) -> Option<MachineId> {
    cluster
        .machines
        .iter()
        .filter(|mc| fits(&mc.capacities, &usage[mc.id.0], demands))
        .map(|mc| (mc.id, headroom(&mc.capacities, &usage[mc.id.0])))
        .max_by(|(ida, ha), (idb, hb)| {
            ha.total_cmp(hb).then(idb.0.cmp(&ida.0)) // ties: smaller id wins
        })
        .map(|(id, _)| id)
}

/// Greedy allocation in a fixed flow order: each flow takes the minimum of
/// the residual egress/ingress capacity at its endpoints.
fn greedy_in_order(order: &[usize], flows: &[ActiveFlow], cluster: &ClusterSpec) -> Vec<f64> {
    let m = cluster.n_machines();
    let mut res_out = vec![0.0f64; m];
    let mut res_in = vec![0.0f64; m];
    for mc in &cluster.machines {
        res_out[mc.id.0] = mc.bw_out_bps;
        res_in[mc.id.0] = mc.bw_in_bps;
    }
    let mut rates = vec![0.0f64; flows.len()];
    for &i in order {
        let f = &flows[i];
        let r = res_out[f.src_machine.0].min(res_in[f.dst_machine.0]).max(0.0);
        rates[i] = r;
        res_out[f.src_machine.0] -= r;
        res_in[f.dst_machine.0] -= r;
    }
    rates
}

/// FIFO transmission: flows transmit one at a time per NIC in arrival
/// order, each at the full residual `min(B_out, B_in)`; later arrivals get
/// whatever bandwidth remains. Ties in arrival time break by (iteration,
/// source, destination).
#[derive(Debug, Default, Clone)]
pub struct FifoPolicy;

pub fn fifo_policy() -> FifoPolicy {
    FifoPolicy
}

impl SchedulerPolicy for FifoPolicy {
    fn name(&self) -> &'static str {
        "fifo"
    }

    fn assign_rates(&mut self, _now: f64, flows: &[ActiveFlow], cluster: &ClusterSpec) -> Vec<f64> {
        let mut order: Vec<usize> = (0..flows.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = &flows[a];
            let fb = &flows[b];
            fa.admitted_s
                .total_cmp(&fb.admitted_s)
                .then(fa.id.iter.cmp(&fb.id.iter))
                .then(fa.id.src.cmp(&fb.id.src))
                .then(fa.id.dst.cmp(&fb.id.dst))
        });
        greedy_in_order(&order, flows, cluster)
    }
}

/// Minimum remaining time first: flows sorted by remaining bytes over the
/// standalone attainable rate, smallest first, each greedily taking the
/// full residual NIC capacity.
#[derive(Debug, Default, Clone)]
pub struct MrtfPolicy;

pub fn mrtf_policy() -> MrtfPolicy {
    MrtfPolicy
}

fn standalone_rate(f: &ActiveFlow, cluster: &ClusterSpec) -> f64 {
    cluster.machines[f.src_machine.0]
        .bw_out_bps
        .min(cluster.machines[f.dst_machine.0].bw_in_bps)
}

impl SchedulerPolicy for MrtfPolicy {
    fn name(&self) -> &'static str {
        "mrtf"
    }

    fn assign_rates(&mut self, _now: f64, flows: &[ActiveFlow], cluster: &ClusterSpec) -> Vec<f64> {
        let mut order: Vec<usize> = (0..flows.len()).collect();
        order.sort_by(|&a, &b| {
            let ta = flows[a].remaining_bits / standalone_rate(&flows[a], cluster);
            let tb = flows[b].remaining_bits / standalone_rate(&flows[b], cluster);
            ta.total_cmp(&tb)
                .then(flows[a].id.iter.cmp(&flows[b].id.iter))
                .then(flows[a].id.src.cmp(&flows[b].id.src))
                .then(flows[a].id.dst.cmp(&flows[b].id.dst))
        });
        greedy_in_order(&order, flows, cluster)
    }
}

/// OMCoflow-style rates: flows destined to the same task occurrence form a
/// coflow; within a coflow, rates are inversely proportional to each flow's
/// standalone finish time, normalized to the destination's ingress
/// capacity as if the coflow were alone. When coflows contend on a NIC, all
/// desired rates at that NIC scale down proportionally.
#[derive(Debug, Default, Clone)]
pub struct OmCoflowPolicy;

pub fn omcoflow_policy() -> OmCoflowPolicy {
    OmCoflowPolicy
}

impl SchedulerPolicy for OmCoflowPolicy {
    fn name(&self) -> &'static str {
        "omcoflow"
    }

    fn assign_rates(&mut self, _now: f64, flows: &[ActiveFlow], cluster: &ClusterSpec) -> Vec<f64> {
        // Group by destination task occurrence.
        let mut coflows: BTreeMap<(TaskId, u32), Vec<usize>> = BTreeMap::new();
        for (i, f) in flows.iter().enumerate() {
            coflows.entry((f.id.dst, f.id.iter)).or_default().push(i);
        }

        let mut desired = vec![0.0f64; flows.len()];
        for members in coflows.values() {
            let weights: Vec<f64> = members
                .iter()
                .map(|&i| {
                    let f = &flows[i];
                    let sft = f.remaining_bits / standalone_rate(f, cluster);
                    if sft > 0.0 {
                        1.0 / sft
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let dst_cap = cluster.machines[flows[members[0]].dst_machine.0].bw_in_bps;
            for (&i, w) in members.iter().zip(&weights) {
                desired[i] = if total.is_finite() && total > 0.0 {
                    dst_cap * w / total
                } else {
                    dst_cap / members.len() as f64
                };
            }
        }

        // Scale desired rates down so every NIC cap holds.
        let m = cluster.n_machines();
        let mut sum_out = vec![0.0f64; m];
        let mut sum_in = vec![0.0f64; m];
        for (f, d) in flows.iter().zip(&desired) {
            sum_out[f.src_machine.0] += d;
            sum_in[f.dst_machine.0] += d;
        }
        flows
            .iter()
            .zip(&desired)
            .map(|(f, d)| {
                let a_out = cluster.machines[f.src_machine.0].bw_out_bps
                    / sum_out[f.src_machine.0].max(1e-30);
                let a_in =
                    cluster.machines[f.dst_machine.0].bw_in_bps / sum_in[f.dst_machine.0].max(1e-30);
                d * a_out.min(a_in).min(1.0)
            })
            .collect()
    }
}

/// Returns the rate policy for a CLI name.
pub fn policy_by_name(name: &str, work_conserving: bool) -> Option<Box<dyn SchedulerPolicy>> {
    match name {
        "oes" => Some(Box::new(crate::oes::OesPolicy { work_conserving })),
        "fifo" => Some(Box::new(FifoPolicy)),
        "omcoflow" => Some(Box::new(OmCoflowPolicy)),
        "mrtf" => Some(Box::new(MrtfPolicy)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::FlowId;
    use crate::model::{demands, machine};

    fn af(src_m: usize, dst_m: usize, src: usize, dst: usize, rem: f64, adm: f64) -> ActiveFlow {
        ActiveFlow {
            id: FlowId { src: TaskId(src), dst: TaskId(dst), iter: 1 },
            src_machine: MachineId(src_m),
            dst_machine: MachineId(dst_m),
            volume_bits: rem,
            remaining_bits: rem,
            admitted_s: adm,
        }
    }

    fn two_machines(b: f64) -> ClusterSpec {
        ClusterSpec { machines: vec![machine(0, 1.0, 1.0, 1.0, b), machine(1, 1.0, 1.0, 1.0, b)] }
    }

    #[test]
    fn fifo_single_flow_full_rate() {
        let cluster = two_machines(10.0);
        let flows = vec![af(0, 1, 0, 1, 1e9, 0.0)];
        assert_eq!(FifoPolicy.assign_rates(0.0, &flows, &cluster), vec![10e9]);
    }

    #[test]
    fn fifo_serializes_flows_sharing_a_nic() {
        let cluster = two_machines(10.0);
        let flows = vec![af(0, 1, 0, 2, 1e9, 0.5), af(0, 1, 1, 3, 1e9, 0.1)];
        let rates = FifoPolicy.assign_rates(1.0, &flows, &cluster);
        // The earlier arrival (index 1) monopolizes the NIC.
        assert_eq!(rates, vec![0.0, 10e9]);
    }

    #[test]
    fn mrtf_smallest_remaining_monopolizes() {
        let cluster = two_machines(10.0);
        let flows = vec![af(0, 1, 0, 2, 8e9, 0.0), af(0, 1, 1, 3, 1e9, 0.0)];
        let rates = MrtfPolicy.assign_rates(0.0, &flows, &cluster);
        assert_eq!(rates, vec![0.0, 10e9]);
    }

    #[test]
    fn omcoflow_single_flow_full_rate() {
        let cluster = two_machines(10.0);
        let flows = vec![af(0, 1, 0, 1, 1e9, 0.0)];
        let rates = OmCoflowPolicy.assign_rates(0.0, &flows, &cluster);
        assert!((rates[0] - 10e9).abs() < 1e-3);
    }

    #[test]
    fn omcoflow_equal_flows_split_evenly() {
        let cluster = ClusterSpec {
            machines: vec![
                machine(0, 1.0, 1.0, 1.0, 10.0),
                machine(1, 1.0, 1.0, 1.0, 10.0),
                machine(2, 1.0, 1.0, 1.0, 10.0),
            ],
        };
        // Two equal flows into the same destination task from different
        // sources: symmetric split of the ingress NIC.
        let flows = vec![af(0, 2, 0, 9, 4e9, 0.0), af(1, 2, 1, 9, 4e9, 0.0)];
        let rates = OmCoflowPolicy.assign_rates(0.0, &flows, &cluster);
        assert!((rates[0] - 5e9).abs() < 1e-3);
        assert!((rates[1] - 5e9).abs() < 1e-3);
    }

    #[test]
    fn omcoflow_weights_inverse_to_finish_time() {
        let cluster = two_machines(10.0);
        // Volumes 1:3 to one task over one shared NIC pair: weights 3:1,
        // scaled to the 10 Gbps egress cap.
        let flows = vec![af(0, 1, 0, 9, 1e9, 0.0), af(0, 1, 1, 9, 3e9, 0.0)];
        let rates = OmCoflowPolicy.assign_rates(0.0, &flows, &cluster);
        assert!((rates[0] / rates[1] - 3.0).abs() < 1e-9);
        assert!((rates[0] + rates[1] - 10e9).abs() < 1.0);
    }

    fn bundle_cluster() -> (ClusterSpec, JobSpec) {
        // Two machines that each fit one worker+sampler bundle next to the
        // graph store.
        let cluster = ClusterSpec {
            machines: vec![machine(0, 32.0, 8.0, 1.0, 10.0), machine(1, 32.0, 8.0, 1.0, 10.0)],
        };
        let mk = |id: usize, kind, links: Vec<TaskId>, pin: Option<MachineId>| {
            crate::model::TaskSpec {
                id: TaskId(id),
                kind,
                demands: match kind {
                    TaskKind::GraphStore => demands(8.0, 1.0, 0.0),
                    TaskKind::Sampler => demands(7.0, 2.0, 0.0),
                    TaskKind::Worker => demands(3.0, 1.0, 1.0),
                    TaskKind::Ps => demands(5.0, 1.0, 0.0),
                },
                base_time_s: 0.1,
                links,
                pin,
            }
        };
        let job = JobSpec {
            tasks: vec![
                mk(0, TaskKind::GraphStore, vec![], Some(MachineId(0))),
                mk(1, TaskKind::GraphStore, vec![], Some(MachineId(1))),
                mk(2, TaskKind::Sampler, vec![TaskId(4)], None),
                mk(3, TaskKind::Sampler, vec![TaskId(5)], None),
                mk(4, TaskKind::Worker, vec![], None),
                mk(5, TaskKind::Worker, vec![], None),
                mk(6, TaskKind::Ps, vec![], None),
            ],
            n_iterations: 1,
        };
        (cluster, job)
    }

    #[test]
    fn colocation_keeps_bundles_intact_when_they_fit() {
        let (cluster, job) = bundle_cluster();
        let p = colocated_placement(&job, &cluster).unwrap();
        assert_eq!(p.machine_of(TaskId(2)), p.machine_of(TaskId(4)));
        assert_eq!(p.machine_of(TaskId(3)), p.machine_of(TaskId(5)));
        assert!(check_placement(&p, &cluster, &job, 0.0).unwrap().overall_feasible);
    }

    #[test]
    fn colocation_splits_when_bundles_cannot_fit() {
        // Shrink CPU so a worker + 2 samplers bundle (5 cores) cannot sit
        // together with the store, but the pieces still fit spread out.
        let cluster = ClusterSpec {
            machines: vec![machine(0, 64.0, 4.0, 2.0, 10.0), machine(1, 64.0, 4.0, 2.0, 10.0)],
        };
        let mk = |id: usize, kind, links: Vec<TaskId>, pin: Option<MachineId>| {
            crate::model::TaskSpec {
                id: TaskId(id),
                kind,
                demands: match kind {
                    TaskKind::GraphStore => demands(8.0, 1.0, 0.0),
                    TaskKind::Sampler => demands(7.0, 2.0, 0.0),
                    TaskKind::Worker => demands(3.0, 1.0, 1.0),
                    TaskKind::Ps => demands(5.0, 1.0, 0.0),
                },
                base_time_s: 0.1,
                links,
                pin,
            }
        };
        let job = JobSpec {
            tasks: vec![
                mk(0, TaskKind::GraphStore, vec![], Some(MachineId(0))),
                mk(1, TaskKind::GraphStore, vec![], Some(MachineId(1))),
                mk(2, TaskKind::Sampler, vec![TaskId(4)], None),
                mk(3, TaskKind::Sampler, vec![TaskId(4)], None),
                mk(4, TaskKind::Worker, vec![], None),
                mk(5, TaskKind::Ps, vec![], None),
            ],
            n_iterations: 1,
        };
        let p = colocated_placement(&job, &cluster).unwrap();
        // The two samplers cannot share one machine (2*2 + 1 + 1 cores > 4).
        assert_ne!(p.machine_of(TaskId(2)), p.machine_of(TaskId(3)));
        assert!(check_placement(&p, &cluster, &job, 0.0).unwrap().overall_feasible);
    }

    #[test]
    fn colocation_errors_when_nothing_fits() {
        let (mut cluster, job) = bundle_cluster();
        for m in cluster.machines.iter_mut() {
            m.capacities.insert("gpus".into(), 0.0);
        }
        assert!(matches!(
            colocated_placement(&job, &cluster),
            Err(BaselineError::NoMachineFits { .. })
        ));
    }
}
