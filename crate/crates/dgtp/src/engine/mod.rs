//! Deterministic event-driven simulator for a (placement, rate policy) pair.
//!
//! The problem's scheduling constraints are enforced structurally:
//!
//! * a task occurrence starts the instant its last dependency clears
//!   (remote inputs arrive as flows, local inputs clear at source completion,
//!   and iteration `n+1` of a task waits for iteration `n`);
//! * a flow is created when its source task finishes, but if the same
//!   task pair's previous-iteration flow is still in flight, the new flow
//!   parks in the pending set until that flow completes;
//! * the rate policy only chooses transmission rates for the active set,
//!   and the engine rejects assignments that overrun a NIC.
//!
//! Rates are piecewise-constant between events (task/flow completions and
//! admissions), so simulating event-to-event is exact: there is nothing a
//! finer time grid could change except rounding.

pub mod record;
pub mod validate;

pub use record::{FlowTrace, ScheduleRecord, Segment, SimStats, TaskSpan};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{
    build_dependency_graph, check_placement, ClusterSpec, DependencyGraph, FlowKey, JobSpec,
    MachineId, ModelError, Placement, TaskId,
};
use crate::profiles::{draw_iterations, DrawKeys, IterationDraw, Profile};

/// One flow occurrence: traffic from `src` in iteration `iter` to `dst`
/// (in iteration `iter` or `iter + 1`, depending on the edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId {
    pub src: TaskId,
    pub dst: TaskId,
    pub iter: u32,
}

impl std::fmt::Display for FlowId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},n{})->{}", self.src, self.iter, self.dst)
    }
}

/// Snapshot of one transmitting flow handed to the rate policy.
#[derive(Debug, Clone)]
pub struct ActiveFlow {
    pub id: FlowId,
    pub src_machine: MachineId,
    pub dst_machine: MachineId,
    pub volume_bits: f64,
    pub remaining_bits: f64,
    pub admitted_s: f64,
}

/// A rate policy: at every event it assigns a rate to each active flow.
/// It sees only the current state (no future draws) and must keep per-NIC
/// sums within the machine bandwidths; the engine verifies that.
pub trait SchedulerPolicy {
    fn name(&self) -> &'static str;

    /// Returns one rate (bits/s, `>= 0`) per entry of `flows`, which is
    /// sorted ascending by flow id.
    fn assign_rates(&mut self, now: f64, flows: &[ActiveFlow], cluster: &ClusterSpec) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Reject placements that violate machine capacities. Disabled during
    /// placement search, where relaxed-capacity states are simulated to
    /// estimate their makespan.
    pub enforce_capacity: bool,
    /// Hard cap on processed events; `None` picks a generous bound from the
    /// instance size.
    pub max_events: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { enforce_capacity: true, max_events: None }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("placement violates machine capacities (penalty {penalty:.6})")]
    InfeasiblePlacement { penalty: f64 },
    #[error("policy {policy} returned {got} rates for {expected} flows")]
    RateVectorLength { policy: &'static str, got: usize, expected: usize },
    #[error("policy {policy} assigned an invalid rate {rate} to {flow}")]
    InvalidRate { policy: &'static str, flow: FlowId, rate: f64 },
    #[error("policy {policy} oversubscribed {direction} bandwidth on {machine} at t={time}s: {assigned} > {capacity} bits/s")]
    RateViolation {
        policy: &'static str,
        machine: MachineId,
        direction: &'static str,
        time: f64,
        assigned: f64,
        capacity: f64,
    },
    #[error("no runnable work at t={time}s but {pending} task occurrences remain")]
    Deadlock { time: f64, pending: usize },
    #[error("active flows exist at t={time}s but the policy keeps them all at rate zero")]
    PolicyStall { time: f64 },
    #[error("event budget {budget} exhausted; run looks non-terminating")]
    EventBudgetExceeded { budget: usize },
    #[error("same-instant cascade exceeded {cap} steps at t={time}s")]
    CascadeLimit { cap: usize, time: f64 },
    #[error("draw for iteration {iter} is missing {what}")]
    MissingDraw { iter: u32, what: String },
}

/// Simulates `n_iters` iterations with volumes and durations drawn from the
/// profile. The placement must satisfy machine capacities.
pub fn simulate(
    job: &JobSpec,
    cluster: &ClusterSpec,
    placement: &Placement,
    policy: &mut dyn SchedulerPolicy,
    profile: &Profile,
    n_iters: u32,
) -> Result<ScheduleRecord, SimError> {
    let graph = build_dependency_graph(job)?;
    let keys = DrawKeys::new(job, &graph);
    let draws = draw_iterations(profile, &keys, n_iters);
    simulate_draws(job, cluster, placement, policy, &graph, &draws, &SimOptions::default())
}

/// Core entry point: simulate against explicit per-iteration draws.
pub fn simulate_draws(
    job: &JobSpec,
    cluster: &ClusterSpec,
    placement: &Placement,
    policy: &mut dyn SchedulerPolicy,
    graph: &DependencyGraph,
    draws: &[IterationDraw],
    opts: &SimOptions,
) -> Result<ScheduleRecord, SimError> {
    placement.check_structure(job, cluster)?;
    if opts.enforce_capacity {
        let report = check_placement(placement, cluster, job, 0.0)?;
        if !report.overall_feasible {
            return Err(SimError::InfeasiblePlacement { penalty: report.penalty_sum });
        }
    }
    let mut state = SimState::new(job, cluster, placement, graph, draws, opts)?;
    state.run(policy)?;
    Ok(state.into_record())
}

// ---------------------------------------------------------------------------
// Internal state
// ---------------------------------------------------------------------------

/// Total-order wrapper for event timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Tm(f64);

impl Eq for Tm {}
impl PartialOrd for Tm {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Tm {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TaskPhase {
    Waiting { deps: usize },
    Running { end: f64 },
    Done { end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FlowPhase {
    Pending,
    Active,
    Done,
}

#[derive(Debug)]
struct FlowRt {
    dst_iter: u32,
    src_machine: MachineId,
    dst_machine: MachineId,
    volume_bits: f64,
    remaining_bits: f64,
    rate_bps: f64,
    phase: FlowPhase,
    admitted_s: f64,
    completed_s: f64,
    open_seg: Option<(f64, f64)>,
    segments: Vec<Segment>,
}

pub(crate) struct SimState<'a> {
    job: &'a JobSpec,
    cluster: &'a ClusterSpec,
    placement: &'a Placement,
    graph: &'a DependencyGraph,
    draws: &'a [IterationDraw],
    n_iters: u32,
    now: f64,
    /// `phase[task][iter-1]`.
    phase: Vec<Vec<TaskPhase>>,
    running: BTreeSet<(Tm, TaskId, u32)>,
    tasks_pending: usize,
    flows: BTreeMap<FlowId, FlowRt>,
    active: BTreeSet<FlowId>,
    pending: BTreeSet<FlowId>,
    spans: BTreeMap<(TaskId, u32), TaskSpan>,
    events: usize,
    max_events: usize,
    cascade_cap: usize,
    max_deg_in: Vec<usize>,
    max_deg_out: Vec<usize>,
}

impl<'a> SimState<'a> {
    fn new(
        job: &'a JobSpec,
        cluster: &'a ClusterSpec,
        placement: &'a Placement,
        graph: &'a DependencyGraph,
        draws: &'a [IterationDraw],
        opts: &SimOptions,
    ) -> Result<Self, SimError> {
        let n_iters = draws.len() as u32;
        let n_tasks = job.n_tasks();
        let preds = graph.predecessors();

        let mut phase = vec![Vec::with_capacity(n_iters as usize); n_tasks];
        for j in 0..n_tasks {
            for n in 1..=n_iters {
                let mut deps = 0usize;
                for (_, offset) in &preds[j] {
                    // The producing occurrence is (src, n - offset); it only
                    // exists when that iteration index is at least 1.
                    if n > *offset {
                        deps += 1;
                    }
                }
                if n >= 2 {
                    deps += 1; // own previous iteration
                }
                phase[j].push(TaskPhase::Waiting { deps });
            }
        }

        let edge_count = graph.edges().count();
        let budget = opts
            .max_events
            .unwrap_or_else(|| 64 * (n_tasks + edge_count) * n_iters as usize + 4096);
        let cascade_cap = 8 * (n_tasks + edge_count) * n_iters as usize + 64;

        Ok(SimState {
            job,
            cluster,
            placement,
            graph,
            draws,
            n_iters,
            now: 0.0,
            phase,
            running: BTreeSet::new(),
            tasks_pending: n_tasks * n_iters as usize,
            flows: BTreeMap::new(),
            active: BTreeSet::new(),
            pending: BTreeSet::new(),
            spans: BTreeMap::new(),
            events: 0,
            max_events: budget,
            cascade_cap,
            max_deg_in: vec![0; cluster.n_machines()],
            max_deg_out: vec![0; cluster.n_machines()],
        })
    }

    fn duration_of(&self, task: TaskId, iter: u32) -> Result<f64, SimError> {
        let draw = &self.draws[(iter - 1) as usize];
        draw.durations_s
            .get(&task)
            .copied()
            .ok_or_else(|| SimError::MissingDraw { iter, what: format!("duration of {task}") })
    }

    fn volume_of(&self, key: FlowKey, iter: u32) -> Result<f64, SimError> {
        let draw = &self.draws[(iter - 1) as usize];
        draw.volumes_bytes
            .get(&key)
            .copied()
            .ok_or_else(|| SimError::MissingDraw { iter, what: format!("volume of {key}") })
    }

    fn run(&mut self, policy: &mut dyn SchedulerPolicy) -> Result<(), SimError> {
        // t=0: first-iteration graph stores have no dependencies and start
        // immediately; everything else waits.
        let mut work = InstantWork::default();
        for j in 0..self.job.n_tasks() {
            if let TaskPhase::Waiting { deps: 0 } = self.phase[j][0] {
                work.task_starts.push((TaskId(j), 1));
            }
        }
        self.drain_instant_work(work)?;
        self.reassign_rates(policy)?;

        while self.tasks_pending > 0 {
            self.events += 1;
            if self.events > self.max_events {
                return Err(SimError::EventBudgetExceeded { budget: self.max_events });
            }

            let next_task_end = self.running.iter().next().map(|(t, _, _)| t.0);
            let next_flow_end = self
                .active
                .iter()
                .filter_map(|id| {
                    let f = &self.flows[id];
                    if f.rate_bps > 0.0 {
                        Some(self.now + f.remaining_bits / f.rate_bps)
                    } else {
                        None
                    }
                })
                .fold(None::<f64>, |acc, t| Some(acc.map_or(t, |a| a.min(t))));

            let t_next = match (next_task_end, next_flow_end) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => {
                    if self.active.is_empty() {
                        return Err(SimError::Deadlock { time: self.now, pending: self.tasks_pending });
                    }
                    return Err(SimError::PolicyStall { time: self.now });
                }
            };

            let tie = 1e-12 * t_next.abs().max(1.0);
            let dt = t_next - self.now;
            self.now = t_next;

            // Advance volumes and collect flow completions, ascending by id.
            let mut done_flows = Vec::new();
            for id in self.active.iter().copied().collect::<Vec<_>>() {
                let f = self.flows.get_mut(&id).expect("active flow exists");
                f.remaining_bits -= f.rate_bps * dt;
                let eps = f.volume_bits * 1e-12 + 1e-9;
                if f.remaining_bits <= eps {
                    f.remaining_bits = 0.0;
                    done_flows.push(id);
                }
            }

            // Task completions at this instant, ascending by (task, iter).
            let mut done_tasks = Vec::new();
            while let Some(&(end, task, iter)) = self.running.iter().next() {
                if end.0 <= t_next + tie {
                    self.running.remove(&(end, task, iter));
                    done_tasks.push((task, iter));
                } else {
                    break;
                }
            }
            done_tasks.sort();

            let mut work = InstantWork::default();
            for id in done_flows {
                self.complete_flow(id, &mut work);
            }
            for (task, iter) in done_tasks {
                self.complete_task(task, iter, &mut work)?;
            }
            self.drain_instant_work(work)?;
            if self.tasks_pending == 0 {
                break;
            }
            self.reassign_rates(policy)?;
        }

        // Close any dangling open segments (there should be none: every flow
        // completes before its consumer task, and all tasks are done).
        debug_assert!(self.active.is_empty() && self.pending.is_empty());
        Ok(())
    }

    /// Consequences of completions that resolve at one instant: dependency
    /// countdown, flow classification and promotion, task starts, and the
    /// instant completion of zero-volume flows and zero-duration tasks.
    fn drain_instant_work(&mut self, mut work: InstantWork) -> Result<(), SimError> {
        let mut steps = 0usize;
        loop {
            if work.is_empty() {
                return Ok(());
            }
            steps += 1;
            if steps > self.cascade_cap {
                return Err(SimError::CascadeLimit { cap: self.cascade_cap, time: self.now });
            }
            let mut next = InstantWork::default();

            work.task_starts.sort();
            work.task_starts.dedup();
            for (task, iter) in work.task_starts.drain(..) {
                let dur = self.duration_of(task, iter)?;
                self.spans.insert((task, iter), TaskSpan { start_s: self.now, end_s: self.now + dur });
                if dur <= 0.0 {
                    self.phase[task.0][(iter - 1) as usize] = TaskPhase::Done { end: self.now };
                    self.tasks_pending -= 1;
                    self.on_task_done(task, iter, &mut next)?;
                } else {
                    self.phase[task.0][(iter - 1) as usize] = TaskPhase::Running { end: self.now + dur };
                    self.running.insert((Tm(self.now + dur), task, iter));
                }
            }

            for id in work.instant_flows.drain(..) {
                // Zero-volume flow: born complete.
                self.flows.get_mut(&id).expect("flow exists").completed_s = self.now;
                self.satisfy_dep_of_flow(id, &mut next);
                self.promote_pending(id, &mut next);
            }

            work = next;
        }
    }

    fn complete_task(&mut self, task: TaskId, iter: u32, work: &mut InstantWork) -> Result<(), SimError> {
        let end = match self.phase[task.0][(iter - 1) as usize] {
            TaskPhase::Running { end } => end,
            other => unreachable!("completing task in phase {other:?}"),
        };
        self.phase[task.0][(iter - 1) as usize] = TaskPhase::Done { end };
        self.tasks_pending -= 1;
        self.on_task_done(task, iter, work)
    }

    /// A task occurrence finished: clear local dependents, release the next
    /// iteration of the same task, and classify the new outbound flows.
    fn on_task_done(&mut self, task: TaskId, iter: u32, work: &mut InstantWork) -> Result<(), SimError> {
        if iter < self.n_iters {
            self.satisfy_dep(task, iter + 1, work);
        }
        self.classify_new_flows(task, iter, work)?;
        Ok(())
    }

    /// Sorts the flows born at `(task, iter)`'s completion into the active
    /// or pending set. A flow parks in the pending set while the same task
    /// pair's previous-iteration flow is still unfinished; zero-volume flows
    /// complete instantly (an empty transfer constrains nothing). Local
    /// edges hand off immediately.
    fn classify_new_flows(&mut self, task: TaskId, iter: u32, work: &mut InstantWork) -> Result<(), SimError> {
        let src_machine = self.placement.machine_of(task);
        for edge in self.graph.successors(task) {
            let dst_iter = iter + edge.iter_offset;
            if dst_iter > self.n_iters {
                continue;
            }
            let dst_machine = self.placement.machine_of(edge.dst);
            if dst_machine == src_machine {
                self.satisfy_dep(edge.dst, dst_iter, work);
                continue;
            }
            let id = FlowId { src: task, dst: edge.dst, iter };
            let volume_bits = self.volume_of(FlowKey { src: task, dst: edge.dst }, iter)? * 8.0;
            debug_assert!(
                !self.flows.contains_key(&id),
                "flow {id} classified twice"
            );
            let mut rt = FlowRt {
                dst_iter,
                src_machine,
                dst_machine,
                volume_bits,
                remaining_bits: volume_bits,
                rate_bps: 0.0,
                phase: FlowPhase::Done,
                admitted_s: self.now,
                completed_s: self.now,
                open_seg: None,
                segments: Vec::new(),
            };
            if volume_bits <= 0.0 {
                self.flows.insert(id, rt);
                work.instant_flows.push(id);
                continue;
            }
            let predecessor_in_flight = iter >= 2 && {
                let prev = FlowId { src: task, dst: edge.dst, iter: iter - 1 };
                self.flows.get(&prev).map(|f| f.phase != FlowPhase::Done).unwrap_or(false)
            };
            if predecessor_in_flight {
                rt.phase = FlowPhase::Pending;
                self.flows.insert(id, rt);
                self.pending.insert(id);
            } else {
                rt.phase = FlowPhase::Active;
                debug_assert!(
                    !self.active.iter().any(|a| a.src == id.src && a.dst == id.dst),
                    "two in-flight flows for the pair {}->{}", id.src, id.dst
                );
                self.flows.insert(id, rt);
                self.active.insert(id);
            }
        }
        Ok(())
    }

    fn complete_flow(&mut self, id: FlowId, work: &mut InstantWork) {
        let f = self.flows.get_mut(&id).expect("flow exists");
        debug_assert_eq!(f.phase, FlowPhase::Active);
        f.phase = FlowPhase::Done;
        f.completed_s = self.now;
        if let Some((t0, rate)) = f.open_seg.take() {
            if self.now > t0 && rate > 0.0 {
                f.segments.push(Segment { t0_s: t0, t1_s: self.now, rate_bps: rate });
            }
        }
        self.active.remove(&id);
        self.satisfy_dep_of_flow(id, work);
        self.promote_pending(id, work);
    }

    /// A finished flow releases its successor in the next iteration, if that
    /// flow is parked in the pending set.
    fn promote_pending(&mut self, finished: FlowId, _work: &mut InstantWork) {
        let succ = FlowId { src: finished.src, dst: finished.dst, iter: finished.iter + 1 };
        if self.pending.remove(&succ) {
            let f = self.flows.get_mut(&succ).expect("pending flow exists");
            f.phase = FlowPhase::Active;
            f.admitted_s = self.now;
            self.active.insert(succ);
        }
    }

    fn satisfy_dep_of_flow(&mut self, id: FlowId, work: &mut InstantWork) {
        let dst_iter = self.flows[&id].dst_iter;
        self.satisfy_dep(id.dst, dst_iter, work);
    }

    fn satisfy_dep(&mut self, task: TaskId, iter: u32, work: &mut InstantWork) {
        match &mut self.phase[task.0][(iter - 1) as usize] {
            TaskPhase::Waiting { deps } => {
                debug_assert!(*deps > 0, "dependency underflow on ({task}, {iter})");
                *deps -= 1;
                if *deps == 0 {
                    work.task_starts.push((task, iter));
                }
            }
            other => unreachable!("dependency cleared for ({task}, {iter}) in phase {other:?}"),
        }
    }

    /// Hands the active set to the policy, verifies the assignment against
    /// NIC capacities, and updates the piecewise-constant rate segments.
    fn reassign_rates(&mut self, policy: &mut dyn SchedulerPolicy) -> Result<(), SimError> {
        let view: Vec<ActiveFlow> = self
            .active
            .iter()
            .map(|id| {
                let f = &self.flows[id];
                ActiveFlow {
                    id: *id,
                    src_machine: f.src_machine,
                    dst_machine: f.dst_machine,
                    volume_bits: f.volume_bits,
                    remaining_bits: f.remaining_bits,
                    admitted_s: f.admitted_s,
                }
            })
            .collect();

        // Degree bookkeeping; the one-iteration degrees bound these at every
        // event, which the verification suites assert.
        let mut deg_in = vec![0usize; self.cluster.n_machines()];
        let mut deg_out = vec![0usize; self.cluster.n_machines()];
        for f in &view {
            deg_out[f.src_machine.0] += 1;
            deg_in[f.dst_machine.0] += 1;
        }
        for m in 0..self.cluster.n_machines() {
            self.max_deg_in[m] = self.max_deg_in[m].max(deg_in[m]);
            self.max_deg_out[m] = self.max_deg_out[m].max(deg_out[m]);
        }

        if view.is_empty() {
            return Ok(());
        }
        let rates = policy.assign_rates(self.now, &view, self.cluster);
        if rates.len() != view.len() {
            return Err(SimError::RateVectorLength {
                policy: policy.name(),
                got: rates.len(),
                expected: view.len(),
            });
        }

        let mut sum_out = vec![0.0f64; self.cluster.n_machines()];
        let mut sum_in = vec![0.0f64; self.cluster.n_machines()];
        for (f, rate) in view.iter().zip(&rates) {
            if !rate.is_finite() || *rate < 0.0 {
                return Err(SimError::InvalidRate { policy: policy.name(), flow: f.id, rate: *rate });
            }
            sum_out[f.src_machine.0] += rate;
            sum_in[f.dst_machine.0] += rate;
        }
        for m in &self.cluster.machines {
            let slack = 1e-9 * m.bw_out_bps;
            if sum_out[m.id.0] > m.bw_out_bps + slack {
                return Err(SimError::RateViolation {
                    policy: policy.name(),
                    machine: m.id,
                    direction: "egress",
                    time: self.now,
                    assigned: sum_out[m.id.0],
                    capacity: m.bw_out_bps,
                });
            }
            let slack = 1e-9 * m.bw_in_bps;
            if sum_in[m.id.0] > m.bw_in_bps + slack {
                return Err(SimError::RateViolation {
                    policy: policy.name(),
                    machine: m.id,
                    direction: "ingress",
                    time: self.now,
                    assigned: sum_in[m.id.0],
                    capacity: m.bw_in_bps,
                });
            }
        }

        for (f, rate) in view.iter().zip(&rates) {
            let rt = self.flows.get_mut(&f.id).expect("active flow exists");
            if let Some((t0, old)) = rt.open_seg {
                if old != *rate {
                    if self.now > t0 && old > 0.0 {
                        rt.segments.push(Segment { t0_s: t0, t1_s: self.now, rate_bps: old });
                    }
                    rt.open_seg = if *rate > 0.0 { Some((self.now, *rate)) } else { None };
                }
            } else if *rate > 0.0 {
                rt.open_seg = Some((self.now, *rate));
            }
            rt.rate_bps = *rate;
        }
        Ok(())
    }

    fn into_record(self) -> ScheduleRecord {
        let makespan = self
            .spans
            .iter()
            .filter(|((_, n), _)| *n == self.n_iters)
            .map(|(_, s)| s.end_s)
            .fold(0.0f64, f64::max);
        let flows = self
            .flows
            .into_iter()
            .map(|(id, f)| {
                (
                    id,
                    FlowTrace {
                        dst_iter: f.dst_iter,
                        src_machine: f.src_machine,
                        dst_machine: f.dst_machine,
                        volume_bits: f.volume_bits,
                        admitted_s: f.admitted_s,
                        completed_s: f.completed_s,
                        segments: f.segments,
                    },
                )
            })
            .collect();
        ScheduleRecord {
            task_spans: self.spans,
            flows,
            makespan_s: makespan,
            stats: SimStats {
                events: self.events,
                max_deg_in: self.max_deg_in,
                max_deg_out: self.max_deg_out,
            },
        }
    }
}

#[derive(Debug, Default)]
struct InstantWork {
    task_starts: Vec<(TaskId, u32)>,
    instant_flows: Vec<FlowId>,
}

impl InstantWork {
    fn is_empty(&self) -> bool {
        self.task_starts.is_empty() && self.instant_flows.is_empty()
    }
}
