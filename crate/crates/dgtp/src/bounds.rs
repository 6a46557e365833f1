//! Competitive-ratio machinery: extraction of a gap-free dependency chain
//! covering a schedule's makespan, the lower/upper bounds that chain yields,
//! and a brute-force optimal scheduler for tiny instances.

use thiserror::Error;

use crate::engine::{FlowId, ScheduleRecord};
use crate::model::{
    ClusterSpec, DependencyGraph, FlowKey, FlowStatics, JobSpec, MachineId, Placement, TaskId,
};
use crate::profiles::IterationDraw;

/// One link of the chain: a task occurrence or a flow occurrence. Parts are
/// back-to-back in time; the chain spans `[0, makespan]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainPart {
    Task { task: TaskId, iter: u32, start_s: f64, end_s: f64 },
    Flow {
        id: FlowId,
        start_s: f64,
        end_s: f64,
        volume_bits: f64,
        src_machine: MachineId,
        dst_machine: MachineId,
    },
}

impl ChainPart {
    pub fn start_s(&self) -> f64 {
        match self {
            ChainPart::Task { start_s, .. } | ChainPart::Flow { start_s, .. } => *start_s,
        }
    }

    pub fn end_s(&self) -> f64 {
        match self {
            ChainPart::Task { end_s, .. } | ChainPart::Flow { end_s, .. } => *end_s,
        }
    }
}

/// A dependency chain covering a schedule from t=0 to its makespan.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Parts in forward time order.
    pub parts: Vec<ChainPart>,
    /// Total task execution time on the chain.
    pub p_sum_s: f64,
    /// Number of flow parts.
    pub flow_count: usize,
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("record has no task spans")]
    EmptyRecord,
    #[error("({task}, n{iter}) starts at {start}s with no certifying input, local handoff, or previous iteration")]
    UnexplainedTaskStart { task: TaskId, iter: u32, start: f64 },
    #[error("flow {id} admitted at {admitted}s with neither source completion nor predecessor flow ending there")]
    UnexplainedFlowStart { id: FlowId, admitted: f64 },
    #[error("chain walk exceeded {cap} parts; record looks inconsistent")]
    WalkDiverged { cap: usize },
    #[error("chain covers [{start}s, {end}s] of a [0, {makespan}s] schedule")]
    CoverageGap { start: f64, end: f64, makespan: f64 },
}

/// Walks backward from the last-finishing final-iteration task, at each step
/// certifying the part's start time by (in tie-break order) the last
/// arriving remote input flow, a same-machine input completing exactly then,
/// or the previous iteration of the same task; a flow's start is certified
/// by its source task or by the previous-iteration flow that blocked it.
/// The result is a gap-free chain covering `[0, makespan]`.
pub fn extract_chain(
    record: &ScheduleRecord,
    graph: &DependencyGraph,
    placement: &Placement,
) -> Result<Chain, ChainError> {
    let n_iters = record.task_spans.keys().map(|(_, n)| *n).max().ok_or(ChainError::EmptyRecord)?;
    let eps = 1e-9 * record.makespan_s.abs().max(1.0);
    let preds = graph.predecessors();

    // o1: last finisher of the final iteration, smallest id on ties.
    let (&(last_task, _), last_span) = record
        .task_spans
        .iter()
        .filter(|((_, n), _)| *n == n_iters)
        .max_by(|(ka, a), (kb, b)| a.end_s.total_cmp(&b.end_s).then(kb.0.cmp(&ka.0)))
        .ok_or(ChainError::EmptyRecord)?;

    let cap = record.task_spans.len() + record.flows.len() + 16;
    let mut backward: Vec<ChainPart> = Vec::new();
    let mut cursor = Cursor::Task(last_task, n_iters);
    let mut cursor_start = last_span.start_s;
    backward.push(ChainPart::Task {
        task: last_task,
        iter: n_iters,
        start_s: last_span.start_s,
        end_s: last_span.end_s,
    });

    while cursor_start > eps {
        if backward.len() > cap {
            return Err(ChainError::WalkDiverged { cap });
        }
        match cursor {
            Cursor::Task(task, iter) => {
                let mut chosen: Option<ChainPart> = None;
                // Remote inputs whose flow completes exactly at the start.
                for (src, offset) in &preds[task.0] {
                    if iter <= *offset {
                        continue;
                    }
                    let src_iter = iter - offset;
                    if placement.machine_of(*src) == placement.machine_of(task) {
                        continue;
                    }
                    let id = FlowId { src: *src, dst: task, iter: src_iter };
                    if let Some(trace) = record.flows.get(&id) {
                        if (trace.completed_s - cursor_start).abs() <= eps {
                            chosen = Some(ChainPart::Flow {
                                id,
                                start_s: trace.admitted_s,
                                end_s: trace.completed_s,
                                volume_bits: trace.volume_bits,
                                src_machine: trace.src_machine,
                                dst_machine: trace.dst_machine,
                            });
                            break;
                        }
                    }
                }
                // Same-machine inputs completing exactly at the start.
                if chosen.is_none() {
                    for (src, offset) in &preds[task.0] {
                        if iter <= *offset {
                            continue;
                        }
                        let src_iter = iter - offset;
                        if placement.machine_of(*src) != placement.machine_of(task) {
                            continue;
                        }
                        if let Some(span) = record.task_spans.get(&(*src, src_iter)) {
                            if (span.end_s - cursor_start).abs() <= eps {
                                chosen = Some(ChainPart::Task {
                                    task: *src,
                                    iter: src_iter,
                                    start_s: span.start_s,
                                    end_s: span.end_s,
                                });
                                break;
                            }
                        }
                    }
                }
                // Previous iteration of the same task.
                if chosen.is_none() && iter >= 2 {
                    if let Some(span) = record.task_spans.get(&(task, iter - 1)) {
                        if (span.end_s - cursor_start).abs() <= eps {
                            chosen = Some(ChainPart::Task {
                                task,
                                iter: iter - 1,
                                start_s: span.start_s,
                                end_s: span.end_s,
                            });
                        }
                    }
                }
                match chosen {
                    Some(part) => {
                        cursor = cursor_of(&part);
                        cursor_start = part.start_s();
                        backward.push(part);
                    }
                    None => {
                        return Err(ChainError::UnexplainedTaskStart {
                            task,
                            iter,
                            start: cursor_start,
                        })
                    }
                }
            }
            Cursor::Flow(id) => {
                // Source task completing at admission, else the
                // previous-iteration flow that blocked this one.
                let src_span = record.task_spans.get(&(id.src, id.iter));
                let part = if let Some(span) =
                    src_span.filter(|s| (s.end_s - cursor_start).abs() <= eps)
                {
                    ChainPart::Task {
                        task: id.src,
                        iter: id.iter,
                        start_s: span.start_s,
                        end_s: span.end_s,
                    }
                } else {
                    let prev = FlowId { src: id.src, dst: id.dst, iter: id.iter.saturating_sub(1) };
                    match record.flows.get(&prev).filter(|t| {
                        id.iter >= 2 && (t.completed_s - cursor_start).abs() <= eps
                    }) {
                        Some(trace) => ChainPart::Flow {
                            id: prev,
                            start_s: trace.admitted_s,
                            end_s: trace.completed_s,
                            volume_bits: trace.volume_bits,
                            src_machine: trace.src_machine,
                            dst_machine: trace.dst_machine,
                        },
                        None => {
                            return Err(ChainError::UnexplainedFlowStart {
                                id,
                                admitted: cursor_start,
                            })
                        }
                    }
                };
                cursor = cursor_of(&part);
                cursor_start = part.start_s();
                backward.push(part);
            }
        }
    }

    backward.reverse();
    let parts = backward;

    // Coverage: contiguous parts from 0 to the makespan.
    let start = parts.first().map(|p| p.start_s()).unwrap_or(f64::NAN);
    let end = parts.last().map(|p| p.end_s()).unwrap_or(f64::NAN);
    let contiguous = parts.windows(2).all(|w| (w[0].end_s() - w[1].start_s()).abs() <= eps);
    if !contiguous || start.abs() > eps || (end - record.makespan_s).abs() > eps {
        return Err(ChainError::CoverageGap { start, end, makespan: record.makespan_s });
    }

    let p_sum_s = parts
        .iter()
        .map(|p| match p {
            ChainPart::Task { start_s, end_s, .. } => end_s - start_s,
            ChainPart::Flow { .. } => 0.0,
        })
        .sum();
    let flow_count = parts.iter().filter(|p| matches!(p, ChainPart::Flow { .. })).count();
    Ok(Chain { parts, p_sum_s, flow_count })
}

enum Cursor {
    Task(TaskId, u32),
    Flow(FlowId),
}

fn cursor_of(part: &ChainPart) -> Cursor {
    match part {
        ChainPart::Task { task, iter, .. } => Cursor::Task(*task, *iter),
        ChainPart::Flow { id, .. } => Cursor::Flow(*id),
    }
}

/// Any schedule must execute the chain sequentially, each flow at most at
/// the standalone rate: `p_sum + sum(d_q / min(B_in, B_out))` lower-bounds
/// the optimal makespan.
pub fn chain_lower_bound(chain: &Chain, cluster: &ClusterSpec) -> f64 {
    chain.p_sum_s
        + chain
            .parts
            .iter()
            .map(|p| match p {
                ChainPart::Flow { volume_bits, src_machine, dst_machine, .. } => {
                    let b = cluster.machines[dst_machine.0]
                        .bw_in_bps
                        .min(cluster.machines[src_machine.0].bw_out_bps);
                    volume_bits / b
                }
                ChainPart::Task { .. } => 0.0,
            })
            .sum::<f64>()
}

/// Upper bound on the balanced-rate schedule via the chain: every chain flow
/// moves at least at `min(B_in / deg_in, B_out / deg_out)` computed from the
/// one-iteration degrees, so the chain (and with it the makespan) fits in
/// `p_sum + sum(d_q / min(B_in/deg_in, B_out/deg_out))`.
pub fn chain_degree_bound(chain: &Chain, cluster: &ClusterSpec, statics: &FlowStatics) -> f64 {
    chain.p_sum_s
        + chain
            .parts
            .iter()
            .map(|p| match p {
                ChainPart::Flow { volume_bits, src_machine, dst_machine, .. } => {
                    let din = statics.deg_in[dst_machine.0].max(1) as f64;
                    let dout = statics.deg_out[src_machine.0].max(1) as f64;
                    let b = (cluster.machines[dst_machine.0].bw_in_bps / din)
                        .min(cluster.machines[src_machine.0].bw_out_bps / dout);
                    volume_bits / b
                }
                ChainPart::Task { .. } => 0.0,
            })
            .sum::<f64>()
}

// ---------------------------------------------------------------------------
// Brute-force optimal scheduler for tiny instances
// ---------------------------------------------------------------------------

pub const MAX_ORACLE_MACHINES: usize = 3;
pub const MAX_ORACLE_TASKS: usize = 8;
pub const MAX_ORACLE_ITERS: u32 = 2;
pub const MAX_ORACLE_FLOWS: usize = 8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance exceeds the oracle size cap: {what}")]
    TooLarge { what: String },
    #[error("{what} is not aligned to the {tick}s tick grid")]
    Misaligned { what: String, tick: f64 },
    #[error("draw is missing {what}")]
    MissingDraw { what: String },
    #[error("oracle simulation stalled; instance is inconsistent")]
    Stalled,
}

#[derive(Debug, Clone)]
struct OracleFlow {
    src: TaskId,
    dst: TaskId,
    src_iter: u32,
    dst_iter: u32,
    src_machine: MachineId,
    dst_machine: MachineId,
    volume_bits: f64,
}

/// Exact minimum makespan over schedules satisfying the full constraint
/// system, with offline knowledge of every draw.
///
/// Search space: tasks start greedily the moment their dependencies clear
/// (delaying a start can only delay completions, since under offline rate
/// control an early-released flow can always be held at rate zero), so a
/// schedule is determined by how NIC capacity is split among concurrent
/// flows. For a fixed flow priority order, greedy maximal rates (each flow
/// takes the residual `min(B_out, B_in)` in priority order, recomputed at
/// every completion) are optimal by an exchange argument: raising a
/// higher-priority flow's rate at the expense of a lower-priority one never
/// delays the set of completions prefix-wise. Ordering the flows of any
/// feasible schedule by completion time and re-running them greedily
/// completes every flow no later, so enumerating all priority orders covers
/// an optimal schedule. The minimum over all `flows!` orders is returned.
pub fn brute_force_optimal(
    job: &JobSpec,
    cluster: &ClusterSpec,
    placement: &Placement,
    graph: &DependencyGraph,
    draws: &[IterationDraw],
    tick_s: f64,
) -> Result<f64, OracleError> {
    let n_iters = draws.len() as u32;
    if cluster.n_machines() > MAX_ORACLE_MACHINES {
        return Err(OracleError::TooLarge { what: format!("{} machines", cluster.n_machines()) });
    }
    if job.n_tasks() > MAX_ORACLE_TASKS {
        return Err(OracleError::TooLarge { what: format!("{} tasks", job.n_tasks()) });
    }
    if n_iters > MAX_ORACLE_ITERS {
        return Err(OracleError::TooLarge { what: format!("{n_iters} iterations") });
    }

    // Collect positive-volume flow occurrences; zero-volume transfers are
    // born complete and never contend for bandwidth.
    let mut flows: Vec<OracleFlow> = Vec::new();
    for (src, e) in graph.edges() {
        let src_m = placement.machine_of(src);
        let dst_m = placement.machine_of(e.dst);
        if src_m == dst_m {
            continue;
        }
        for n in 1..=n_iters {
            let dst_iter = n + e.iter_offset;
            if dst_iter > n_iters {
                continue;
            }
            let bytes = draws[(n - 1) as usize]
                .volumes_bytes
                .get(&FlowKey { src, dst: e.dst })
                .copied()
                .ok_or_else(|| OracleError::MissingDraw {
                    what: format!("volume of {src}->{} at n{n}", e.dst),
                })?;
            let volume_bits = bytes * 8.0;
            if volume_bits <= 0.0 {
                continue;
            }
            let standalone = cluster.machines[src_m.0]
                .bw_out_bps
                .min(cluster.machines[dst_m.0].bw_in_bps);
            let q = volume_bits / standalone / tick_s;
            if (q - q.round()).abs() > 1e-9 * q.abs().max(1.0) {
                return Err(OracleError::Misaligned {
                    what: format!("transfer time of {src}->{} at n{n}", e.dst),
                    tick: tick_s,
                });
            }
            flows.push(OracleFlow {
                src,
                dst: e.dst,
                src_iter: n,
                dst_iter,
                src_machine: src_m,
                dst_machine: dst_m,
                volume_bits,
            });
        }
    }
    if flows.len() > MAX_ORACLE_FLOWS {
        return Err(OracleError::TooLarge { what: format!("{} flow occurrences", flows.len()) });
    }
    for t in &job.tasks {
        for d in draws {
            let dur = d.durations_s.get(&t.id).copied().ok_or_else(|| {
                OracleError::MissingDraw { what: format!("duration of {}", t.id) }
            })?;
            let q = dur / tick_s;
            if (q - q.round()).abs() > 1e-9 * q.abs().max(1.0) {
                return Err(OracleError::Misaligned {
                    what: format!("duration of {}", t.id),
                    tick: tick_s,
                });
            }
        }
    }

    // Enumerate priority orders with Heap's algorithm, pruning runs that
    // pass the best makespan found so far.
    let mut order: Vec<usize> = (0..flows.len()).collect();
    let mut best = priority_greedy_makespan(job, cluster, graph, draws, &flows, &order, f64::INFINITY)?;
    let n = order.len();
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            let span = priority_greedy_makespan(job, cluster, graph, draws, &flows, &order, best)?;
            if span < best {
                best = span;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Greedy maximal-rate simulation under a fixed flow priority order.
/// Returns the makespan, or `abort_above` early once the clock passes it.
fn priority_greedy_makespan(
    job: &JobSpec,
    cluster: &ClusterSpec,
    graph: &DependencyGraph,
    draws: &[IterationDraw],
    flows: &[OracleFlow],
    order: &[usize],
    abort_above: f64,
) -> Result<f64, OracleError> {
    let n_iters = draws.len() as u32;
    let n_tasks = job.n_tasks();
    let preds = graph.predecessors();

    // Dependency counters per task occurrence.
    let mut deps = vec![vec![0usize; n_iters as usize]; n_tasks];
    for j in 0..n_tasks {
        for n in 1..=n_iters {
            let mut d = 0;
            for (_, offset) in &preds[j] {
                if n > *offset {
                    d += 1;
                }
            }
            if n >= 2 {
                d += 1;
            }
            deps[j][(n - 1) as usize] = d;
        }
    }

    let mut task_end = vec![vec![f64::INFINITY; n_iters as usize]; n_tasks];
    let mut running: Vec<(f64, TaskId, u32)> = Vec::new();
    let mut tasks_left = n_tasks * n_iters as usize;

    // Flow bookkeeping indexed as in `flows`.
    let mut remaining: Vec<f64> = flows.iter().map(|f| f.volume_bits).collect();
    let mut released = vec![false; flows.len()];
    let mut done = vec![false; flows.len()];
    // A flow is gated until the same pair's previous-iteration flow is done.
    let gate: Vec<Option<usize>> = flows
        .iter()
        .map(|f| {
            flows.iter().position(|g| {
                g.src == f.src && g.dst == f.dst && g.src_iter + 1 == f.src_iter
            })
        })
        .collect();

    let mut now = 0.0f64;
    let mut rates = vec![0.0f64; flows.len()];

    // Instant-work queue: tasks whose dependencies just cleared.
    let mut ready: Vec<(TaskId, u32)> = Vec::new();
    for j in 0..n_tasks {
        if deps[j][0] == 0 {
            ready.push((TaskId(j), 1));
        }
    }

    let mut guard = 0usize;
    loop {
        guard += 1;
        if guard > 64 * (n_tasks * n_iters as usize + flows.len()) + 1024 {
            return Err(OracleError::Stalled);
        }

        // Resolve everything that happens at `now`.
        while let Some((task, iter)) = ready.pop() {
            let dur = draws[(iter - 1) as usize].durations_s[&task];
            if dur <= 0.0 {
                complete_task(
                    task, iter, now, n_iters, job, graph, flows, &mut deps, &mut task_end,
                    &mut released, &mut done, &mut remaining, &mut ready,
                );
                tasks_left -= 1;
            } else {
                task_end[task.0][(iter - 1) as usize] = now + dur;
                running.push((now + dur, task, iter));
            }
        }
        // Release flows whose source is done and whose gate has lifted;
        // zero-volume flows were filtered out earlier.
        let mut progressed = true;
        while progressed {
            progressed = false;
            for i in 0..flows.len() {
                if released[i] || done[i] {
                    continue;
                }
                let f = &flows[i];
                let src_done = task_end[f.src.0][(f.src_iter - 1) as usize] <= now;
                let gate_open = gate[i].map(|g| done[g]).unwrap_or(true);
                if src_done && gate_open {
                    released[i] = true;
                    progressed = true;
                }
            }
            if !ready.is_empty() {
                // A zero-duration task completed during release; re-run the
                // ready loop.
                while let Some((task, iter)) = ready.pop() {
                    let dur = draws[(iter - 1) as usize].durations_s[&task];
                    if dur <= 0.0 {
                        complete_task(
                            task, iter, now, n_iters, job, graph, flows, &mut deps,
                            &mut task_end, &mut released, &mut done, &mut remaining, &mut ready,
                        );
                        tasks_left -= 1;
                    } else {
                        task_end[task.0][(iter - 1) as usize] = now + dur;
                        running.push((now + dur, task, iter));
                    }
                }
                progressed = true;
            }
        }

        if tasks_left == 0 {
            let makespan = task_end
                .iter()
                .map(|row| row[(n_iters - 1) as usize])
                .fold(0.0f64, f64::max);
            return Ok(makespan);
        }
        if now > abort_above {
            return Ok(f64::INFINITY);
        }

        // Greedy maximal rates in priority order.
        let mut res_out: Vec<f64> = cluster.machines.iter().map(|m| m.bw_out_bps).collect();
        let mut res_in: Vec<f64> = cluster.machines.iter().map(|m| m.bw_in_bps).collect();
        for r in rates.iter_mut() {
            *r = 0.0;
        }
        for &i in order {
            if !released[i] || done[i] {
                continue;
            }
            let f = &flows[i];
            let r = res_out[f.src_machine.0].min(res_in[f.dst_machine.0]).max(0.0);
            rates[i] = r;
            res_out[f.src_machine.0] -= r;
            res_in[f.dst_machine.0] -= r;
        }

        // Next event: earliest running-task end or flow completion.
        let mut t_next = f64::INFINITY;
        for (end, _, _) in &running {
            t_next = t_next.min(*end);
        }
        for i in 0..flows.len() {
            if released[i] && !done[i] && rates[i] > 0.0 {
                t_next = t_next.min(now + remaining[i] / rates[i]);
            }
        }
        if !t_next.is_finite() {
            return Err(OracleError::Stalled);
        }

        let dt = t_next - now;
        now = t_next;
        let tie = 1e-12 * now.abs().max(1.0);

        for i in 0..flows.len() {
            if released[i] && !done[i] && rates[i] > 0.0 {
                remaining[i] -= rates[i] * dt;
                if remaining[i] <= flows[i].volume_bits * 1e-12 + 1e-9 {
                    remaining[i] = 0.0;
                    done[i] = true;
                    let f = &flows[i];
                    satisfy(f.dst, f.dst_iter, &mut deps, &mut ready);
                }
            }
        }
        let mut idx = 0;
        while idx < running.len() {
            let (end, task, iter) = running[idx];
            if end <= now + tie {
                running.swap_remove(idx);
                complete_task(
                    task, iter, end, n_iters, job, graph, flows, &mut deps, &mut task_end,
                    &mut released, &mut done, &mut remaining, &mut ready,
                );
                tasks_left -= 1;
            } else {
                idx += 1;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn complete_task(
    task: TaskId,
    iter: u32,
    end: f64,
    n_iters: u32,
    job: &JobSpec,
    graph: &DependencyGraph,
    flows: &[OracleFlow],
    deps: &mut [Vec<usize>],
    task_end: &mut [Vec<f64>],
    _released: &mut [bool],
    _done: &mut [bool],
    _remaining: &mut [f64],
    ready: &mut Vec<(TaskId, u32)>,
) {
    let _ = job;
    task_end[task.0][(iter - 1) as usize] = end;
    if iter < n_iters {
        satisfy(task, iter + 1, deps, ready);
    }
    // Local handoffs and zero-volume edges clear instantly; remote
    // positive-volume edges clear when their flow completes.
    for e in graph.successors(task) {
        let dst_iter = iter + e.iter_offset;
        if dst_iter > n_iters {
            continue;
        }
        let has_flow = flows
            .iter()
            .any(|f| f.src == task && f.dst == e.dst && f.src_iter == iter);
        if !has_flow {
            satisfy(e.dst, dst_iter, deps, ready);
        }
    }
}

fn satisfy(task: TaskId, iter: u32, deps: &mut [Vec<usize>], ready: &mut Vec<(TaskId, u32)>) {
    let d = &mut deps[task.0][(iter - 1) as usize];
    debug_assert!(*d > 0);
    *d -= 1;
    if *d == 0 {
        ready.push((task, iter));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate_draws;
    use crate::engine::SimOptions;
    use crate::instances::{self, random_tiny_oracle};
    use crate::model::{build_dependency_graph, one_iteration_flows};
    use crate::oes::OesPolicy;
    use crate::profiles::{constant_profile, draw_iterations, DrawKeys};

    fn run_oes(inst: &instances::OracleInstance) -> ScheduleRecord {
        let mut policy = OesPolicy::default();
        simulate_draws(
            &inst.job,
            &inst.cluster,
            &inst.placement,
            &mut policy,
            &inst.graph,
            &inst.draws,
            &SimOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_machine_chain_is_pure_task_sequence() {
        use crate::model::{machine, MachineId, Placement};
        let cluster = crate::model::ClusterSpec { machines: vec![machine(0, 1e6, 1e6, 1e6, 10.0)] };
        let job = instances::build_job(1, 1, 1, 1, 3);
        let placement = Placement::new(vec![MachineId(0); job.n_tasks()], 1);
        let graph = build_dependency_graph(&job).unwrap();
        let profile = constant_profile(0.04, 0.06, 0.12, 0.03, 1e6, 1e6, 1e5, 3);
        let keys = DrawKeys::new(&job, &graph);
        let draws = draw_iterations(&profile, &keys, 3);
        let mut policy = OesPolicy::default();
        let record = simulate_draws(
            &job, &cluster, &placement, &mut policy, &graph, &draws, &SimOptions::default(),
        )
        .unwrap();

        let chain = extract_chain(&record, &graph, &placement).unwrap();
        assert_eq!(chain.flow_count, 0);
        assert!((chain.p_sum_s - record.makespan_s).abs() < 1e-9);
        assert!(chain.parts.iter().all(|p| matches!(p, ChainPart::Task { .. })));
        // Lower bound degenerates to the task time.
        let lb = chain_lower_bound(&chain, &cluster);
        assert!((lb - chain.p_sum_s).abs() < 1e-12);
    }

    #[test]
    fn remote_store_chain_is_task_flow_tasks() {
        use crate::model::{machine, MachineId, Placement};
        // Store 1 is remote; its transfer gates the sampler. Chain:
        // [store task, flow, sampler, worker, ps].
        let cluster = crate::model::ClusterSpec {
            machines: vec![machine(0, 1e6, 1e6, 1e6, 10.0), machine(1, 1e6, 1e6, 1e6, 10.0)],
        };
        let job = instances::build_job(2, 1, 1, 1, 1);
        // tasks: 0,1 stores; 2 sampler; 3 worker; 4 ps.
        let placement = Placement::new(
            vec![MachineId(0), MachineId(1), MachineId(0), MachineId(0), MachineId(0)],
            2,
        );
        let graph = build_dependency_graph(&job).unwrap();
        // 10 Gbit transfer = 1 s, dominating the local handoff.
        let profile = constant_profile(0.04, 0.06, 0.12, 0.03, 1.25e9, 1e3, 1e3, 3);
        let keys = DrawKeys::new(&job, &graph);
        let draws = draw_iterations(&profile, &keys, 1);
        let mut policy = OesPolicy::default();
        let record = simulate_draws(
            &job, &cluster, &placement, &mut policy, &graph, &draws, &SimOptions::default(),
        )
        .unwrap();

        let chain = extract_chain(&record, &graph, &placement).unwrap();
        assert_eq!(chain.flow_count, 1);
        assert!(matches!(chain.parts[0], ChainPart::Task { task: TaskId(1), .. }));
        assert!(matches!(chain.parts[1], ChainPart::Flow { .. }));
        // p_sum: store 0.04 + sampler 0.06 + worker 0.12 + ps 0.03; flow 1s.
        assert!((chain.p_sum_s - 0.25).abs() < 1e-9);
        let lb = chain_lower_bound(&chain, &cluster);
        assert!((lb - 1.25).abs() < 1e-9);
    }

    #[test]
    fn chain_covers_oes_makespan_on_random_instances() {
        for seed in 0..25u64 {
            let inst = random_tiny_oracle(seed);
            let record = run_oes(&inst);
            let chain = extract_chain(&record, &inst.graph, &inst.placement)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            let covered: f64 = chain
                .parts
                .iter()
                .map(|p| p.end_s() - p.start_s())
                .sum();
            assert!(
                (covered - record.makespan_s).abs() <= 1e-9 * record.makespan_s.max(1.0),
                "seed {seed}: covered {covered} of {}",
                record.makespan_s
            );

            // Degree bound holds for the balanced-rate schedule.
            let statics = one_iteration_flows(&inst.placement, &inst.graph);
            let ub = chain_degree_bound(&chain, &inst.cluster, &statics);
            assert!(
                record.makespan_s <= ub * (1.0 + 1e-9),
                "seed {seed}: {} > {ub}",
                record.makespan_s
            );
        }
    }

    #[test]
    fn oracle_single_flow_instance_is_exact() {
        use crate::model::{machine, MachineId, Placement};
        let cluster = crate::model::ClusterSpec {
            machines: vec![machine(0, 1e6, 1e6, 1e6, 1.0), machine(1, 1e6, 1e6, 1e6, 1.0)],
        };
        let mut job = instances::build_job(2, 1, 1, 1, 1);
        for t in job.tasks.iter_mut() {
            t.base_time_s = 0.05;
        }
        let placement = Placement::new(
            vec![MachineId(0), MachineId(1), MachineId(0), MachineId(0), MachineId(0)],
            2,
        );
        let graph = build_dependency_graph(&job).unwrap();
        // Store 1 -> sampler: 2e8 bits over 1 Gbps = 0.2 s; every other
        // volume zero.
        let mut volumes = std::collections::BTreeMap::new();
        for (src, e) in graph.edges() {
            volumes.insert(FlowKey { src, dst: e.dst }, 0.0);
        }
        volumes.insert(FlowKey { src: TaskId(1), dst: TaskId(2) }, 2e8 / 8.0);
        let draws = vec![IterationDraw {
            iteration: 1,
            durations_s: job.tasks.iter().map(|t| (t.id, 0.05)).collect(),
            volumes_bytes: volumes,
        }];

        let t_star =
            brute_force_optimal(&job, &cluster, &placement, &graph, &draws, 0.01).unwrap();
        // store 0.05 + flow 0.2 + sampler 0.05 + worker 0.05 + ps 0.05.
        assert!((t_star - 0.4).abs() < 1e-9, "{t_star}");
    }

    #[test]
    fn oracle_colocated_instance_matches_critical_path() {
        use crate::model::{machine, MachineId, Placement};
        let cluster = crate::model::ClusterSpec { machines: vec![machine(0, 1e6, 1e6, 1e6, 1.0)] };
        let mut job = instances::build_job(1, 2, 1, 1, 2);
        for t in job.tasks.iter_mut() {
            t.base_time_s = 0.03;
        }
        let placement = Placement::new(vec![MachineId(0); job.n_tasks()], 1);
        let graph = build_dependency_graph(&job).unwrap();
        let mut draws = Vec::new();
        for n in 1..=2 {
            draws.push(IterationDraw {
                iteration: n,
                durations_s: job.tasks.iter().map(|t| (t.id, 0.03)).collect(),
                volumes_bytes: graph
                    .edges()
                    .map(|(src, e)| (FlowKey { src, dst: e.dst }, 1e6))
                    .collect(),
            });
        }
        let t_star =
            brute_force_optimal(&job, &cluster, &placement, &graph, &draws, 0.01).unwrap();
        let base: Vec<f64> = vec![0.03; job.n_tasks()];
        let expected = instances::task_dag_longest_path(&job, &graph, &base, 2);
        assert!((t_star - expected).abs() < 1e-9);
    }

    #[test]
    fn oracle_beats_fully_sequential_execution_under_contention() {
        // Two flows contending pairwise; pipelining must beat executing
        // every task and transfer back to back.
        let seed = (100..300u64)
            .find(|s| {
                let cand = random_tiny_oracle(*s);
                let statics = one_iteration_flows(&cand.placement, &cand.graph);
                statics.delta >= 2 && cand.draws.len() == 2
            })
            .expect("a contended instance exists in the seed range");
        let inst = random_tiny_oracle(seed);
        let t_star = brute_force_optimal(
            &inst.job, &inst.cluster, &inst.placement, &inst.graph, &inst.draws, inst.tick_s,
        )
        .unwrap();

        let mut sequential = 0.0;
        for d in &inst.draws {
            sequential += d.durations_s.values().sum::<f64>();
        }
        for (src, e) in inst.graph.edges() {
            let src_m = inst.placement.machine_of(src);
            let dst_m = inst.placement.machine_of(e.dst);
            if src_m == dst_m {
                continue;
            }
            let b = inst.cluster.machines[src_m.0]
                .bw_out_bps
                .min(inst.cluster.machines[dst_m.0].bw_in_bps);
            for d in &inst.draws {
                if d.iteration + e.iter_offset <= inst.draws.len() as u32 {
                    sequential += d.volumes_bytes[&FlowKey { src, dst: e.dst }] * 8.0 / b;
                }
            }
        }
        assert!(t_star < sequential, "{t_star} vs sequential {sequential}");
    }

    #[test]
    fn competitive_sandwich_on_tiny_instances() {
        // T_LB <= T* <= T_OES <= delta * T* over a batch of seeds.
        for seed in 0..15u64 {
            let inst = random_tiny_oracle(seed);
            let record = run_oes(&inst);
            let t_oes = record.makespan_s;
            let t_star = brute_force_optimal(
                &inst.job, &inst.cluster, &inst.placement, &inst.graph, &inst.draws, inst.tick_s,
            )
            .unwrap();
            let chain = extract_chain(&record, &inst.graph, &inst.placement).unwrap();
            let t_lb = chain_lower_bound(&chain, &inst.cluster);
            let statics = one_iteration_flows(&inst.placement, &inst.graph);
            let delta = statics.delta.max(1) as f64;
            let tol = 1e-9 * t_oes.max(1.0);
            assert!(t_lb <= t_star + tol, "seed {seed}: T_LB {t_lb} > T* {t_star}");
            assert!(t_star <= t_oes + tol, "seed {seed}: T* {t_star} > T_OES {t_oes}");
            assert!(
                t_oes <= delta * t_star + tol,
                "seed {seed}: T_OES {t_oes} > {delta} * {t_star}"
            );
        }
    }

    #[test]
    fn oracle_refuses_oversized_instances() {
        let inst = instances::random_instance_sized(
            3,
            &instances::SizeRanges {
                machines: (4, 4),
                workers: (2, 2),
                samplers_per_worker: (1, 1),
                ps: (1, 1),
                iterations: (1, 1),
            },
        );
        let graph = build_dependency_graph(&inst.job).unwrap();
        let profile = constant_profile(0.04, 0.06, 0.12, 0.03, 1e6, 1e6, 1e5, 3);
        let keys = DrawKeys::new(&inst.job, &graph);
        let draws = draw_iterations(&profile, &keys, 1);
        let err = brute_force_optimal(
            &inst.job, &inst.cluster, &inst.placement, &graph, &draws, 0.01,
        )
        .unwrap_err();
        assert!(matches!(err, OracleError::TooLarge { .. }));
    }
}
