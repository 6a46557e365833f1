//! Constraint validator for schedule records.
//!
//! Replays a record against the full constraint system of the scheduling
//! problem: initial graph-store starts, start-exactly-once, flow/task
//! ordering within and across iterations, same-machine handoff ordering,
//! volume conservation, and per-NIC bandwidth caps at every instant.
//! Checks use a relative tolerance of 1e-9.

use std::collections::BTreeMap;
use std::fmt;

use super::{FlowId, ScheduleRecord};
use crate::model::{ClusterSpec, DependencyGraph, FlowKey, JobSpec, Placement, TaskKind};
use crate::model::build_dependency_graph;
use crate::profiles::IterationDraw;

pub const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// A first-iteration graph store does not start at t=0.
    GraphStoreInitialStart,
    /// A task occurrence is missing from the record or duplicated.
    StartExactlyOnce,
    /// A flow transmits before its source task completes.
    FlowBeforeSourceDone,
    /// A task starts before one of its inbound flows completes or delivers
    /// its full volume.
    TaskBeforeFlowDone,
    /// A task starts before a same-machine predecessor completes.
    SameMachineOrdering,
    /// Iteration n+1 of a task starts before iteration n completes.
    IterationOrdering,
    /// A flow starts before the same task pair's previous-iteration flow
    /// completes.
    FlowIterationOrdering,
    /// Delivered rate-time area differs from the drawn volume.
    VolumeConservation,
    /// Ingress bandwidth exceeded on some machine at some instant.
    IngressOverload,
    /// Egress bandwidth exceeded on some machine at some instant.
    EgressOverload,
    /// A recorded flow should not exist (colocated endpoints or unknown
    /// edge), or an expected flow is missing.
    FlowStructure,
    /// Recorded makespan differs from the last completion.
    MakespanMismatch,
    /// Segments overlap, run backwards, or carry non-positive rates.
    SegmentStructure,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::GraphStoreInitialStart => "graph-store-initial-start",
            ViolationKind::StartExactlyOnce => "start-exactly-once",
            ViolationKind::FlowBeforeSourceDone => "flow-before-source-done",
            ViolationKind::TaskBeforeFlowDone => "task-before-flow-done",
            ViolationKind::SameMachineOrdering => "same-machine-ordering",
            ViolationKind::IterationOrdering => "iteration-ordering",
            ViolationKind::FlowIterationOrdering => "flow-iteration-ordering",
            ViolationKind::VolumeConservation => "volume-conservation",
            ViolationKind::IngressOverload => "ingress-overload",
            ViolationKind::EgressOverload => "egress-overload",
            ViolationKind::FlowStructure => "flow-structure",
            ViolationKind::MakespanMismatch => "makespan-mismatch",
            ViolationKind::SegmentStructure => "segment-structure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

/// Validates a record against the constraint system. Returns every violation
/// found; an empty list means the schedule is feasible.
pub fn validate(
    record: &ScheduleRecord,
    job: &JobSpec,
    cluster: &ClusterSpec,
    placement: &Placement,
    draws: &[IterationDraw],
) -> Vec<Violation> {
    let graph = match build_dependency_graph(job) {
        Ok(g) => g,
        Err(e) => {
            return vec![Violation {
                kind: ViolationKind::FlowStructure,
                detail: format!("job is malformed: {e}"),
            }]
        }
    };
    validate_with_graph(record, job, cluster, placement, &graph, draws)
}

pub fn validate_with_graph(
    record: &ScheduleRecord,
    job: &JobSpec,
    cluster: &ClusterSpec,
    placement: &Placement,
    graph: &DependencyGraph,
    draws: &[IterationDraw],
) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_iters = draws.len() as u32;
    let horizon = record.makespan_s.abs().max(1.0);
    let tol = REL_TOL * horizon;

    // Start exactly once, and graph stores at t=0 in iteration 1.
    for t in &job.tasks {
        for n in 1..=n_iters {
            match record.task_spans.get(&(t.id, n)) {
                None => out.push(Violation {
                    kind: ViolationKind::StartExactlyOnce,
                    detail: format!("({}, n{n}) never started", t.id),
                }),
                Some(span) => {
                    if t.kind == TaskKind::GraphStore && n == 1 && span.start_s.abs() > tol {
                        out.push(Violation {
                            kind: ViolationKind::GraphStoreInitialStart,
                            detail: format!("({}, n1) starts at {}s", t.id, span.start_s),
                        });
                    }
                }
            }
        }
    }
    for (task, n) in record.task_spans.keys() {
        if task.0 >= job.n_tasks() || *n == 0 || *n > n_iters {
            out.push(Violation {
                kind: ViolationKind::StartExactlyOnce,
                detail: format!("record contains unknown occurrence ({task}, n{n})"),
            });
        }
    }

    // Flow structure and per-flow checks.
    let mut seen: BTreeMap<FlowId, ()> = BTreeMap::new();
    for (id, trace) in &record.flows {
        seen.insert(*id, ());
        let src_m = placement.machine_of(id.src);
        let dst_m = placement.machine_of(id.dst);
        if src_m == dst_m {
            out.push(Violation {
                kind: ViolationKind::FlowStructure,
                detail: format!("{id} connects colocated tasks on {src_m}"),
            });
            continue;
        }
        let edge = graph
            .successors(id.src)
            .iter()
            .find(|e| e.dst == id.dst && id.iter + e.iter_offset == trace.dst_iter);
        if edge.is_none() {
            out.push(Violation {
                kind: ViolationKind::FlowStructure,
                detail: format!("{id} matches no dependency edge"),
            });
            continue;
        }

        // Segment sanity and delivered volume.
        let mut delivered = 0.0f64;
        let mut prev_end = f64::NEG_INFINITY;
        for seg in &trace.segments {
            if seg.t1_s <= seg.t0_s || seg.rate_bps <= 0.0 || seg.t0_s < prev_end - tol {
                out.push(Violation {
                    kind: ViolationKind::SegmentStructure,
                    detail: format!("{id} segment [{}, {}] rate {}", seg.t0_s, seg.t1_s, seg.rate_bps),
                });
            }
            prev_end = seg.t1_s;
            delivered += (seg.t1_s - seg.t0_s) * seg.rate_bps;
        }
        let volume = draws
            .get((id.iter - 1) as usize)
            .and_then(|d| d.volumes_bytes.get(&FlowKey { src: id.src, dst: id.dst }))
            .map(|b| b * 8.0);
        match volume {
            None => out.push(Violation {
                kind: ViolationKind::FlowStructure,
                detail: format!("{id} has no drawn volume"),
            }),
            Some(v) => {
                if (delivered - v).abs() > REL_TOL * v.max(1.0) {
                    out.push(Violation {
                        kind: ViolationKind::VolumeConservation,
                        detail: format!("{id} delivered {delivered} of {v} bits"),
                    });
                }
            }
        }

        if let Some(first) = trace.segments.first() {
            // Transmission starts only after the source task completes.
            if let Some(src_span) = record.task_spans.get(&(id.src, id.iter)) {
                if first.t0_s < src_span.end_s - tol {
                    out.push(Violation {
                        kind: ViolationKind::FlowBeforeSourceDone,
                        detail: format!(
                            "{id} starts at {}s before source end {}s",
                            first.t0_s, src_span.end_s
                        ),
                    });
                }
            }
        }
        if let Some(last) = trace.segments.last() {
            // The consumer waits for the full transfer.
            if let Some(dst_span) = record.task_spans.get(&(id.dst, trace.dst_iter)) {
                if dst_span.start_s < last.t1_s - tol {
                    out.push(Violation {
                        kind: ViolationKind::TaskBeforeFlowDone,
                        detail: format!(
                            "({}, n{}) starts at {}s before {id} ends at {}s",
                            id.dst, trace.dst_iter, dst_span.start_s, last.t1_s
                        ),
                    });
                }
            }
            // Previous-iteration flow of the same pair must have finished.
            if id.iter >= 2 {
                let prev = FlowId { src: id.src, dst: id.dst, iter: id.iter - 1 };
                if let Some(prev_trace) = record.flows.get(&prev) {
                    if let (Some(first), Some(prev_last)) =
                        (trace.segments.first(), prev_trace.segments.last())
                    {
                        if first.t0_s < prev_last.t1_s - tol {
                            out.push(Violation {
                                kind: ViolationKind::FlowIterationOrdering,
                                detail: format!(
                                    "{id} starts at {}s before {prev} ends at {}s",
                                    first.t0_s, prev_last.t1_s
                                ),
                            });
                        }
                    }
                }
            }
        }
    }

    // Ordering constraints driven by the dependency structure.
    for (src, edge) in graph.edges() {
        let src_m = placement.machine_of(src);
        let dst_m = placement.machine_of(edge.dst);
        for n in 1..=n_iters {
            let dst_iter = n + edge.iter_offset;
            if dst_iter > n_iters {
                continue;
            }
            let (src_span, dst_span) = match (
                record.task_spans.get(&(src, n)),
                record.task_spans.get(&(edge.dst, dst_iter)),
            ) {
                (Some(a), Some(b)) => (a, b),
                _ => continue, // missing starts already reported
            };
            if src_m == dst_m {
                if dst_span.start_s < src_span.end_s - tol {
                    out.push(Violation {
                        kind: ViolationKind::SameMachineOrdering,
                        detail: format!(
                            "({}, n{dst_iter}) starts at {}s before local input ({src}, n{n}) ends at {}s",
                            edge.dst, dst_span.start_s, src_span.end_s
                        ),
                    });
                }
            } else {
                let id = FlowId { src, dst: edge.dst, iter: n };
                match record.flows.get(&id) {
                    None => out.push(Violation {
                        kind: ViolationKind::FlowStructure,
                        detail: format!("{id} is missing from the record"),
                    }),
                    Some(trace) => {
                        // Zero-volume transfers constrain nothing.
                        if trace.volume_bits > 0.0 && dst_span.start_s < trace.completed_s - tol {
                            out.push(Violation {
                                kind: ViolationKind::TaskBeforeFlowDone,
                                detail: format!(
                                    "({}, n{dst_iter}) starts at {}s before {id} completes at {}s",
                                    edge.dst, dst_span.start_s, trace.completed_s
                                ),
                            });
                        }
                    }
                }
            }
        }
    }

    // Same task across iterations.
    for t in &job.tasks {
        for n in 1..n_iters {
            if let (Some(a), Some(b)) =
                (record.task_spans.get(&(t.id, n)), record.task_spans.get(&(t.id, n + 1)))
            {
                if b.start_s < a.end_s - tol {
                    out.push(Violation {
                        kind: ViolationKind::IterationOrdering,
                        detail: format!(
                            "({}, n{}) starts at {}s before ({}, n{n}) ends at {}s",
                            t.id,
                            n + 1,
                            b.start_s,
                            t.id,
                            a.end_s
                        ),
                    });
                }
            }
        }
    }

    // Per-NIC bandwidth at every instant, swept over segment boundaries.
    for m in &cluster.machines {
        for (direction, cap) in [("in", m.bw_in_bps), ("out", m.bw_out_bps)] {
            let mut deltas: BTreeMap<u64, f64> = BTreeMap::new();
            for trace in record.flows.values() {
                let touches = if direction == "in" {
                    trace.dst_machine == m.id
                } else {
                    trace.src_machine == m.id
                };
                if !touches {
                    continue;
                }
                for seg in &trace.segments {
                    *deltas.entry(seg.t0_s.to_bits()).or_insert(0.0) += seg.rate_bps;
                    *deltas.entry(seg.t1_s.to_bits()).or_insert(0.0) -= seg.rate_bps;
                }
            }
            let mut times: Vec<f64> = deltas.keys().map(|b| f64::from_bits(*b)).collect();
            times.sort_by(|a, b| a.total_cmp(b));
            let mut level = 0.0f64;
            for t in &times {
                level += deltas[&t.to_bits()];
                if level > cap * (1.0 + REL_TOL) {
                    let kind = if direction == "in" {
                        ViolationKind::IngressOverload
                    } else {
                        ViolationKind::EgressOverload
                    };
                    out.push(Violation {
                        kind,
                        detail: format!(
                            "{}: {} {direction}gress rate {level} exceeds {cap} bits/s at t={t}s",
                            m.id, m.id
                        ),
                    });
                    break;
                }
            }
        }
    }

    // Makespan is the last completion of the final iteration.
    let last_end = record
        .task_spans
        .iter()
        .filter(|((_, n), _)| *n == n_iters)
        .map(|(_, s)| s.end_s)
        .fold(0.0f64, f64::max);
    if (record.makespan_s - last_end).abs() > tol {
        out.push(Violation {
            kind: ViolationKind::MakespanMismatch,
            detail: format!("recorded {} vs computed {last_end}", record.makespan_s),
        });
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate, Segment};
    use crate::instances;
    use crate::oes::OesPolicy;
    use crate::profiles::{draw_iterations, synth_profile, DrawKeys};

    #[test]
    fn oes_record_validates_clean() {
        let inst = instances::random_instance(5);
        let profile = synth_profile(1e8, 1.4, 32, 11).unwrap();
        let mut policy = OesPolicy::default();
        let record =
            simulate(&inst.job, &inst.cluster, &inst.placement, &mut policy, &profile, 3).unwrap();
        let graph = build_dependency_graph(&inst.job).unwrap();
        let keys = DrawKeys::new(&inst.job, &graph);
        let draws = draw_iterations(&profile, &keys, 3);
        let violations = validate(&record, &inst.job, &inst.cluster, &inst.placement, &draws);
        assert!(violations.is_empty(), "{violations:#?}");
    }

    #[test]
    fn flow_started_too_early_is_reported() {
        let inst = instances::random_instance(6);
        let profile = synth_profile(1e8, 1.4, 32, 11).unwrap();
        let mut policy = OesPolicy::default();
        let mut record =
            simulate(&inst.job, &inst.cluster, &inst.placement, &mut policy, &profile, 2).unwrap();
        let graph = build_dependency_graph(&inst.job).unwrap();
        let keys = DrawKeys::new(&inst.job, &graph);
        let draws = draw_iterations(&profile, &keys, 2);

        // Shift one flow's first segment to before its source task ends.
        let id = *record
            .flows
            .iter()
            .find(|(_, t)| !t.segments.is_empty())
            .map(|(id, _)| id)
            .expect("instance has a flow");
        let src_end = record.task_spans[&(id.src, id.iter)].end_s;
        let trace = record.flows.get_mut(&id).unwrap();
        let seg = trace.segments[0];
        trace.segments[0] = Segment { t0_s: (src_end - 0.05).max(0.0) - 0.01, ..seg };

        let violations = validate(&record, &inst.job, &inst.cluster, &inst.placement, &draws);
        assert!(
            violations.iter().any(|v| v.kind == ViolationKind::FlowBeforeSourceDone
                && v.detail.contains(&format!("{id}"))),
            "{violations:#?}"
        );
    }

    #[test]
    fn bandwidth_overload_is_reported_with_timestamp() {
        let inst = instances::random_instance(7);
        let profile = synth_profile(1e8, 1.4, 32, 11).unwrap();
        let mut policy = OesPolicy::default();
        let mut record =
            simulate(&inst.job, &inst.cluster, &inst.placement, &mut policy, &profile, 2).unwrap();
        let graph = build_dependency_graph(&inst.job).unwrap();
        let keys = DrawKeys::new(&inst.job, &graph);
        let draws = draw_iterations(&profile, &keys, 2);

        // Inflate one segment's rate far beyond the ingress capacity. Volume
        // conservation breaks too; both must be reported.
        let id = *record
            .flows
            .iter()
            .find(|(_, t)| !t.segments.is_empty())
            .map(|(id, _)| id)
            .unwrap();
        let cap = inst.cluster.machines[record.flows[&id].dst_machine.0].bw_in_bps;
        record.flows.get_mut(&id).unwrap().segments[0].rate_bps = 3.0 * cap;

        let violations = validate(&record, &inst.job, &inst.cluster, &inst.placement, &draws);
        assert!(violations.iter().any(|v| v.kind == ViolationKind::IngressOverload
            && v.detail.contains("at t=")));
        assert!(violations.iter().any(|v| v.kind == ViolationKind::VolumeConservation));
    }
}
