//! Randomized instance generators for the verification suites and a few
//! fixed configurations used by the comparison studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mix_seed;
use crate::model::{
    build_dependency_graph, demands, machine, ClusterSpec, DependencyGraph, FlowKey, JobSpec,
    MachineId, Placement, Resources, TaskId, TaskKind, TaskSpec,
};
use crate::profiles::IterationDraw;

/// A cluster + job + placement triple.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cluster: ClusterSpec,
    pub job: JobSpec,
    pub placement: Placement,
}

impl Instance {
    pub fn into_parts(self) -> (ClusterSpec, JobSpec, Placement) {
        (self.cluster, self.job, self.placement)
    }
}

/// Default per-kind demands (memory GB, CPU cores, GPUs), mirroring a small
/// GPU-server deployment: stores and samplers are CPU/memory bound, workers
/// take one GPU, the PS is light.
pub fn kind_demands(kind: TaskKind) -> Resources {
    match kind {
        TaskKind::GraphStore => demands(8.0, 1.0, 0.0),
        TaskKind::Sampler => demands(7.0, 2.0, 0.0),
        TaskKind::Worker => demands(3.0, 1.0, 1.0),
        TaskKind::Ps => demands(5.0, 1.0, 0.0),
    }
}

fn kind_base_time(kind: TaskKind) -> f64 {
    match kind {
        TaskKind::GraphStore => 0.04,
        TaskKind::Sampler => 0.06,
        TaskKind::Worker => 0.12,
        TaskKind::Ps => 0.03,
    }
}

/// Builds a job with `n_machines` graph stores (pinned round-robin),
/// `workers` workers with `samplers_per_worker` samplers each, and
/// `ps_count` parameter servers. Ids are assigned stores, samplers,
/// workers, then servers.
pub fn build_job(
    n_machines: usize,
    workers: usize,
    samplers_per_worker: usize,
    ps_count: usize,
    n_iterations: u32,
) -> JobSpec {
    let mut tasks = Vec::new();
    for m in 0..n_machines {
        tasks.push(TaskSpec {
            id: TaskId(tasks.len()),
            kind: TaskKind::GraphStore,
            demands: kind_demands(TaskKind::GraphStore),
            base_time_s: kind_base_time(TaskKind::GraphStore),
            links: vec![],
            pin: Some(MachineId(m)),
        });
    }
    let first_worker = n_machines + workers * samplers_per_worker;
    for w in 0..workers {
        for _ in 0..samplers_per_worker {
            tasks.push(TaskSpec {
                id: TaskId(tasks.len()),
                kind: TaskKind::Sampler,
                demands: kind_demands(TaskKind::Sampler),
                base_time_s: kind_base_time(TaskKind::Sampler),
                links: vec![TaskId(first_worker + w)],
                pin: None,
            });
        }
    }
    for _ in 0..workers {
        tasks.push(TaskSpec {
            id: TaskId(tasks.len()),
            kind: TaskKind::Worker,
            demands: kind_demands(TaskKind::Worker),
            base_time_s: kind_base_time(TaskKind::Worker),
            links: vec![],
            pin: None,
        });
    }
    for _ in 0..ps_count {
        tasks.push(TaskSpec {
            id: TaskId(tasks.len()),
            kind: TaskKind::Ps,
            demands: kind_demands(TaskKind::Ps),
            base_time_s: kind_base_time(TaskKind::Ps),
            links: vec![],
            pin: None,
        });
    }
    JobSpec { tasks, n_iterations }
}

/// Size ranges for randomized instances (inclusive).
#[derive(Debug, Clone)]
pub struct SizeRanges {
    pub machines: (usize, usize),
    pub workers: (usize, usize),
    pub samplers_per_worker: (usize, usize),
    pub ps: (usize, usize),
    pub iterations: (u32, u32),
}

impl Default for SizeRanges {
    fn default() -> Self {
        SizeRanges {
            machines: (2, 4),
            workers: (1, 4),
            samplers_per_worker: (1, 2),
            ps: (1, 1),
            iterations: (3, 3),
        }
    }
}

/// The sweep ranges used by the constraint-validity suite.
pub fn sweep_ranges() -> SizeRanges {
    SizeRanges {
        machines: (2, 16),
        workers: (1, 20),
        samplers_per_worker: (1, 4),
        ps: (1, 2),
        iterations: (1, 10),
    }
}

/// Random instance within the given size ranges. Machine compute capacities
/// are generous (placement feasibility is a separate concern from schedule
/// validity); NIC bandwidths are heterogeneous from {10, 20, 50} Gbps.
/// Non-store tasks are placed uniformly at random.
pub fn random_instance_sized(seed: u64, ranges: &SizeRanges) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x1157, 0, 0));
    let m = rng.gen_range(ranges.machines.0..=ranges.machines.1);
    let workers = rng.gen_range(ranges.workers.0..=ranges.workers.1);
    let spw = rng.gen_range(ranges.samplers_per_worker.0..=ranges.samplers_per_worker.1);
    let ps = rng.gen_range(ranges.ps.0..=ranges.ps.1);
    let iters = rng.gen_range(ranges.iterations.0..=ranges.iterations.1);

    let bw_choices = [10.0, 20.0, 50.0];
    let cluster = ClusterSpec {
        machines: (0..m)
            .map(|i| {
                let bw = bw_choices[rng.gen_range(0..bw_choices.len())];
                machine(i, 1e6, 1e6, 1e6, bw)
            })
            .collect(),
    };
    let mut job = build_job(m, workers, spw, ps, iters);
    // Jitter base times so instances are not all alike.
    for t in job.tasks.iter_mut() {
        t.base_time_s *= 0.5 + rng.gen::<f64>();
    }
    let assign = job
        .tasks
        .iter()
        .map(|t| t.pin.unwrap_or_else(|| MachineId(rng.gen_range(0..m))))
        .collect();
    Instance { cluster, job, placement: Placement::new(assign, m) }
}

/// Small default instance for unit tests.
pub fn random_instance(seed: u64) -> Instance {
    random_instance_sized(seed, &SizeRanges::default())
}

// ---------------------------------------------------------------------------
// Tick-aligned tiny instances for the optimality oracle
// ---------------------------------------------------------------------------

/// A tiny instance with explicit draws, sized for exhaustive scheduling:
/// at most 3 machines, 8 tasks, 2 iterations, and 8 positive-volume flow
/// occurrences, with durations and standalone transfer times aligned to
/// `tick_s`.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub cluster: ClusterSpec,
    pub job: JobSpec,
    pub placement: Placement,
    pub graph: DependencyGraph,
    pub draws: Vec<IterationDraw>,
    pub tick_s: f64,
}

pub const ORACLE_TICK_S: f64 = 0.01;
pub const ORACLE_MAX_FLOWS: usize = 8;

/// Total flow occurrences over the horizon (edges whose destination
/// iteration exists).
pub fn flow_occurrences(graph: &DependencyGraph, placement: &Placement, n_iters: u32) -> usize {
    let mut count = 0;
    for (src, e) in graph.edges() {
        if placement.machine_of(src) == placement.machine_of(e.dst) {
            continue;
        }
        for n in 1..=n_iters {
            if n + e.iter_offset <= n_iters {
                count += 1;
            }
        }
    }
    count
}

/// Generates a tick-aligned tiny instance. Rejection-samples shapes and
/// placements until the flow-occurrence budget holds.
pub fn random_tiny_oracle(seed: u64) -> OracleInstance {
    let tick = ORACLE_TICK_S;
    for attempt in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x0c1e, attempt, 0));
        let m = rng.gen_range(2..=3usize);
        let workers = rng.gen_range(1..=2usize);
        let spw = 1usize;
        let n_tasks = m + workers * spw + workers + 1;
        if n_tasks > 8 {
            continue;
        }
        let n_iters = rng.gen_range(1..=2u32);

        // Bandwidths from {1, 2} Gbps; volumes are multiples of 2e7 bits so
        // every standalone transfer time is a multiple of the tick.
        let cluster = ClusterSpec {
            machines: (0..m)
                .map(|i| machine(i, 1e6, 1e6, 1e6, if rng.gen_bool(0.5) { 1.0 } else { 2.0 }))
                .collect(),
        };
        let mut job = build_job(m, workers, spw, 1, n_iters);
        for t in job.tasks.iter_mut() {
            t.base_time_s = tick * rng.gen_range(1..=20) as f64;
        }
        let assign: Vec<MachineId> = job
            .tasks
            .iter()
            .map(|t| t.pin.unwrap_or_else(|| MachineId(rng.gen_range(0..m))))
            .collect();
        let placement = Placement::new(assign, m);
        let graph = build_dependency_graph(&job).unwrap();
        let occurrences = flow_occurrences(&graph, &placement, n_iters);
        if occurrences == 0 || occurrences > ORACLE_MAX_FLOWS {
            continue;
        }

        // Explicit draws: durations from the job, volumes tick-aligned per
        // edge and iteration.
        let mut draws = Vec::new();
        for n in 1..=n_iters {
            let durations_s = job.tasks.iter().map(|t| (t.id, t.base_time_s)).collect();
            let mut volumes_bytes = std::collections::BTreeMap::new();
            for (src, e) in graph.edges() {
                let bits = 2e7 * rng.gen_range(1..=12) as f64;
                volumes_bytes.insert(FlowKey { src, dst: e.dst }, bits / 8.0);
            }
            draws.push(IterationDraw { iteration: n, durations_s, volumes_bytes });
        }
        return OracleInstance { cluster, job, placement, graph, draws, tick_s: tick };
    }
    unreachable!("tiny oracle instance generation should not exhaust its attempts")
}

// ---------------------------------------------------------------------------
// Reference computations for tests
// ---------------------------------------------------------------------------

/// Longest dependency path over task occurrences, ignoring transfer time:
/// the exact makespan when every task shares one machine. `base_times[j]`
/// is the constant duration of task `j`.
pub fn task_dag_longest_path(
    job: &JobSpec,
    graph: &DependencyGraph,
    base_times: &[f64],
    n_iters: u32,
) -> f64 {
    let preds = graph.predecessors();
    let rank = |k: TaskKind| match k {
        TaskKind::GraphStore => 0,
        TaskKind::Sampler => 1,
        TaskKind::Worker => 2,
        TaskKind::Ps => 3,
    };
    let mut order: Vec<TaskId> = job.tasks.iter().map(|t| t.id).collect();
    order.sort_by_key(|t| (rank(job.task(*t).kind), *t));

    let mut end = vec![vec![0.0f64; n_iters as usize]; job.n_tasks()];
    for n in 1..=n_iters {
        for t in &order {
            let mut start: f64 = 0.0;
            for (src, offset) in &preds[t.0] {
                if n > *offset {
                    start = start.max(end[src.0][(n - offset - 1) as usize]);
                }
            }
            if n >= 2 {
                start = start.max(end[t.0][(n - 2) as usize]);
            }
            end[t.0][(n - 1) as usize] = start + base_times[t.0];
        }
    }
    end.iter().map(|row| row[(n_iters - 1) as usize]).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Fixed comparison-study configuration
// ---------------------------------------------------------------------------

/// Eight machines with heterogeneous bandwidths {10, 20, 50} Gbps and mixed
/// memory/CPU/GPU capacities; paired with [`study_job8`].
pub fn study_cluster8() -> ClusterSpec {
    let spec: [(f64, f64, f64, f64); 8] = [
        (128.0, 16.0, 4.0, 50.0),
        (96.0, 12.0, 2.0, 20.0),
        (64.0, 8.0, 2.0, 10.0),
        (128.0, 16.0, 4.0, 50.0),
        (64.0, 12.0, 2.0, 20.0),
        (96.0, 16.0, 2.0, 10.0),
        (64.0, 8.0, 2.0, 20.0),
        (128.0, 12.0, 2.0, 50.0),
    ];
    ClusterSpec {
        machines: spec
            .iter()
            .enumerate()
            .map(|(i, (mem, cpu, gpu, bw))| machine(i, *mem, *cpu, *gpu, *bw))
            .collect(),
    }
}

/// 8 graph stores, 16 workers with 2 samplers each, 1 PS.
pub fn study_job8(n_iterations: u32) -> JobSpec {
    build_job(8, 16, 2, 1, n_iterations)
}
