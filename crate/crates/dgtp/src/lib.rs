//! Planning and simulation of distributed GNN training jobs: task placement
//! on heterogeneous machines, online execution/flow scheduling, and the
//! verification machinery (constraint validator, competitive-ratio bounds,
//! brute-force oracles) around them.
//!
//! The crate is organized around the lifecycle of a planning run:
//!
//! * [`model`] — cluster/job/placement domain types, dependency structure,
//!   capacity feasibility, and static flow-degree analysis.
//! * [`profiles`] — per-iteration randomness: task durations and flow
//!   volumes, loaded from trace files or synthesized with a controlled
//!   peak-to-mean ratio.
//! * [`engine`] — deterministic event-driven simulator and the constraint
//!   validator for the schedules it produces.
//! * [`oes`] — the degree-balanced online rate policy.
//! * [`baselines`] — colocation placement and the FIFO / OMCoflow / MRTF
//!   rate policies used for comparison.
//! * [`bounds`] — chain extraction, lower bounds, and a brute-force optimal
//!   scheduler for tiny instances.
//! * [`placement`] — feasible-placement construction (IFS), the MCMC
//!   placement search (ETP), and the composed planner (DGTP).
//! * [`instances`] — randomized instance generators used by the verifier
//!   and the test suites.

pub mod baselines;
pub mod bounds;
pub mod cli;
pub mod engine;
pub mod instances;
pub mod model;
pub mod oes;
pub mod placement;
pub mod profiles;
mod seeding;

pub use model::{
    ClusterSpec, DependencyGraph, FeasibilityReport, FlowKey, JobSpec, Machine, MachineId,
    Placement, TaskId, TaskKind, TaskSpec,
};

pub use engine::{ScheduleRecord, SchedulerPolicy, SimOptions};
pub use profiles::{IterationDraw, Profile};

pub(crate) use seeding::mix_seed;
