//! Command-line front end: profile generation, placement search, simulation,
//! policy comparison, bound verification, and parameter sweeps, all emitting
//! plot-ready CSV.
//!
//! Exit codes: 0 success, 1 input error, 2 schedule validation failure,
//! 3 bound-verification failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::baselines::{colocated_placement, policy_by_name, BaselineError};
use crate::bounds::{brute_force_optimal, chain_degree_bound, chain_lower_bound, extract_chain};
use crate::engine::record::fmt_g9;
use crate::engine::validate::validate_with_graph;
use crate::engine::{
    simulate_draws, ActiveFlow, ScheduleRecord, SchedulerPolicy, SimError, SimOptions,
};
use crate::instances::random_tiny_oracle;
use crate::mix_seed;
use crate::model::{
    build_dependency_graph, load_cluster, load_job, load_placement, one_iteration_flows,
    save_placement, ClusterSpec, DependencyGraph, JobSpec, Placement,
};
use crate::oes::OesPolicy;
use crate::placement::{etp_chains, ifs, EtpConfig};
use crate::profiles::{
    draw_iterations, load_profile, measured_pmr, save_profile, synth_profile_with, DrawKeys,
    Profile, SynthParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dgtp",
    version,
    about = "Placement search and online scheduling simulator for distributed GNN training jobs"
)]
pub struct Cli {
    /// Root seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a profile with a target mean volume and peak-to-mean ratio.
    GenProfile {
        #[arg(long)]
        mean_volume_bytes: f64,
        #[arg(long, default_value_t = 1.16)]
        pmr: f64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Gradient/parameter tensor bytes (default: mean volume / 8).
        #[arg(long)]
        model_bytes: Option<f64>,
        /// Output profile file.
        #[arg(long)]
        output: PathBuf,
    },
    /// Simulate one run and emit schedule CSVs.
    Simulate {
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Rate policy: oes, fifo, omcoflow, mrtf.
        #[arg(long, default_value = "oes")]
        policy: String,
        /// Placement source: dgtp, colocated, ifs, or file:<path>.
        #[arg(long, default_value = "dgtp")]
        placement: String,
        /// Iterations to simulate (default: the job's).
        #[arg(long)]
        iters: Option<u32>,
        /// Redistribute NIC slack left by the balanced rule.
        #[arg(long)]
        work_conserving: bool,
        #[command(flatten)]
        search: SearchOpts,
    },
    /// Search for a placement and emit it with the search trace.
    Search {
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[command(flatten)]
        search: SearchOpts,
    },
    /// Run several systems over several seeds and compare makespans.
    Compare {
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Comma-separated systems: dgtp, distdgl, omcoflow, mrtf.
        #[arg(long, default_value = "dgtp,distdgl,omcoflow,mrtf", value_delimiter = ',')]
        systems: Vec<String>,
        /// Seeded runs per system.
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long)]
        iters: Option<u32>,
        #[command(flatten)]
        search: SearchOpts,
    },
    /// Check the scheduling bounds on randomized tiny instances.
    Verify {
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Sweep batch scale or peak-to-mean ratio and record makespans.
    Sweep {
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Axis: batch-scale or pmr.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value = "dgtp,distdgl,omcoflow,mrtf", value_delimiter = ',')]
        systems: Vec<String>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long)]
        iters: Option<u32>,
        #[command(flatten)]
        search: SearchOpts,
    },
}

#[derive(Debug, Clone, Parser)]
pub struct SearchOpts {
    /// Search transition budget.
    #[arg(long, default_value_t = 10_000)]
    pub budget: usize,
    /// Capacity relaxation factor for proposals.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Acceptance temperature.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Iterations per makespan estimate during search.
    #[arg(long, default_value_t = 20)]
    pub est_iters: u32,
    /// Independent search chains.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
}

impl SearchOpts {
    fn config(&self, seed: u64) -> EtpConfig {
        EtpConfig {
            budget: self.budget,
            mu: self.mu,
            beta: self.beta,
            est_iters: self.est_iters,
            seed,
        }
    }
}

/// Parses argv and runs; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Profile(#[from] crate::profiles::ProfileError),
    #[error(transparent)]
    Placement(#[from] crate::placement::PlacementError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("unknown policy `{0}` (expected oes, fifo, omcoflow, mrtf)")]
    UnknownPolicy(String),
    #[error("unknown placement source `{0}` (expected dgtp, colocated, ifs, file:<path>)")]
    UnknownPlacement(String),
    #[error("unknown system `{0}` (expected dgtp, distdgl, omcoflow, mrtf)")]
    UnknownSystem(String),
    #[error("unknown sweep axis `{0}` (expected batch-scale or pmr)")]
    UnknownAxis(String),
    #[error("no axis values supplied")]
    NoValues,
    #[error("failed to write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    std::fs::create_dir_all(&cli.out)
        .map_err(|source| CliError::Io { path: cli.out.display().to_string(), source })?;
    match &cli.command {
        Command::GenProfile { mean_volume_bytes, pmr, samples, model_bytes, output } => {
            let mut params = SynthParams::new(*mean_volume_bytes, *pmr, *samples, cli.seed);
            if let Some(mb) = model_bytes {
                params.model_bytes = *mb;
            }
            let profile = synth_profile_with(&params)?;
            save_profile(output, &profile)?;
            if !cli.quiet {
                let got = measured_pmr(&profile.gs_to_sampler_bytes).unwrap_or(f64::NAN);
                println!("wrote {} (measured pmr {})", output.display(), fmt_g9(got));
            }
            Ok(EXIT_OK)
        }
        Command::Simulate {
            cluster,
            job,
            profile,
            policy,
            placement,
            iters,
            work_conserving,
            search,
        } => cmd_simulate(
            &cli,
            cluster,
            job,
            profile,
            policy,
            placement,
            *iters,
            *work_conserving,
            search,
        ),
        Command::Search { cluster, job, profile, search } => {
            cmd_search(&cli, cluster, job, profile, search)
        }
        Command::Compare { cluster, job, profile, systems, seeds, iters, search } => {
            cmd_compare(&cli, cluster, job, profile, systems, *seeds, *iters, search)
        }
        Command::Verify { instances } => cmd_verify(&cli, *instances),
        Command::Sweep { cluster, job, profile, axis, values, systems, seeds, iters, search } => {
            cmd_sweep(&cli, cluster, job, profile, axis, values, systems, *seeds, *iters, search)
        }
    }
}

/// Over-capacity rate policy kept as a fault-injection hook for the engine's
/// rejection path; not part of the documented policy set.
struct OverdrivePolicy;

impl SchedulerPolicy for OverdrivePolicy {
    fn name(&self) -> &'static str {
        "overdrive"
    }
    fn assign_rates(&mut self, _now: f64, flows: &[ActiveFlow], cluster: &ClusterSpec) -> Vec<f64> {
        flows.iter().map(|f| 2.0 * cluster.machines[f.src_machine.0].bw_out_bps).collect()
    }
}

fn make_policy(name: &str, work_conserving: bool) -> Result<Box<dyn SchedulerPolicy>, CliError> {
    if name == "overdrive" {
        return Ok(Box::new(OverdrivePolicy));
    }
    policy_by_name(name, work_conserving).ok_or_else(|| CliError::UnknownPolicy(name.to_string()))
}

fn resolve_placement(
    source: &str,
    job: &JobSpec,
    cluster: &ClusterSpec,
    profile: &Profile,
    cfg: &EtpConfig,
    chains: usize,
) -> Result<Placement, CliError> {
    match source {
        "dgtp" => Ok(etp_chains(job, cluster, profile, cfg, chains)?.placement),
        "colocated" => Ok(colocated_placement(job, cluster)?),
        "ifs" => Ok(ifs(job, cluster, cfg.seed)?.placement),
        other => match other.strip_prefix("file:") {
            Some(path) => Ok(load_placement(Path::new(path))?),
            None => Err(CliError::UnknownPlacement(other.to_string())),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cli: &Cli,
    cluster_path: &Path,
    job_path: &Path,
    profile_path: &Path,
    policy_name: &str,
    placement_source: &str,
    iters: Option<u32>,
    work_conserving: bool,
    search: &SearchOpts,
) -> Result<i32, CliError> {
    let cluster = load_cluster(cluster_path)?;
    let job = load_job(job_path, &cluster)?;
    let profile = load_profile(profile_path)?;
    let n_iters = iters.unwrap_or(job.n_iterations);
    let cfg = search.config(mix_seed(cli.seed, 0x5ea, 0, 0));
    let placement =
        resolve_placement(placement_source, &job, &cluster, &profile, &cfg, search.chains)?;
    let mut policy = make_policy(policy_name, work_conserving)?;

    let graph = build_dependency_graph(&job)?;
    let keys = DrawKeys::new(&job, &graph);
    let draws = draw_iterations(&profile, &keys, n_iters);
    let record = match simulate_draws(
        &job,
        &cluster,
        &placement,
        policy.as_mut(),
        &graph,
        &draws,
        &SimOptions::default(),
    ) {
        Ok(r) => r,
        Err(
            e @ (SimError::RateViolation { .. }
            | SimError::InvalidRate { .. }
            | SimError::RateVectorLength { .. }
            | SimError::PolicyStall { .. }),
        ) => {
            eprintln!("schedule rejected: {e}");
            return Ok(EXIT_VALIDATION);
        }
        Err(e) => return Err(e.into()),
    };

    let violations = validate_with_graph(&record, &job, &cluster, &placement, &graph, &draws);
    write_run_artifacts(&cli.out, &record, &placement)?;
    save_placement(&cli.out.join("placement.json"), &placement)?;
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Ok(EXIT_VALIDATION);
    }
    if !cli.quiet {
        println!(
            "policy {} on {} tasks over {} machines: makespan {} s ({} events)",
            policy.name(),
            job.n_tasks(),
            cluster.n_machines(),
            fmt_g9(record.makespan_s),
            record.stats.events
        );
    }
    Ok(EXIT_OK)
}

fn write_run_artifacts(
    out: &Path,
    record: &ScheduleRecord,
    placement: &Placement,
) -> Result<(), CliError> {
    write_file(&out.join("makespan.txt"), &format!("{}\n", fmt_g9(record.makespan_s)))?;
    write_file(&out.join("task_starts.csv"), &record.task_starts_csv())?;
    write_file(&out.join("flow_segments.csv"), &record.flow_segments_csv())?;
    write_file(&out.join("nic_util.csv"), &record.nic_util_csv(placement))?;
    Ok(())
}

fn cmd_search(
    cli: &Cli,
    cluster_path: &Path,
    job_path: &Path,
    profile_path: &Path,
    search: &SearchOpts,
) -> Result<i32, CliError> {
    let cluster = load_cluster(cluster_path)?;
    let job = load_job(job_path, &cluster)?;
    let profile = load_profile(profile_path)?;
    let cfg = search.config(mix_seed(cli.seed, 0x5ea, 0, 0));
    let outcome = etp_chains(&job, &cluster, &profile, &cfg, search.chains)?;

    save_placement(&cli.out.join("placement.json"), &outcome.placement)?;
    let mut trace = String::from("z,cost,accepted,feasible\n");
    for step in &outcome.trace {
        let _ = writeln!(
            trace,
            "{},{},{},{}",
            step.z,
            fmt_g9(step.cost),
            step.accepted as u8,
            step.feasible as u8
        );
    }
    write_file(&cli.out.join("search_trace.csv"), &trace)?;
    if !cli.quiet {
        println!(
            "best feasible placement: estimated makespan {} s after {} estimates",
            fmt_g9(outcome.best_makespan_s),
            outcome.estimates
        );
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SystemId {
    Dgtp,
    DistDgl,
    OmCoflow,
    Mrtf,
}

impl SystemId {
    fn parse(s: &str) -> Result<SystemId, CliError> {
        match s {
            "dgtp" => Ok(SystemId::Dgtp),
            "distdgl" => Ok(SystemId::DistDgl),
            "omcoflow" => Ok(SystemId::OmCoflow),
            "mrtf" => Ok(SystemId::Mrtf),
            other => Err(CliError::UnknownSystem(other.to_string())),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SystemId::Dgtp => "dgtp",
            SystemId::DistDgl => "distdgl",
            SystemId::OmCoflow => "omcoflow",
            SystemId::Mrtf => "mrtf",
        }
    }

    fn policy(&self) -> Box<dyn SchedulerPolicy> {
        match self {
            SystemId::Dgtp => Box::new(OesPolicy::default()),
            SystemId::DistDgl => Box::new(crate::baselines::FifoPolicy),
            SystemId::OmCoflow => Box::new(crate::baselines::OmCoflowPolicy),
            SystemId::Mrtf => Box::new(crate::baselines::MrtfPolicy),
        }
    }
}

/// One seeded run of every requested system on a shared scenario: the
/// planner searches its placement once per seed; OMCoflow and MRTF reuse
/// that placement, DistDGL colocates and transmits FIFO.
fn run_systems_once(
    job: &JobSpec,
    cluster: &ClusterSpec,
    graph: &DependencyGraph,
    base_profile: &Profile,
    systems: &[SystemId],
    seed: u64,
    n_iters: u32,
    search: &SearchOpts,
) -> Result<Vec<(SystemId, f64)>, CliError> {
    let profile = Profile { seed: mix_seed(seed, 0xd7a5, 0, 0), ..base_profile.clone() };
    let keys = DrawKeys::new(job, graph);
    let draws = draw_iterations(&profile, &keys, n_iters);

    let needs_search = systems
        .iter()
        .any(|s| matches!(s, SystemId::Dgtp | SystemId::OmCoflow | SystemId::Mrtf));
    let searched = if needs_search {
        let cfg = search.config(mix_seed(seed, 0xe7b0, 0, 0));
        Some(etp_chains(job, cluster, &profile, &cfg, search.chains)?.placement)
    } else {
        None
    };
    let colocated = if systems.contains(&SystemId::DistDgl) {
        Some(colocated_placement(job, cluster)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(systems.len());
    for sys in systems {
        let placement = match sys {
            SystemId::DistDgl => colocated.as_ref().expect("built above"),
            _ => searched.as_ref().expect("built above"),
        };
        let mut policy = sys.policy();
        let record = simulate_draws(
            job,
            cluster,
            placement,
            policy.as_mut(),
            graph,
            &draws,
            &SimOptions::default(),
        )?;
        out.push((*sys, record.makespan_s));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    cli: &Cli,
    cluster_path: &Path,
    job_path: &Path,
    profile_path: &Path,
    system_names: &[String],
    seeds: usize,
    iters: Option<u32>,
    search: &SearchOpts,
) -> Result<i32, CliError> {
    let cluster = load_cluster(cluster_path)?;
    let job = load_job(job_path, &cluster)?;
    let profile = load_profile(profile_path)?;
    let graph = build_dependency_graph(&job)?;
    let n_iters = iters.unwrap_or(job.n_iterations);
    let systems: Vec<SystemId> =
        system_names.iter().map(|s| SystemId::parse(s)).collect::<Result<_, _>>()?;

    let runs: Vec<Result<Vec<(SystemId, f64)>, CliError>> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            run_systems_once(
                &job,
                &cluster,
                &graph,
                &profile,
                &systems,
                mix_seed(cli.seed, 0xc0de, i as u64, 0),
                n_iters,
                search,
            )
        })
        .collect();

    let mut csv = String::from("kind,system,seed,makespan_s,mean_s,dgtp_reduction_pct\n");
    let mut sums: Vec<f64> = vec![0.0; systems.len()];
    for (i, run) in runs.into_iter().enumerate() {
        let run = run?;
        for (k, (sys, makespan)) in run.iter().enumerate() {
            sums[k] += makespan;
            let _ = writeln!(csv, "run,{},{},{},,", sys.name(), i, fmt_g9(*makespan));
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / seeds.max(1) as f64).collect();
    let dgtp_mean = systems.iter().position(|s| *s == SystemId::Dgtp).map(|i| means[i]);
    for (sys, mean) in systems.iter().zip(&means) {
        let reduction = match (dgtp_mean, sys) {
            (Some(dm), s) if *s != SystemId::Dgtp && *mean > 0.0 => {
                fmt_g9((mean - dm) / mean * 100.0)
            }
            _ => String::new(),
        };
        let _ = writeln!(csv, "summary,{},,,{},{}", sys.name(), fmt_g9(*mean), reduction);
        if !cli.quiet {
            println!("{}: mean makespan {} s", sys.name(), fmt_g9(*mean));
        }
    }
    write_file(&cli.out.join("compare.csv"), &csv)?;
    Ok(EXIT_OK)
}

fn cmd_verify(cli: &Cli, n_instances: usize) -> Result<i32, CliError> {
    let tol = 1e-9;
    let results: Vec<(String, bool)> = (0..n_instances)
        .into_par_iter()
        .map(|i| {
            let inst = random_tiny_oracle(mix_seed(cli.seed, 0x0bce, i as u64, 0));
            let mut policy = OesPolicy::default();
            let record = simulate_draws(
                &inst.job,
                &inst.cluster,
                &inst.placement,
                &mut policy,
                &inst.graph,
                &inst.draws,
                &SimOptions::default(),
            )
            .expect("tiny instances simulate cleanly");
            let t_oes = record.makespan_s;
            let statics = one_iteration_flows(&inst.placement, &inst.graph);
            let delta = statics.delta.max(1) as f64;

            let mut pass = true;
            // Observed flow degrees never exceed the one-iteration degrees.
            for m in 0..inst.cluster.n_machines() {
                if record.stats.max_deg_in[m] > statics.deg_in[m]
                    || record.stats.max_deg_out[m] > statics.deg_out[m]
                {
                    pass = false;
                }
            }
            let t_lb = match extract_chain(&record, &inst.graph, &inst.placement) {
                Ok(chain) => {
                    let ub = chain_degree_bound(&chain, &inst.cluster, &statics);
                    if t_oes > ub * (1.0 + tol) {
                        pass = false;
                    }
                    chain_lower_bound(&chain, &inst.cluster)
                }
                Err(_) => {
                    pass = false;
                    0.0
                }
            };

            let t_star = brute_force_optimal(
                &inst.job,
                &inst.cluster,
                &inst.placement,
                &inst.graph,
                &inst.draws,
                inst.tick_s,
            )
            .ok();
            if let Some(ts) = t_star {
                if t_lb > ts * (1.0 + tol)
                    || ts > t_oes * (1.0 + tol)
                    || t_oes > delta * ts * (1.0 + tol)
                {
                    pass = false;
                }
            }
            let ratio = t_star.map(|ts| t_oes / ts).unwrap_or(f64::NAN);
            let row = format!(
                "{i},{},{},{},{},{},{}",
                statics.delta,
                fmt_g9(t_oes),
                fmt_g9(t_lb),
                t_star.map(fmt_g9).unwrap_or_default(),
                fmt_g9(ratio),
                if pass { "PASS" } else { "FAIL" }
            );
            (row, pass)
        })
        .collect();

    let mut csv = String::from("instance,delta,t_oes,t_lb,t_star,ratio,pass\n");
    let mut all_pass = true;
    for (row, pass) in &results {
        csv.push_str(row);
        csv.push('\n');
        all_pass &= pass;
        if !cli.quiet {
            println!("{row}");
        }
    }
    write_file(&cli.out.join("verify.csv"), &csv)?;
    if all_pass {
        if !cli.quiet {
            println!("all {n_instances} instances PASS");
        }
        Ok(EXIT_OK)
    } else {
        eprintln!("bound verification failed");
        Ok(EXIT_VERIFY)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cli: &Cli,
    cluster_path: &Path,
    job_path: &Path,
    profile_path: &Path,
    axis: &str,
    values: &[f64],
    system_names: &[String],
    seeds: usize,
    iters: Option<u32>,
    search: &SearchOpts,
) -> Result<i32, CliError> {
    if values.is_empty() {
        return Err(CliError::NoValues);
    }
    let cluster = load_cluster(cluster_path)?;
    let job = load_job(job_path, &cluster)?;
    let base_profile = load_profile(profile_path)?;
    let graph = build_dependency_graph(&job)?;
    let n_iters = iters.unwrap_or(job.n_iterations);
    let systems: Vec<SystemId> =
        system_names.iter().map(|s| SystemId::parse(s)).collect::<Result<_, _>>()?;

    enum Axis {
        BatchScale,
        Pmr,
    }
    let axis = match axis {
        "batch-scale" | "batch_scale" => Axis::BatchScale,
        "pmr" => Axis::Pmr,
        other => return Err(CliError::UnknownAxis(other.to_string())),
    };

    // Profile variant per axis value: batch scale multiplies volumes; the
    // PMR axis regenerates volume samples around the base profile's mean.
    let mut variants: Vec<(f64, Profile)> = Vec::new();
    for (vi, v) in values.iter().enumerate() {
        let p = match axis {
            Axis::BatchScale => base_profile.scale_volumes(*v),
            Axis::Pmr => {
                let mean = base_profile.gs_to_sampler_bytes.iter().sum::<f64>()
                    / base_profile.gs_to_sampler_bytes.len() as f64;
                let n = base_profile.gs_to_sampler_bytes.len().max(50);
                let mut params =
                    SynthParams::new(mean, *v, n, mix_seed(cli.seed, 0x9a12, vi as u64, 0));
                params.model_bytes = base_profile.worker_to_ps_bytes;
                let synthesized = synth_profile_with(&params)?;
                Profile {
                    graph_store_s: base_profile.graph_store_s.clone(),
                    sampler_s: base_profile.sampler_s.clone(),
                    worker_s: base_profile.worker_s.clone(),
                    ps_s: base_profile.ps_s.clone(),
                    ..synthesized
                }
            }
        };
        variants.push((*v, p));
    }

    let tasks: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|vi| (0..seeds).map(move |si| (vi, si)))
        .collect();
    let runs: Vec<Result<Vec<(SystemId, f64)>, CliError>> = tasks
        .par_iter()
        .map(|(vi, si)| {
            run_systems_once(
                &job,
                &cluster,
                &graph,
                &variants[*vi].1,
                &systems,
                mix_seed(cli.seed, 0x53ed, *vi as u64, *si as u64),
                n_iters,
                search,
            )
        })
        .collect();

    let mut csv = String::from("axis,value,system,seed,makespan_s\n");
    let axis_name = match axis {
        Axis::BatchScale => "batch_scale",
        Axis::Pmr => "pmr",
    };
    for ((vi, si), run) in tasks.iter().zip(runs.into_iter()) {
        let run = run?;
        for (sys, makespan) in run {
            let _ = writeln!(
                csv,
                "{axis_name},{},{},{},{}",
                fmt_g9(variants[*vi].0),
                sys.name(),
                si,
                fmt_g9(makespan)
            );
        }
    }
    write_file(&cli.out.join("sweep.csv"), &csv)?;
    if !cli.quiet {
        println!("swept {} values x {} seeds x {} systems", values.len(), seeds, systems.len());
    }
    Ok(EXIT_OK)
}
