//! Per-iteration randomness: task durations and flow volumes.
//!
//! A [`Profile`] holds empirical sample lists per task kind and per flow
//! class. Draws are keyed by `(seed, iteration, task-or-flow id)` with a
//! stateless PRNG, so a draw depends on nothing but those coordinates: two
//! simulations sharing a profile see identical volumes regardless of
//! placement or policy, which is what makes cost comparisons during the
//! placement search meaningful.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mix_seed;
use crate::model::{DependencyGraph, FlowKey, JobSpec, TaskId, TaskKind};

/// Traffic class of a dependency edge, determined by endpoint kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlowClass {
    GsToSampler,
    SamplerToWorker,
    WorkerToPs,
    PsToWorker,
}

pub fn flow_class(src: TaskKind, dst: TaskKind) -> Option<FlowClass> {
    match (src, dst) {
        (TaskKind::GraphStore, TaskKind::Sampler) => Some(FlowClass::GsToSampler),
        (TaskKind::Sampler, TaskKind::Worker) => Some(FlowClass::SamplerToWorker),
        (TaskKind::Worker, TaskKind::Ps) => Some(FlowClass::WorkerToPs),
        (TaskKind::Ps, TaskKind::Worker) => Some(FlowClass::PsToWorker),
        _ => None,
    }
}

/// Distributions for task durations (seconds) and flow volumes (bytes).
/// Worker/PS tensor volumes are scalars: the model size is fixed for a job.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub graph_store_s: Vec<f64>,
    pub sampler_s: Vec<f64>,
    pub worker_s: Vec<f64>,
    pub ps_s: Vec<f64>,
    pub gs_to_sampler_bytes: Vec<f64>,
    pub sampler_to_worker_bytes: Vec<f64>,
    pub worker_to_ps_bytes: f64,
    pub ps_to_worker_bytes: f64,
    pub seed: u64,
}

impl Profile {
    pub fn durations_of(&self, kind: TaskKind) -> &[f64] {
        match kind {
            TaskKind::GraphStore => &self.graph_store_s,
            TaskKind::Sampler => &self.sampler_s,
            TaskKind::Worker => &self.worker_s,
            TaskKind::Ps => &self.ps_s,
        }
    }

    /// Returns a copy with all volume distributions scaled by `factor`.
    /// Used by the batch-size sweep.
    pub fn scale_volumes(&self, factor: f64) -> Profile {
        let mut p = self.clone();
        for v in p.gs_to_sampler_bytes.iter_mut() {
            *v *= factor;
        }
        for v in p.sampler_to_worker_bytes.iter_mut() {
            *v *= factor;
        }
        p
    }
}

/// Realized durations and volumes for one iteration. A deterministic
/// function of `(profile.seed, iteration)` and the draw keys.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationDraw {
    pub iteration: u32,
    pub durations_s: BTreeMap<TaskId, f64>,
    pub volumes_bytes: BTreeMap<FlowKey, f64>,
}

/// The tasks and edges a draw must cover, extracted once from a job.
#[derive(Debug, Clone)]
pub struct DrawKeys {
    tasks: Vec<(TaskId, TaskKind)>,
    flows: Vec<(FlowKey, FlowClass)>,
}

impl DrawKeys {
    pub fn new(job: &JobSpec, graph: &DependencyGraph) -> DrawKeys {
        let tasks = job.tasks.iter().map(|t| (t.id, t.kind)).collect();
        let flows = graph
            .edges()
            .map(|(src, e)| {
                let class = flow_class(job.task(src).kind, job.task(e.dst).kind)
                    .expect("dependency edges connect adjacent stages");
                (FlowKey { src, dst: e.dst }, class)
            })
            .collect();
        DrawKeys { tasks, flows }
    }
}

const STREAM_DURATION: u64 = 0xd;
const STREAM_VOLUME: u64 = 0xf;

fn sample_keyed(samples: &[f64], seed: u64, stream: u64, iter: u32, a: u64, b: u64) -> f64 {
    debug_assert!(!samples.is_empty());
    if samples.len() == 1 {
        return samples[0];
    }
    let key = mix_seed(seed ^ stream, iter as u64, a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    samples[rng.gen_range(0..samples.len())]
}

/// Draws one iteration's durations and volumes. Volumes are drawn for every
/// dependency edge, colocated or not, keyed only by `(seed, n, src, dst)`;
/// placement cannot perturb the stream.
pub fn draw_iteration(profile: &Profile, keys: &DrawKeys, n: u32) -> IterationDraw {
    let mut durations = BTreeMap::new();
    for (id, kind) in &keys.tasks {
        let d = sample_keyed(profile.durations_of(*kind), profile.seed, STREAM_DURATION, n, id.0 as u64, 0);
        durations.insert(*id, d);
    }
    let mut volumes = BTreeMap::new();
    for (key, class) in &keys.flows {
        let v = match class {
            FlowClass::GsToSampler => sample_keyed(
                &profile.gs_to_sampler_bytes,
                profile.seed,
                STREAM_VOLUME,
                n,
                key.src.0 as u64,
                key.dst.0 as u64,
            ),
            FlowClass::SamplerToWorker => sample_keyed(
                &profile.sampler_to_worker_bytes,
                profile.seed,
                STREAM_VOLUME,
                n,
                key.src.0 as u64,
                key.dst.0 as u64,
            ),
            FlowClass::WorkerToPs => profile.worker_to_ps_bytes,
            FlowClass::PsToWorker => profile.ps_to_worker_bytes,
        };
        volumes.insert(*key, v);
    }
    IterationDraw { iteration: n, durations_s: durations, volumes_bytes: volumes }
}

/// Draws iterations `1..=n_iters`.
pub fn draw_iterations(profile: &Profile, keys: &DrawKeys, n_iters: u32) -> Vec<IterationDraw> {
    (1..=n_iters).map(|n| draw_iteration(profile, keys, n)).collect()
}

/// Peak-to-mean ratio of a sample list: `max / mean`.
pub fn measured_pmr(samples: &[f64]) -> Result<f64, ProfileError> {
    if samples.is_empty() {
        return Err(ProfileError::EmptySamples);
    }
    if samples.iter().any(|v| *v < 0.0) {
        return Err(ProfileError::NegativeSample);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if mean <= 0.0 {
        return Err(ProfileError::ZeroMean);
    }
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(max / mean)
}

/// Knobs for the synthetic profile generator beyond the (mean, PMR) pair.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub mean_volume_bytes: f64,
    pub pmr: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Gradient/parameter tensor size; fixed per profile.
    pub model_bytes: f64,
    pub graph_store_ms: f64,
    pub sampler_ms: f64,
    pub worker_ms: f64,
    pub ps_ms: f64,
}

impl SynthParams {
    pub fn new(mean_volume_bytes: f64, pmr: f64, n_samples: usize, seed: u64) -> SynthParams {
        SynthParams {
            mean_volume_bytes,
            pmr,
            n_samples,
            seed,
            model_bytes: mean_volume_bytes / 8.0,
            graph_store_ms: 40.0,
            sampler_ms: 60.0,
            worker_ms: 120.0,
            ps_ms: 30.0,
        }
    }
}

/// Synthesizes a profile whose graph-store-to-sampler volume samples hit the
/// requested mean and peak-to-mean ratio exactly (up to float rounding).
///
/// Construction: a two-point list with `k` peak samples at `pmr * mean` and
/// `n - k` body samples at the value that restores the mean, shuffled by the
/// seed. `k` is chosen near `n / (2 * pmr)` so the body value stays
/// non-negative.
pub fn synth_profile(
    mean_volume_bytes: f64,
    pmr: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Profile, ProfileError> {
    synth_profile_with(&SynthParams::new(mean_volume_bytes, pmr, n_samples, seed))
}

pub fn synth_profile_with(params: &SynthParams) -> Result<Profile, ProfileError> {
    let n = params.n_samples;
    let mean = params.mean_volume_bytes;
    let pmr = params.pmr;
    if pmr < 1.0 {
        return Err(ProfileError::PmrBelowOne { pmr });
    }
    if !(mean > 0.0) {
        return Err(ProfileError::NonPositiveMean);
    }
    if n == 0 {
        return Err(ProfileError::EmptySamples);
    }
    if (n as f64) < pmr {
        return Err(ProfileError::TooFewSamplesForPmr { n, pmr });
    }

    let gs = two_point_samples(mean, pmr, n, mix_seed(params.seed, 0x5a, 0, 0));
    let sw = two_point_samples(mean, pmr, n, mix_seed(params.seed, 0x5b, 0, 0));
    Ok(Profile {
        graph_store_s: vec![params.graph_store_ms / 1e3],
        sampler_s: vec![params.sampler_ms / 1e3],
        worker_s: vec![params.worker_ms / 1e3],
        ps_s: vec![params.ps_ms / 1e3],
        gs_to_sampler_bytes: gs,
        sampler_to_worker_bytes: sw,
        worker_to_ps_bytes: params.model_bytes,
        ps_to_worker_bytes: params.model_bytes,
        seed: params.seed,
    })
}

fn two_point_samples(mean: f64, pmr: f64, n: usize, shuffle_seed: u64) -> Vec<f64> {
    if pmr == 1.0 || n == 1 {
        return vec![mean; n];
    }
    let peak = pmr * mean;
    let nf = n as f64;
    // k peak samples; body value a = (n*mean - k*peak) / (n - k) >= 0
    // requires k <= n / pmr.
    let mut k = (nf / (2.0 * pmr)).round() as usize;
    k = k.clamp(1, (nf / pmr).floor() as usize);
    if k == n {
        return vec![mean; n];
    }
    let body = (nf * mean - k as f64 * peak) / (nf - k as f64);
    let mut samples = vec![peak; k];
    samples.extend(std::iter::repeat(body).take(n - k));
    // Deterministic shuffle so trace position carries no structure.
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    for i in (1..samples.len()).rev() {
        let j = rng.gen_range(0..=i);
        samples.swap(i, j);
    }
    samples
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("sample list is empty")]
    EmptySamples,
    #[error("sample list contains a negative value")]
    NegativeSample,
    #[error("samples have zero mean")]
    ZeroMean,
    #[error("peak-to-mean ratio {pmr} is below 1")]
    PmrBelowOne { pmr: f64 },
    #[error("mean volume must be positive")]
    NonPositiveMean,
    #[error("{n} samples cannot realize peak-to-mean ratio {pmr}")]
    TooFewSamplesForPmr { n: usize, pmr: f64 },
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("failed to parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: {field}: {problem}")]
    Invalid { path: String, field: &'static str, problem: &'static str },
}

// ---------------------------------------------------------------------------
// Profile files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct DurationsDoc {
    graph_store: Vec<f64>,
    sampler: Vec<f64>,
    worker: Vec<f64>,
    ps: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VolumesDoc {
    gs_to_sampler: Vec<f64>,
    sampler_to_worker: Vec<f64>,
    worker_to_ps: f64,
    ps_to_worker: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileDoc {
    durations_ms: DurationsDoc,
    volumes_bytes: VolumesDoc,
    seed: u64,
}

fn check_durations(
    path: &Path,
    field: &'static str,
    samples: &[f64],
) -> Result<Vec<f64>, ProfileError> {
    if samples.is_empty() {
        return Err(ProfileError::Invalid {
            path: path.display().to_string(),
            field,
            problem: "empty sample list",
        });
    }
    if samples.iter().any(|v| !(*v > 0.0)) {
        return Err(ProfileError::Invalid {
            path: path.display().to_string(),
            field,
            problem: "durations must be positive",
        });
    }
    Ok(samples.iter().map(|ms| ms / 1e3).collect())
}

fn check_volumes(path: &Path, field: &'static str, samples: &[f64]) -> Result<(), ProfileError> {
    if samples.is_empty() {
        return Err(ProfileError::Invalid {
            path: path.display().to_string(),
            field,
            problem: "empty sample list",
        });
    }
    if samples.iter().any(|v| !(*v >= 0.0)) {
        return Err(ProfileError::Invalid {
            path: path.display().to_string(),
            field,
            problem: "volumes must be non-negative",
        });
    }
    Ok(())
}

pub fn load_profile(path: &Path) -> Result<Profile, ProfileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ProfileError::Io { path: path.display().to_string(), source })?;
    let doc: ProfileDoc = serde_json::from_str(&text)
        .map_err(|source| ProfileError::Parse { path: path.display().to_string(), source })?;

    let graph_store_s = check_durations(path, "durations_ms.graph_store", &doc.durations_ms.graph_store)?;
    let sampler_s = check_durations(path, "durations_ms.sampler", &doc.durations_ms.sampler)?;
    let worker_s = check_durations(path, "durations_ms.worker", &doc.durations_ms.worker)?;
    let ps_s = check_durations(path, "durations_ms.ps", &doc.durations_ms.ps)?;
    check_volumes(path, "volumes_bytes.gs_to_sampler", &doc.volumes_bytes.gs_to_sampler)?;
    check_volumes(path, "volumes_bytes.sampler_to_worker", &doc.volumes_bytes.sampler_to_worker)?;
    for (field, v) in [
        ("volumes_bytes.worker_to_ps", doc.volumes_bytes.worker_to_ps),
        ("volumes_bytes.ps_to_worker", doc.volumes_bytes.ps_to_worker),
    ] {
        if !(v >= 0.0) {
            return Err(ProfileError::Invalid {
                path: path.display().to_string(),
                field,
                problem: "volumes must be non-negative",
            });
        }
    }

    Ok(Profile {
        graph_store_s,
        sampler_s,
        worker_s,
        ps_s,
        gs_to_sampler_bytes: doc.volumes_bytes.gs_to_sampler,
        sampler_to_worker_bytes: doc.volumes_bytes.sampler_to_worker,
        worker_to_ps_bytes: doc.volumes_bytes.worker_to_ps,
        ps_to_worker_bytes: doc.volumes_bytes.ps_to_worker,
        seed: doc.seed,
    })
}

pub fn save_profile(path: &Path, profile: &Profile) -> Result<(), ProfileError> {
    let to_ms = |v: &[f64]| v.iter().map(|s| s * 1e3).collect::<Vec<_>>();
    let doc = ProfileDoc {
        durations_ms: DurationsDoc {
            graph_store: to_ms(&profile.graph_store_s),
            sampler: to_ms(&profile.sampler_s),
            worker: to_ms(&profile.worker_s),
            ps: to_ms(&profile.ps_s),
        },
        volumes_bytes: VolumesDoc {
            gs_to_sampler: profile.gs_to_sampler_bytes.clone(),
            sampler_to_worker: profile.sampler_to_worker_bytes.clone(),
            worker_to_ps: profile.worker_to_ps_bytes,
            ps_to_worker: profile.ps_to_worker_bytes,
        },
        seed: profile.seed,
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|source| ProfileError::Parse { path: path.display().to_string(), source })?;
    std::fs::write(path, text)
        .map_err(|source| ProfileError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

/// A profile where every distribution is a single point; handy for tests
/// that need exact arithmetic.
pub fn constant_profile(
    gs_s: f64,
    sampler_s: f64,
    worker_s: f64,
    ps_s: f64,
    gs_to_sampler_bytes: f64,
    sampler_to_worker_bytes: f64,
    model_bytes: f64,
    seed: u64,
) -> Profile {
    Profile {
        graph_store_s: vec![gs_s],
        sampler_s: vec![sampler_s],
        worker_s: vec![worker_s],
        ps_s: vec![ps_s],
        gs_to_sampler_bytes: vec![gs_to_sampler_bytes],
        sampler_to_worker_bytes: vec![sampler_to_worker_bytes],
        worker_to_ps_bytes: model_bytes,
        ps_to_worker_bytes: model_bytes,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pmr_of_constant_list_is_one() {
        assert_eq!(measured_pmr(&[10.0, 10.0, 10.0]).unwrap(), 1.0);
    }

    #[test]
    fn pmr_arithmetic() {
        assert!((measured_pmr(&[5.0, 10.0, 15.0]).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pmr_rejects_zero_mean() {
        assert!(matches!(measured_pmr(&[0.0, 0.0]), Err(ProfileError::ZeroMean)));
        assert!(matches!(measured_pmr(&[]), Err(ProfileError::EmptySamples)));
    }

    #[test]
    fn synth_pmr_one_is_constant() {
        let p = synth_profile(1e6, 1.0, 50, 7).unwrap();
        assert!(p.gs_to_sampler_bytes.iter().all(|v| *v == 1e6));
    }

    #[test]
    fn synth_hits_requested_pmr() {
        for &pmr in &[1.08, 1.16, 2.0] {
            let p = synth_profile(1e6, pmr, 1000, 3).unwrap();
            let got = measured_pmr(&p.gs_to_sampler_bytes).unwrap();
            assert!((got - pmr).abs() / pmr < 0.05, "pmr {pmr} -> {got}");
            let mean =
                p.gs_to_sampler_bytes.iter().sum::<f64>() / p.gs_to_sampler_bytes.len() as f64;
            assert!((mean - 1e6).abs() / 1e6 < 0.02, "mean {mean}");
        }
    }

    #[test]
    fn synth_rejects_bad_inputs() {
        assert!(matches!(synth_profile(1e6, 0.9, 50, 0), Err(ProfileError::PmrBelowOne { .. })));
        assert!(matches!(
            synth_profile(1e6, 100.0, 50, 0),
            Err(ProfileError::TooFewSamplesForPmr { .. })
        ));
    }

    proptest! {
        #[test]
        fn synth_pmr_roundtrip(pmr in 1.0f64..3.0, seed in 0u64..1000) {
            let p = synth_profile(2e6, pmr, 200, seed).unwrap();
            let got = measured_pmr(&p.gs_to_sampler_bytes).unwrap();
            prop_assert!((got - pmr).abs() / pmr < 0.05);
        }
    }

    fn keys_for_minimal() -> (JobSpec, DrawKeys) {
        use crate::model::*;
        let job = JobSpec {
            tasks: vec![
                TaskSpec {
                    id: TaskId(0),
                    kind: TaskKind::GraphStore,
                    demands: Default::default(),
                    base_time_s: 0.05,
                    links: vec![],
                    pin: Some(MachineId(0)),
                },
                TaskSpec {
                    id: TaskId(1),
                    kind: TaskKind::Sampler,
                    demands: Default::default(),
                    base_time_s: 0.1,
                    links: vec![TaskId(2)],
                    pin: None,
                },
                TaskSpec {
                    id: TaskId(2),
                    kind: TaskKind::Worker,
                    demands: Default::default(),
                    base_time_s: 0.2,
                    links: vec![],
                    pin: None,
                },
                TaskSpec {
                    id: TaskId(3),
                    kind: TaskKind::Ps,
                    demands: Default::default(),
                    base_time_s: 0.05,
                    links: vec![],
                    pin: None,
                },
            ],
            n_iterations: 4,
        };
        let g = build_dependency_graph(&job).unwrap();
        let keys = DrawKeys::new(&job, &g);
        (job, keys)
    }

    #[test]
    fn constant_profile_draws_constants() {
        let (_, keys) = keys_for_minimal();
        let p = constant_profile(0.05, 0.1, 0.2, 0.05, 1e6, 2e6, 3e5, 9);
        for n in 1..=4 {
            let d = draw_iteration(&p, &keys, n);
            assert_eq!(d.durations_s[&TaskId(0)], 0.05);
            assert_eq!(d.volumes_bytes[&FlowKey { src: TaskId(0), dst: TaskId(1) }], 1e6);
            assert_eq!(d.volumes_bytes[&FlowKey { src: TaskId(3), dst: TaskId(2) }], 3e5);
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let (_, keys) = keys_for_minimal();
        let p = synth_profile(1e6, 1.5, 64, 11).unwrap();
        let a = draw_iteration(&p, &keys, 3);
        let b = draw_iteration(&p, &keys, 3);
        assert_eq!(a, b);
        // Across iterations the stream must move: some nearby iteration
        // draws different volumes.
        let moved = (4..40).any(|n| draw_iteration(&p, &keys, n).volumes_bytes != a.volumes_bytes);
        assert!(moved);
    }

    #[test]
    fn empirical_resampling_converges_to_list_mean() {
        let (_, keys) = keys_for_minimal();
        let mut p = constant_profile(0.05, 0.1, 0.2, 0.05, 0.0, 0.0, 0.0, 21);
        p.gs_to_sampler_bytes = vec![8.0, 12.0];
        let key = FlowKey { src: TaskId(0), dst: TaskId(1) };
        let mut sum = 0.0;
        let n = 10_000u32;
        for i in 1..=n {
            sum += draw_iteration(&p, &keys, i).volumes_bytes[&key];
        }
        let mean = sum / n as f64;
        assert!((mean - 10.0).abs() / 10.0 < 0.01, "mean {mean}");
    }

    #[test]
    fn profile_file_roundtrip_and_errors() {
        let dir = std::env::temp_dir().join("dgtp-profile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("profile.json");
        let p = synth_profile(1e6, 1.16, 50, 5).unwrap();
        save_profile(&path, &p).unwrap();
        let q = load_profile(&path).unwrap();
        assert_eq!(p, q);

        // 50 samples per class: one profiling run's worth.
        assert_eq!(q.gs_to_sampler_bytes.len(), 50);

        let bad = dir.join("missing-class.json");
        std::fs::write(
            &bad,
            r#"{"durations_ms":{"graph_store":[1],"sampler":[1],"worker":[1],"ps":[1]},
               "volumes_bytes":{"gs_to_sampler":[1],"sampler_to_worker":[1],"worker_to_ps":1},
               "seed":0}"#,
        )
        .unwrap();
        let err = load_profile(&bad).unwrap_err();
        assert!(err.to_string().contains("ps_to_worker"), "{err}");

        let empty = dir.join("empty-list.json");
        std::fs::write(
            &empty,
            r#"{"durations_ms":{"graph_store":[],"sampler":[1],"worker":[1],"ps":[1]},
               "volumes_bytes":{"gs_to_sampler":[1],"sampler_to_worker":[1],"worker_to_ps":1,"ps_to_worker":1},
               "seed":0}"#,
        )
        .unwrap();
        let err = load_profile(&empty).unwrap_err();
        assert!(err.to_string().contains("graph_store"), "{err}");
    }
}
