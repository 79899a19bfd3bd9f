//! Batch harness behind the CLI: scene generation to disk, configured
//! episode batches with trace + report output, trace re-analysis, and
//! scoring-kernel benchmarks.
//!
//! Trace files are the single source of truth for every report: `cmd_run`
//! writes one JSONL trace per episode and then produces its CSVs by
//! analyzing those files, so re-running `cmd_analyze` on a run directory
//! reproduces the run's reports exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::GridDims;
use crate::metrics::{
    accumulation_curves, curves_csv, episode_metrics, metrics_csv, summarize, summary_csv,
    EpisodeMetrics, Summary,
};
use crate::policies::{build_policy, ControlParams, NavPolicy};
use crate::scene::Scene;
use crate::scenegen::{generate_scene, sample_start, GenParams};
use crate::scoring::{polo_dense, polo_sampled};
use crate::sim::{mapping_snapshot, run_episode, EpisodeSpec, EpisodeTrace};

/// Minimum start-to-goal distance (meters) when sampling episode starts,
/// so episodes never begin already inside the success region.
pub const MIN_START_DIST_M: f64 = 2.0;

/// Exploration steps used to build the benchmark's mid-episode map snapshot.
const BENCH_WARMUP_STEPS: u32 = 150;

/// Generate one scene per seed and write each to `out/scene_<seed>.txt`.
/// Generation is a pure function of (seed, params): repeating a seed
/// rewrites byte-identical files.
pub fn cmd_gen(seeds: &[u64], params: &GenParams, out: &Path) -> Result<Vec<PathBuf>> {
    params.validate()?;
    std::fs::create_dir_all(out)?;
    let mut paths = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let scene = generate_scene(seed, params)?;
        let path = out.join(format!("scene_{seed}.txt"));
        std::fs::write(&path, scene.save_text())?;
        paths.push(path);
    }
    Ok(paths)
}

/// Everything a run or re-analysis produces: per-episode metrics, the batch
/// summary, and the three report documents as written to disk.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub metrics: Vec<EpisodeMetrics>,
    pub summary: Summary,
    pub metrics_csv: String,
    pub summary_csv: String,
    pub curves_csv: String,
}

/// Build the policy instance for one episode of a configured run.
///
/// Controller knobs come from the config; the sampled variant's RNG seed is
/// folded with the episode seed so episodes stay reproducible regardless of
/// execution order, and the dense kernels only use intra-map parallelism
/// when episodes themselves run serially.
pub fn episode_policy(cfg: &RunConfig, dims: &GridDims, episode_seed: u64) -> Result<NavPolicy> {
    let mut ctrl = ControlParams::for_grid(cfg.kinematics, cfg.policy.body_height_m, dims);
    ctrl.t_replan = cfg.policy.t_replan;
    ctrl.p_confirm = cfg.policy.p_confirm;
    ctrl.camera_height = cfg.sensors.cam.height_m;
    build_policy(
        &cfg.policy.name,
        cfg.policy.score,
        ctrl,
        cfg.policy.k,
        cfg.policy.seed ^ episode_seed,
        cfg.parallelism == 1,
    )
}

/// Run one configured episode against a pre-generated scene.
pub fn run_single_episode(cfg: &RunConfig, scene: &Scene, episode: usize) -> Result<EpisodeTrace> {
    let episode_seed = cfg.episode_seed_for(episode);
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let start = sample_start(
        scene,
        &cfg.scene.goal_class,
        cfg.kinematics.agent_radius,
        MIN_START_DIST_M,
        cfg.kinematics.success_dist,
        &mut rng,
    )?;
    let mut policy = episode_policy(cfg, &scene.dims, episode_seed)?;
    let spec = EpisodeSpec {
        goal_class: cfg.scene.goal_class.clone(),
        start,
        seed: episode_seed,
    };
    run_episode(scene, &spec, &mut policy, &cfg.kinematics, &cfg.sensors)
}

/// Generate every distinct scene a run needs, keyed by generator seed.
pub fn scene_cache(cfg: &RunConfig) -> Result<BTreeMap<u64, Arc<Scene>>> {
    let mut scenes = BTreeMap::new();
    for e in 0..cfg.episodes {
        let seed = cfg.scene_seed_for(e);
        if !scenes.contains_key(&seed) {
            scenes.insert(seed, Arc::new(generate_scene(seed, &cfg.scene)?));
        }
    }
    Ok(scenes)
}

/// Execute a configured batch: echo the resolved config into `out`, run
/// every episode (in parallel at episode granularity when configured),
/// write one `ep_NNNN.jsonl` trace per episode in episode order, then
/// analyze the written traces into `metrics.csv`, `summary.csv` and
/// `curves.csv`.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    // Fail on an unknown policy name before any episode work starts.
    episode_policy(cfg, &GridDims::new(cfg.scene.l, cfg.scene.h, cfg.scene.voxel_size), 0)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;

    let scenes = scene_cache(cfg)?;
    let run_one = |e: usize| -> Result<EpisodeTrace> {
        let scene = &scenes[&cfg.scene_seed_for(e)];
        let trace = run_single_episode(cfg, scene, e)?;
        eprintln!(
            "episode {e:4} scene {:6} {}: success={} steps={} path={:.1}m",
            trace.scene_seed,
            trace.policy,
            trace.outcome.success,
            trace.outcome.steps,
            trace.outcome.path_len,
        );
        Ok(trace)
    };
    let traces: Vec<Result<EpisodeTrace>> = if cfg.parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.episodes).into_par_iter().map(run_one).collect())
    } else {
        (0..cfg.episodes).map(run_one).collect()
    };
    // Merge by episode index: the collected vector preserves input order
    // for both the serial and the parallel path.
    for (e, trace) in traces.into_iter().enumerate() {
        let trace = trace?;
        std::fs::write(out.join(format!("ep_{e:04}.jsonl")), trace.to_jsonl())?;
    }
    cmd_analyze(out)
}

fn trace_index(name: &str) -> Option<usize> {
    name.strip_prefix("ep_")?.strip_suffix(".jsonl")?.parse().ok()
}

/// Rebuild the full report from the trace files in `dir` alone. A directory
/// without traces is an error; an unreadable or truncated trace becomes a
/// per-episode error row while the remaining episodes are processed
/// normally.
pub fn analyze_dir(dir: &Path) -> Result<RunReport> {
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(idx) = trace_index(&name) {
            files.push((idx, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::InvalidParam(format!(
            "no episode traces (ep_*.jsonl) in {}",
            dir.display()
        )));
    }
    files.sort();

    let mut metrics = Vec::with_capacity(files.len());
    let mut traces = Vec::with_capacity(files.len());
    for (_, path) in &files {
        let parsed = std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|text| EpisodeTrace::from_jsonl(&text));
        match parsed {
            Ok(trace) => {
                metrics.push(episode_metrics(&trace));
                traces.push(trace);
            }
            Err(e) => {
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
                metrics.push(EpisodeMetrics {
                    scene_seed: 0,
                    episode_seed: 0,
                    policy: String::new(),
                    success: false,
                    spl: 0.0,
                    path_len: 0.0,
                    shortest_path: 0.0,
                    steps: 0,
                    explored_area: 0.0,
                    checked_area: 0.0,
                    explored_per_dist: 0.0,
                    checked_per_dist: 0.0,
                    collisions: 0,
                    error: Some(format!("{}: {e}", name.unwrap_or_default())),
                });
            }
        }
    }
    let summary = summarize(&metrics);
    let curves = accumulation_curves(&traces);
    Ok(RunReport {
        metrics_csv: metrics_csv(&metrics),
        summary_csv: summary_csv(&summary),
        curves_csv: curves_csv(&curves),
        metrics,
        summary,
    })
}

/// Re-analyze a trace directory and (re)write its report files.
pub fn cmd_analyze(dir: &Path) -> Result<RunReport> {
    let report = analyze_dir(dir)?;
    std::fs::write(dir.join("metrics.csv"), &report.metrics_csv)?;
    std::fs::write(dir.join("summary.csv"), &report.summary_csv)?;
    std::fs::write(dir.join("curves.csv"), &report.curves_csv)?;
    Ok(report)
}

/// One timed kernel in a benchmark report.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub name: String,
    pub mean_ms: f64,
    pub sd_ms: f64,
}

/// Timings of the scoring kernels on a mid-episode map snapshot.
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub dims: GridDims,
    /// Fraction of voxels known in the snapshot the kernels ran on.
    pub known_fraction: f64,
    pub reps: usize,
    pub rows: Vec<BenchRow>,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scoring benchmark: grid {}x{}x{} (voxel {} m), {:.1}% of voxels known, {} reps",
            self.dims.l,
            self.dims.l,
            self.dims.h,
            self.dims.voxel_size,
            self.known_fraction * 100.0,
            self.reps
        )?;
        for row in &self.rows {
            writeln!(f, "  {:<24} {:>9.1} ms  ± {:>6.1} ms", row.name, row.mean_ms, row.sd_ms)?;
        }
        Ok(())
    }
}

fn time_reps(reps: usize, mut run: impl FnMut() -> Result<()>) -> Result<(f64, f64)> {
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        run()?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean = samples.iter().sum::<f64>() / reps as f64;
    let sd = if reps < 2 {
        0.0
    } else {
        (samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (reps - 1) as f64).sqrt()
    };
    Ok((mean, sd))
}

/// Benchmark the scoring kernels on the configured scene scale.
///
/// The map snapshot comes from a frontier-exploration warmup with the
/// detector disabled: deterministic for a given config, never terminated
/// early by a lucky sighting, and representative of mid-episode occupancy
/// content. Timed kernels: dense scoring serially and in parallel, and
/// sampled scoring at the configured `k` and at `k = 1`.
pub fn cmd_bench(cfg: &RunConfig, reps: usize) -> Result<BenchReport> {
    cfg.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParam("reps must be at least 1".into()));
    }
    let scene = generate_scene(cfg.scene_seed_for(0), &cfg.scene)?;
    let episode_seed = cfg.episode_seed_for(0);
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let start = sample_start(
        &scene,
        &cfg.scene.goal_class,
        cfg.kinematics.agent_radius,
        MIN_START_DIST_M,
        cfg.kinematics.success_dist,
        &mut rng,
    )?;

    let mut warm_cfg = cfg.clone();
    warm_cfg.policy.name = "fbe".to_string();
    warm_cfg.sensors.det.tpr0 = 0.0;
    warm_cfg.sensors.det.fpr = 0.0;
    let mut warm_policy = episode_policy(&warm_cfg, &scene.dims, episode_seed)?;
    let spec = EpisodeSpec {
        goal_class: cfg.scene.goal_class.clone(),
        start,
        seed: episode_seed,
    };
    let (maps, pose) = mapping_snapshot(
        &scene,
        &spec,
        &mut warm_policy,
        &cfg.kinematics,
        &warm_cfg.sensors,
        BENCH_WARMUP_STEPS,
    )?;

    let dims = scene.dims;
    let known_fraction = maps.occ.known_voxels() as f64 / dims.n_voxels() as f64;
    let params = &cfg.policy.score;
    let mut rows = Vec::new();

    let (mean_ms, sd_ms) = time_reps(reps, || {
        std::hint::black_box(polo_dense(&maps.occ, &maps.prob, &pose, params, false)?);
        Ok(())
    })?;
    rows.push(BenchRow { name: "polo-dense (serial)".into(), mean_ms, sd_ms });

    let (mean_ms, sd_ms) = time_reps(reps, || {
        std::hint::black_box(polo_dense(&maps.occ, &maps.prob, &pose, params, true)?);
        Ok(())
    })?;
    rows.push(BenchRow { name: "polo-dense (parallel)".into(), mean_ms, sd_ms });

    for k in [cfg.policy.k, 1] {
        let (mean_ms, sd_ms) = time_reps(reps, || {
            let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.policy.seed);
            std::hint::black_box(polo_sampled(
                &maps.occ,
                &maps.prob,
                &pose,
                params,
                k,
                &mut sample_rng,
            )?);
            Ok(())
        })?;
        rows.push(BenchRow { name: format!("polo-sampled k={k}"), mean_ms, sd_ms });
    }

    Ok(BenchReport { dims, known_fraction, reps, rows })
}
