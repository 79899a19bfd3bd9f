//! Episode and run metrics: success, path-efficiency-weighted success,
//! exploration and checking efficiency per meter traveled, accumulation
//! curves, and CSV export. Everything derives from episode traces alone, so
//! any trace directory can be re-analyzed without re-running episodes.

use serde::{Deserialize, Serialize};

use crate::sim::EpisodeTrace;

/// Metrics of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub scene_seed: u64,
    pub episode_seed: u64,
    pub policy: String,
    pub success: bool,
    /// Success weighted by path efficiency: `l / max(p, l)` on success,
    /// zero on failure (`l` = reference shortest path, `p` = traveled).
    pub spl: f64,
    /// Meters traveled.
    pub path_len: f64,
    /// Reference shortest-path length (meters).
    pub shortest_path: f64,
    pub steps: u32,
    /// Total floor area mapped during the episode (m²).
    pub explored_area: f64,
    /// Total promising-cell area closely checked during the episode (m²).
    pub checked_area: f64,
    /// Explored area per meter traveled (m²/m); zero when nothing moved.
    pub explored_per_dist: f64,
    /// Checked promising area per meter traveled (m²/m).
    pub checked_per_dist: f64,
    pub collisions: u32,
    pub error: Option<String>,
}

/// Success-weighted path efficiency for one episode.
///
/// Conventions at the edges: failure is always 0; a zero-length reference
/// (started inside the success region) scores a clean 1 on success; an
/// infinite reference (goal unreachable from the start — generated scenes
/// never produce this) scores 0 even on a lucky success.
pub fn spl(success: bool, shortest: f64, traveled: f64) -> f64 {
    if !success {
        return 0.0;
    }
    if shortest == 0.0 {
        return 1.0;
    }
    if !shortest.is_finite() {
        return 0.0;
    }
    shortest / traveled.max(shortest)
}

/// Derive one episode's metrics from its trace.
pub fn episode_metrics(trace: &EpisodeTrace) -> EpisodeMetrics {
    let cell_area = trace.voxel_size * trace.voxel_size;
    let explored_cells: u64 = trace.steps.iter().map(|s| s.new_cells as u64).sum();
    let checked_cells: u64 = trace.steps.iter().map(|s| s.new_checked as u64).sum();
    let explored_area = explored_cells as f64 * cell_area;
    let checked_area = checked_cells as f64 * cell_area;
    let p = trace.outcome.path_len;
    let per_dist = |area: f64| if p > 0.0 { area / p } else { 0.0 };
    EpisodeMetrics {
        scene_seed: trace.scene_seed,
        episode_seed: trace.episode_seed,
        policy: trace.policy.clone(),
        success: trace.outcome.success,
        spl: spl(trace.outcome.success, trace.outcome.shortest_path, p),
        path_len: p,
        shortest_path: trace.outcome.shortest_path,
        steps: trace.outcome.steps,
        explored_area,
        checked_area,
        explored_per_dist: per_dist(explored_area),
        checked_per_dist: per_dist(checked_area),
        collisions: trace.outcome.collisions,
        error: trace.outcome.error.clone(),
    }
}

/// Aggregate statistics over a batch of episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_spl: f64,
    pub sd_spl: f64,
    pub mean_explored_per_dist: f64,
    pub sd_explored_per_dist: f64,
    pub mean_checked_per_dist: f64,
    pub sd_checked_per_dist: f64,
    pub mean_explored_area: f64,
    pub mean_checked_area: f64,
    pub mean_path_len: f64,
    pub mean_steps: f64,
    pub errors: usize,
}

fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn sd(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(xs.clone());
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += (x - m) * (x - m);
        n += 1;
    }
    if n < 2 {
        0.0
    } else {
        (s / (n - 1) as f64).sqrt()
    }
}

pub fn summarize(ms: &[EpisodeMetrics]) -> Summary {
    Summary {
        episodes: ms.len(),
        success_rate: mean(ms.iter().map(|m| if m.success { 1.0 } else { 0.0 })),
        mean_spl: mean(ms.iter().map(|m| m.spl)),
        sd_spl: sd(ms.iter().map(|m| m.spl)),
        mean_explored_per_dist: mean(ms.iter().map(|m| m.explored_per_dist)),
        sd_explored_per_dist: sd(ms.iter().map(|m| m.explored_per_dist)),
        mean_checked_per_dist: mean(ms.iter().map(|m| m.checked_per_dist)),
        sd_checked_per_dist: sd(ms.iter().map(|m| m.checked_per_dist)),
        mean_explored_area: mean(ms.iter().map(|m| m.explored_area)),
        mean_checked_area: mean(ms.iter().map(|m| m.checked_area)),
        mean_path_len: mean(ms.iter().map(|m| m.path_len)),
        mean_steps: mean(ms.iter().map(|m| m.steps as f64)),
        errors: ms.iter().filter(|m| m.error.is_some()).count(),
    }
}

/// Per-step mean cumulative explored / checked area (m²) across episodes.
/// Episodes shorter than the longest are extended with their final value,
/// so both curves are non-decreasing and their last entries equal the mean
/// final areas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccumulationCurves {
    pub explored: Vec<f64>,
    pub checked: Vec<f64>,
}

pub fn accumulation_curves(traces: &[EpisodeTrace]) -> AccumulationCurves {
    let max_len = traces.iter().map(|t| t.steps.len()).max().unwrap_or(0);
    let mut explored = vec![0.0; max_len];
    let mut checked = vec![0.0; max_len];
    if max_len == 0 || traces.is_empty() {
        return AccumulationCurves { explored, checked };
    }
    for t in traces {
        let cell_area = t.voxel_size * t.voxel_size;
        let (mut ce, mut cc) = (0.0, 0.0);
        for (i, s) in t.steps.iter().enumerate() {
            ce += s.new_cells as f64 * cell_area;
            cc += s.new_checked as f64 * cell_area;
            explored[i] += ce;
            checked[i] += cc;
        }
        for i in t.steps.len()..max_len {
            explored[i] += ce;
            checked[i] += cc;
        }
    }
    let n = traces.len() as f64;
    for v in explored.iter_mut().chain(checked.iter_mut()) {
        *v /= n;
    }
    AccumulationCurves { explored, checked }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per episode. Floats print with full round-trip precision so the
/// CSV is as reproducible as the run itself.
pub fn metrics_csv(ms: &[EpisodeMetrics]) -> String {
    let mut out = String::from(
        "scene_seed,episode_seed,policy,success,spl,path_len,shortest_path,steps,\
         explored_area,checked_area,explored_per_dist,checked_per_dist,collisions,error\n",
    );
    for m in ms {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.scene_seed,
            m.episode_seed,
            csv_escape(&m.policy),
            m.success as u8,
            m.spl,
            m.path_len,
            m.shortest_path,
            m.steps,
            m.explored_area,
            m.checked_area,
            m.explored_per_dist,
            m.checked_per_dist,
            m.collisions,
            csv_escape(m.error.as_deref().unwrap_or("")),
        ));
    }
    out
}

/// Single-row summary CSV.
pub fn summary_csv(s: &Summary) -> String {
    format!(
        "episodes,success_rate,mean_spl,sd_spl,mean_explored_per_dist,sd_explored_per_dist,\
         mean_checked_per_dist,sd_checked_per_dist,mean_explored_area,mean_checked_area,\
         mean_path_len,mean_steps,errors\n{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        s.episodes,
        s.success_rate,
        s.mean_spl,
        s.sd_spl,
        s.mean_explored_per_dist,
        s.sd_explored_per_dist,
        s.mean_checked_per_dist,
        s.sd_checked_per_dist,
        s.mean_explored_area,
        s.mean_checked_area,
        s.mean_path_len,
        s.mean_steps,
        s.errors,
    )
}

/// Curve CSV: one row per step index.
pub fn curves_csv(c: &AccumulationCurves) -> String {
    let mut out = String::from("step,explored_area_mean,checked_area_mean\n");
    for i in 0..c.explored.len() {
        out.push_str(&format!("{},{},{}\n", i, c.explored[i], c.checked[i]));
    }
    out
}
