//! Simulated object detector and the detection→evidence likelihood model.
//!
//! The detector consumes a rendered frame plus the scene's semantic labels
//! and reports per-voxel goal and receptacle hits with confidence scores.
//! Detection is stochastic but fully determined by `(seed, step)`: every
//! frame derives its own RNG, so re-running an episode reproduces the exact
//! hit sequence regardless of what other code draws randomness.
//!
//! [`build_local_probability`] converts one frame's detections into an
//! egocentric evidence packet for [`ProbabilityMap::fuse_observation`]:
//! voxels touched by detections get a likelihood from [`combine_scores`],
//! and every other rendered surface voxel gets a fixed-ratio miss update
//! that decays its odds of containing the goal.
//!
//! [`ProbabilityMap::fuse_observation`]: crate::voxelmap::ProbabilityMap::fuse_observation

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CameraModel, GridDims, Pose, Voxel};
use crate::scene::{RenderedFrame, SemanticLabels, VoxelLabel};
use crate::voxelmap::{logit, sigmoid, Evidence, LocalObservation, ObsEntry};

/// Detection model: true-positive rate decays geometrically with distance,
/// a per-frame false-positive coin plants one spurious goal hit, and scores
/// carry Gaussian confidence noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// Per-voxel detection probability at zero distance.
    pub tpr0: f64,
    /// Multiplicative detection-rate falloff per meter of distance.
    pub tpr_decay: f64,
    /// Probability that a frame contains one spurious goal hit on a random
    /// rendered voxel.
    pub fpr: f64,
    /// Standard deviation of the additive noise on confidence scores.
    pub score_noise: f64,
    /// Base seed; each frame's RNG is derived from `(seed, step)`.
    pub seed: u64,
}

impl Default for DetectorParams {
    /// Perfect perception: every visible labeled voxel is reported with
    /// score 1.0, no false positives.
    fn default() -> Self {
        DetectorParams { tpr0: 1.0, tpr_decay: 1.0, fpr: 0.0, score_noise: 0.0, seed: 0 }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tpr0) {
            return Err(Error::InvalidParam(format!("tpr0 {} outside [0,1]", self.tpr0)));
        }
        if !(self.tpr_decay > 0.0 && self.tpr_decay <= 1.0) {
            return Err(Error::InvalidParam(format!("tpr_decay {} outside (0,1]", self.tpr_decay)));
        }
        if !(0.0..=1.0).contains(&self.fpr) {
            return Err(Error::InvalidParam(format!("fpr {} outside [0,1]", self.fpr)));
        }
        if !(self.score_noise >= 0.0 && self.score_noise.is_finite()) {
            return Err(Error::InvalidParam(format!("score_noise {} negative", self.score_noise)));
        }
        Ok(())
    }

    /// Detection probability for a voxel at distance `d` meters.
    #[inline]
    pub fn tpr(&self, d: f64) -> f64 {
        (self.tpr0 * self.tpr_decay.powf(d)).clamp(0.0, 1.0)
    }
}

/// Per-frame detector output. Voxels are grid coordinates; scores ∈ [0, 1].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionResult {
    pub goal_hits: Vec<(Voxel, f64)>,
    pub recp_hits: Vec<(Voxel, f64)>,
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for one frame, decorrelated across steps and across base seeds.
fn frame_rng(seed: u64, step: u32) -> ChaCha8Rng {
    let mixed = splitmix(seed ^ splitmix((step as u64).wrapping_add(0x9e37_79b9_7f4a_7c15)));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Run the detector over one rendered frame.
///
/// Every rendered goal or receptacle surface voxel is independently
/// reported with probability `tpr(distance)`, where distance is measured
/// from the camera point to the voxel center. Reported scores are
/// `clamp(1 − noise, 0, 1)`. With probability `fpr` the frame additionally
/// contains one spurious goal hit on a uniformly chosen rendered voxel.
pub fn detect(
    frame: &RenderedFrame,
    labels: &SemanticLabels,
    pose: &Pose,
    cam: &CameraModel,
    dims: &GridDims,
    params: &DetectorParams,
    step: u32,
) -> DetectionResult {
    let mut rng = frame_rng(params.seed, step);
    let origin = cam.origin(pose);
    let surface = frame.surface_voxels();
    let mut out = DetectionResult::default();
    for &v in &surface {
        let label = labels.label(v);
        if label == VoxelLabel::Plain {
            continue;
        }
        let c = dims.voxel_center(v);
        let d = ((c[0] - origin[0]).powi(2)
            + (c[1] - origin[1]).powi(2)
            + (c[2] - origin[2]).powi(2))
        .sqrt();
        if rng.random::<f64>() < params.tpr(d) {
            let score = draw_score(&mut rng, params.score_noise);
            match label {
                VoxelLabel::Goal => out.goal_hits.push((v, score)),
                VoxelLabel::Receptacle(_) => out.recp_hits.push((v, score)),
                VoxelLabel::Plain => unreachable!(),
            }
        }
    }
    if !surface.is_empty() && rng.random::<f64>() < params.fpr {
        let idx = rng.random_range(0..surface.len());
        let score = draw_score(&mut rng, params.score_noise);
        out.goal_hits.push((surface[idx], score));
    }
    out
}

fn draw_score(rng: &mut ChaCha8Rng, noise: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (1.0 - noise * z).clamp(0.0, 1.0)
}

/// How goal and receptacle detection scores merge into one voxel likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineRule {
    /// Weighted sum of the goal score and a distance-discounted nearby
    /// receptacle score — receptacles raise the odds of their surroundings.
    #[default]
    WeightedSum,
    /// Only direct goal detections carry evidence.
    GoalOnly,
}

/// Parameters of the detection-score → likelihood mapping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodParams {
    /// Weight of the direct goal score; `1 − alpha` weights the receptacle
    /// proximity term.
    pub alpha: f64,
    /// e-folding distance (meters) of receptacle influence.
    pub recp_range: f64,
    /// Receptacles further than this from a voxel contribute nothing.
    pub recp_cutoff: f64,
    /// Lower clamp on positive-evidence likelihoods.
    pub p_floor: f64,
    /// Upper clamp on positive-evidence likelihoods.
    pub p_ceil: f64,
    /// Likelihood ratio applied to rendered voxels with no detection; one
    /// miss multiplies a voxel's odds by `miss_factor / (1 − miss_factor)`
    /// relative odds — values below 0.5 push probability down.
    pub miss_factor: f64,
    pub rule: CombineRule,
}

impl Default for LikelihoodParams {
    fn default() -> Self {
        LikelihoodParams {
            alpha: 0.7,
            recp_range: 1.5,
            recp_cutoff: 3.0,
            p_floor: 0.02,
            p_ceil: 0.98,
            miss_factor: 0.3,
            rule: CombineRule::WeightedSum,
        }
    }
}

impl LikelihoodParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParam(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if !(self.recp_range > 0.0) {
            return Err(Error::InvalidParam("recp_range must be positive".into()));
        }
        if !(self.recp_cutoff >= 0.0) {
            return Err(Error::InvalidParam("recp_cutoff must be non-negative".into()));
        }
        let ok = 0.0 < self.p_floor && self.p_floor < 0.5 && 0.5 < self.p_ceil && self.p_ceil < 1.0;
        if !ok {
            return Err(Error::InvalidParam(format!(
                "clamps ({}, {}) must satisfy 0 < floor < 0.5 < ceil < 1",
                self.p_floor, self.p_ceil
            )));
        }
        if !(self.miss_factor > 0.0 && self.miss_factor < 1.0) {
            return Err(Error::InvalidParam(format!(
                "miss_factor {} outside (0,1)",
                self.miss_factor
            )));
        }
        Ok(())
    }

    /// Likelihood assigned to a rendered voxel with no detection evidence,
    /// chosen so one miss shifts log-odds by exactly `logit(miss_factor)`
    /// regardless of the map prior.
    pub fn miss_likelihood(&self, prior: f64) -> f64 {
        sigmoid(logit(prior) + logit(self.miss_factor))
    }
}

/// Merge a voxel's goal score with the nearest detected receptacle's score
/// into a single observation likelihood. `d_recp` is the distance to that
/// receptacle hit in meters (`f64::INFINITY` when none is near).
pub fn combine_scores(s_goal: f64, s_recp: f64, d_recp: f64, p: &LikelihoodParams) -> f64 {
    let raw = match p.rule {
        CombineRule::WeightedSum => {
            let prox = if d_recp.is_finite() { (-d_recp / p.recp_range).exp() } else { 0.0 };
            p.alpha * s_goal + (1.0 - p.alpha) * s_recp * prox
        }
        CombineRule::GoalOnly => p.alpha * s_goal,
    };
    raw.clamp(p.p_floor, p.p_ceil)
}

/// Convert one frame's rendering + detections into egocentric evidence.
///
/// Every rendered surface voxel receives exactly one entry:
/// - voxels with a goal hit get an accumulating detection entry with the
///   [`combine_scores`] likelihood of their strongest goal score and
///   nearest receptacle hit — repeated sightings genuinely compound;
/// - voxels with no goal hit but within `recp_cutoff` of a receptacle hit
///   (under [`CombineRule::WeightedSum`]) get a latched context entry at
///   the receptacle-proximity level: furniture makes its surroundings
///   plausible once, and looking at the same furniture again is not new
///   evidence (see [`Evidence`]);
/// - all other rendered voxels get an accumulating miss entry, which
///   lowers their probability of containing the goal.
pub fn build_local_probability(
    frame: &RenderedFrame,
    det: &DetectionResult,
    pose: &Pose,
    cam: &CameraModel,
    dims: &GridDims,
    prior: f64,
    params: &LikelihoodParams,
) -> Result<LocalObservation> {
    let origin = cam.origin(pose);
    let cam_voxel = dims.voxel_of_point(origin).ok_or(Error::OutOfGrid {
        x: origin[0],
        y: origin[1],
        z: origin[2],
    })?;
    let mut goal_score: std::collections::HashMap<Voxel, f64> = std::collections::HashMap::new();
    for &(v, s) in &det.goal_hits {
        let e = goal_score.entry(v).or_insert(0.0);
        if s > *e {
            *e = s;
        }
    }
    let recp_pts: Vec<([f64; 3], f64)> =
        det.recp_hits.iter().map(|&(v, s)| (dims.voxel_center(v), s)).collect();
    let miss = self_checked_miss(params, prior)?;
    let mut entries = Vec::new();
    for v in frame.surface_voxels() {
        let s_goal = goal_score.get(&v).copied().unwrap_or(0.0);
        let c = dims.voxel_center(v);
        let mut d_best = f64::INFINITY;
        let mut s_best = 0.0;
        for &(rc, rs) in &recp_pts {
            let d = ((c[0] - rc[0]).powi(2) + (c[1] - rc[1]).powi(2) + (c[2] - rc[2]).powi(2))
                .sqrt();
            if d < d_best {
                d_best = d;
                s_best = rs;
            }
        }
        if d_best > params.recp_cutoff {
            d_best = f64::INFINITY;
            s_best = 0.0;
        }
        let recp_term = match params.rule {
            CombineRule::WeightedSum => {
                let prox = if d_best.is_finite() { (-d_best / params.recp_range).exp() } else { 0.0 };
                (1.0 - params.alpha) * s_best * prox
            }
            CombineRule::GoalOnly => 0.0,
        };
        let (likelihood, evidence) = if s_goal > 0.0 {
            let raw = params.alpha * s_goal + recp_term;
            (raw.clamp(params.p_floor, params.p_ceil), Evidence::Detection)
        } else if recp_term > 0.0 {
            (recp_term.clamp(params.p_floor, params.p_ceil), Evidence::Context)
        } else {
            (miss, Evidence::Detection)
        };
        entries.push(ObsEntry {
            offset: (v.0 - cam_voxel.0, v.1 - cam_voxel.1, v.2 - cam_voxel.2),
            likelihood,
            evidence,
        });
    }
    Ok(LocalObservation { camera_height: cam.height_m, entries })
}

fn self_checked_miss(params: &LikelihoodParams, prior: f64) -> Result<f64> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::InvalidParam(format!("prior {prior} outside (0,1)")));
    }
    params.validate()?;
    Ok(params.miss_likelihood(prior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{render_frame, Receptacle, Scene, SceneObject, VoxelBox};
    use crate::voxelmap::{CellState, OccupancyMap, ProbabilityMap};
    use approx::assert_relative_eq;

    fn lp() -> LikelihoodParams {
        LikelihoodParams::default()
    }

    /// Walled room with optional goal box and receptacle.
    fn room_with(goal: Option<VoxelBox>, recp: Option<VoxelBox>) -> Scene {
        let dims = GridDims::new(64, 16, 0.1);
        let mut gt = OccupancyMap::new(dims);
        for k in 0..dims.h {
            for j in 0..dims.l {
                for i in 0..dims.l {
                    let wall = i == 0 || j == 0 || i == dims.l - 1 || j == dims.l - 1;
                    gt.set_state(
                        (i, j, k),
                        if wall { CellState::Occupied } else { CellState::Free },
                    );
                }
            }
        }
        let mut scene = Scene {
            dims,
            gt,
            receptacles: Vec::new(),
            objects: Vec::new(),
            floor_mask: vec![true; dims.n_cells()],
            seed: 0,
        };
        if let Some(b) = recp {
            for v in b.voxels() {
                scene.gt.set_state(v, CellState::Occupied);
            }
            scene.receptacles.push(Receptacle { class: "table".into(), bounds: b });
        }
        if let Some(b) = goal {
            for v in b.voxels() {
                scene.gt.set_state(v, CellState::Occupied);
            }
            scene.objects.push(SceneObject { class: "mug".into(), bounds: b, receptacle: None });
        }
        scene
    }

    #[test]
    fn test_combine_score_reference_points() {
        let p = lp();
        assert_eq!(combine_scores(0.0, 0.0, f64::INFINITY, &p), p.p_floor);
        assert_eq!(combine_scores(1.0, 0.0, f64::INFINITY, &p), 0.7);
        assert_relative_eq!(combine_scores(0.0, 1.0, 0.0, &p), 0.3, max_relative = 1e-15);
    }

    #[test]
    fn test_combine_monotone_and_clamped() {
        let p = lp();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let sg: f64 = rng.random();
            let sr: f64 = rng.random();
            let d: f64 = rng.random::<f64>() * 4.0;
            let base = combine_scores(sg, sr, d, &p);
            assert!((p.p_floor..=p.p_ceil).contains(&base));
            assert!(combine_scores((sg + 0.1).min(1.0), sr, d, &p) >= base);
            assert!(combine_scores(sg, (sr + 0.1).min(1.0), d, &p) >= base);
            assert!(combine_scores(sg, sr, d + 0.5, &p) <= base);
        }
    }

    #[test]
    fn test_goal_only_rule_ignores_receptacles() {
        let mut p = lp();
        p.rule = CombineRule::GoalOnly;
        assert_eq!(combine_scores(0.0, 1.0, 0.0, &p), p.p_floor);
        assert_eq!(combine_scores(1.0, 1.0, 0.0, &p), 0.7);
    }

    #[test]
    fn test_perfect_observation_raises_goal_voxel_to_alpha_exactly() {
        // Floor-standing goal, no receptacles anywhere: one perfect
        // observation must land the voxel exactly at the alpha weight.
        let goal = VoxelBox::new((40, 30, 0), (41, 31, 3));
        let scene = room_with(Some(goal), None);
        let cam = CameraModel::default();
        let pose = Pose { x: 1.5, y: 3.05, heading: 0.0 };
        let frame = render_frame(&scene.gt, &pose, &cam).unwrap();
        let labels = scene.labels("mug");
        let params = DetectorParams::default();
        let det = detect(&frame, &labels, &pose, &cam, &scene.dims, &params, 0);
        assert!(!det.goal_hits.is_empty(), "goal must be visible from the test pose");
        assert!(det.goal_hits.iter().all(|&(_, s)| s == 1.0));

        let prior = 0.01;
        let obs =
            build_local_probability(&frame, &det, &pose, &cam, &scene.dims, prior, &lp()).unwrap();
        let mut prob = ProbabilityMap::new(scene.dims, prior).unwrap();
        let stats = prob.fuse_observation(&obs, &pose).unwrap();
        assert_eq!(stats.applied as usize, obs.entries.len());
        for &(v, _) in &det.goal_hits {
            assert_relative_eq!(prob.p(v), 0.7, max_relative = 1e-12);
        }
        // A rendered wall voxel with no detection must sink below the prior
        // by exactly the miss factor in log-odds.
        let wall = frame
            .surface_voxels()
            .into_iter()
            .find(|&v| labels.label(v) == VoxelLabel::Plain)
            .unwrap();
        let expect = sigmoid(logit(prior) + logit(0.3));
        assert_relative_eq!(prob.p(wall), expect, max_relative = 1e-12);
    }

    #[test]
    fn test_receptacle_proximity_raises_nearby_voxels() {
        // Table visible, no goal: voxels near the table should rise above
        // the prior, voxels far from it should fall below.
        let table = VoxelBox::new((30, 28, 0), (34, 33, 4));
        let scene = room_with(None, Some(table));
        let cam = CameraModel::default();
        let pose = Pose { x: 1.5, y: 3.05, heading: 0.0 };
        let frame = render_frame(&scene.gt, &pose, &cam).unwrap();
        let labels = scene.labels("mug");
        let det =
            detect(&frame, &labels, &pose, &cam, &scene.dims, &DetectorParams::default(), 0);
        assert!(det.goal_hits.is_empty());
        assert!(!det.recp_hits.is_empty());
        let prior = 0.01;
        let obs =
            build_local_probability(&frame, &det, &pose, &cam, &scene.dims, prior, &lp()).unwrap();
        let mut prob = ProbabilityMap::new(scene.dims, prior).unwrap();
        prob.fuse_observation(&obs, &pose).unwrap();
        // The table surface itself: receptacle hit at distance 0 → 0.3.
        let top = det.recp_hits[0].0;
        assert!(prob.p(top) > 0.2, "table voxel p = {}", prob.p(top));
        // A far wall voxel rendered in the same frame sinks below prior.
        let far_wall = frame
            .surface_voxels()
            .into_iter()
            .find(|&v| {
                let c = scene.dims.voxel_center(v);
                let t = scene.dims.voxel_center(top);
                labels.label(v) == VoxelLabel::Plain
                    && ((c[0] - t[0]).powi(2) + (c[1] - t[1]).powi(2)).sqrt() > 3.5
            })
            .unwrap();
        assert!(prob.p(far_wall) < prior);
    }

    #[test]
    fn test_detect_deterministic_in_seed_and_step() {
        let goal = VoxelBox::new((40, 30, 0), (41, 31, 3));
        let scene = room_with(Some(goal), None);
        let cam = CameraModel::default();
        let pose = Pose { x: 1.5, y: 3.05, heading: 0.0 };
        let frame = render_frame(&scene.gt, &pose, &cam).unwrap();
        let labels = scene.labels("mug");
        let params = DetectorParams {
            tpr0: 0.6,
            tpr_decay: 0.9,
            fpr: 0.3,
            score_noise: 0.25,
            seed: 99,
        };
        let a = detect(&frame, &labels, &pose, &cam, &scene.dims, &params, 7);
        let b = detect(&frame, &labels, &pose, &cam, &scene.dims, &params, 7);
        assert_eq!(a, b);
        // Different steps decorrelate: over many steps the hit pattern must
        // vary (equality across all steps would mean a frozen RNG).
        let mut distinct = false;
        for step in 0..20 {
            let c = detect(&frame, &labels, &pose, &cam, &scene.dims, &params, step);
            if c != a {
                distinct = true;
                break;
            }
        }
        assert!(distinct);
    }

    #[test]
    fn test_hit_rate_matches_detection_curve() {
        // One-voxel goal at a known distance; no noise, no false positives.
        let goal = VoxelBox::new((40, 30, 5), (40, 30, 5));
        let mut scene = room_with(None, None);
        for v in goal.voxels() {
            scene.gt.set_state(v, CellState::Occupied);
        }
        scene.objects.push(SceneObject { class: "mug".into(), bounds: goal, receptacle: None });
        let cam = CameraModel::default();
        let pose = Pose { x: 1.5, y: 3.05, heading: 0.0 };
        let frame = render_frame(&scene.gt, &pose, &cam).unwrap();
        let labels = scene.labels("mug");
        let params =
            DetectorParams { tpr0: 0.8, tpr_decay: 0.85, fpr: 0.0, score_noise: 0.0, seed: 5 };
        let origin = cam.origin(&pose);
        let c = scene.dims.voxel_center((40, 30, 5));
        let d = ((c[0] - origin[0]).powi(2)
            + (c[1] - origin[1]).powi(2)
            + (c[2] - origin[2]).powi(2))
        .sqrt();
        let p = params.tpr(d);
        let n = 10_000u32;
        let mut hits = 0u32;
        for step in 0..n {
            let det = detect(&frame, &labels, &pose, &cam, &scene.dims, &params, step);
            assert!(det.goal_hits.len() <= 1);
            hits += det.goal_hits.len() as u32;
        }
        let rate = hits as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (rate - p).abs() < 3.0 * sigma,
            "rate {rate} vs expected {p} (σ = {sigma})"
        );
    }

    #[test]
    fn test_false_positives_only_when_enabled() {
        // No goal in the scene at all: every goal hit is spurious.
        let scene = room_with(None, None);
        let cam = CameraModel::default();
        let pose = Pose { x: 3.2, y: 3.2, heading: 1.0 };
        let frame = render_frame(&scene.gt, &pose, &cam).unwrap();
        let labels = scene.labels("mug");
        let surface: std::collections::BTreeSet<Voxel> =
            frame.surface_voxels().into_iter().collect();
        let clean =
            DetectorParams { tpr0: 1.0, tpr_decay: 1.0, fpr: 0.0, score_noise: 0.0, seed: 3 };
        let noisy = DetectorParams { fpr: 0.3, ..clean };
        let mut spurious = 0u32;
        for step in 0..1000 {
            let a = detect(&frame, &labels, &pose, &cam, &scene.dims, &clean, step);
            assert!(a.goal_hits.is_empty() && a.recp_hits.is_empty());
            let b = detect(&frame, &labels, &pose, &cam, &scene.dims, &noisy, step);
            assert!(b.goal_hits.len() <= 1);
            if let Some(&(v, s)) = b.goal_hits.first() {
                assert!(surface.contains(&v));
                assert_eq!(s, 1.0);
                spurious += 1;
            }
        }
        // Binomial(1000, 0.3): 3σ ≈ 43.
        assert!((250..=350).contains(&spurious), "spurious = {spurious}");
    }

    #[test]
    fn test_zero_tpr_detects_nothing() {
        let goal = VoxelBox::new((40, 30, 0), (41, 31, 3));
        let scene = room_with(Some(goal), None);
        let cam = CameraModel::default();
        let pose = Pose { x: 1.5, y: 3.05, heading: 0.0 };
        let frame = render_frame(&scene.gt, &pose, &cam).unwrap();
        let labels = scene.labels("mug");
        let params =
            DetectorParams { tpr0: 0.0, tpr_decay: 1.0, fpr: 0.0, score_noise: 0.0, seed: 1 };
        for step in 0..50 {
            let det = detect(&frame, &labels, &pose, &cam, &scene.dims, &params, step);
            assert!(det.goal_hits.is_empty() && det.recp_hits.is_empty());
        }
    }

    #[test]
    fn test_param_validation() {
        assert!(DetectorParams::default().validate().is_ok());
        assert!(DetectorParams { tpr0: 1.2, ..Default::default() }.validate().is_err());
        assert!(DetectorParams { tpr_decay: 0.0, ..Default::default() }.validate().is_err());
        assert!(DetectorParams { fpr: -0.1, ..Default::default() }.validate().is_err());
        assert!(LikelihoodParams::default().validate().is_ok());
        assert!(LikelihoodParams { p_floor: 0.6, ..lp() }.validate().is_err());
        assert!(LikelihoodParams { miss_factor: 1.0, ..lp() }.validate().is_err());
        assert!(LikelihoodParams { miss_factor: 0.0, ..lp() }.validate().is_err());
    }

    #[test]
    fn test_miss_likelihood_shift_is_prior_independent() {
        let p = lp();
        for &prior in &[0.01, 0.1, 0.4] {
            let m = p.miss_likelihood(prior);
            assert_relative_eq!(
                logit(m) - logit(prior),
                logit(0.3),
                max_relative = 1e-12
            );
        }
    }
}
