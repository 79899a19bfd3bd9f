//! Navigation policies. Every policy shares one controller — map projection,
//! obstacle inflation, sighting confirmation, path planning and following,
//! stuck recovery — and differs only in how it picks the next navigation
//! goal. That isolation is what makes score-function comparisons meaningful:
//! two policies in the same scene diverge only through their goal choices.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{angle_diff, Cell, GridDims, Pose, Voxel};
use crate::pathing::{
    distance_field, free_space_distance_field, frontiers, inflate_obstacles, plan_path,
    point_cell_distance,
};
use crate::scoring::{gain_dense, polo_2d, polo_dense, polo_sampled, Configuration, ScoreParams};
use crate::sim::{Action, KinematicsParams, MappingState};
use crate::visibility::los_between_voxels;
use crate::voxelmap::CellState;

/// What a policy returns each step: the action, plus the chosen goal's score
/// on steps where a replan happened (for trace analysis).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub replanned_score: Option<f64>,
}

/// A navigation policy: consumes the agent's maps and pose, emits actions.
pub trait Policy {
    fn act(&mut self, maps: &MappingState, pose: &Pose, step: u32) -> Decision;
    fn name(&self) -> &str;
}

/// Controller knobs shared by all policies.
#[derive(Clone, Copy, Debug)]
pub struct ControlParams {
    /// Maximum steps between goal replans.
    pub t_replan: u32,
    /// Probability at which a voxel counts as a confirmed sighting.
    pub p_confirm: f64,
    /// Top voxel layer of the agent body; occupancy projects through
    /// `0..=k_body` for planning.
    pub k_body: i32,
    /// Camera height (meters) for sighting line-of-sight checks.
    pub camera_height: f64,
    pub kin: KinematicsParams,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            t_replan: 25,
            p_confirm: 0.7,
            k_body: 8,
            camera_height: 0.88,
            kin: KinematicsParams::default(),
        }
    }
}

impl ControlParams {
    /// Derive the body projection layer from a physical body height.
    pub fn for_grid(kin: KinematicsParams, body_height_m: f64, dims: &GridDims) -> ControlParams {
        ControlParams {
            k_body: dims.layer_of_height(body_height_m),
            kin,
            ..ControlParams::default()
        }
    }
}

/// Goal selection strategies. Each returns a ranked candidate list; the
/// controller walks it until a candidate admits a path.
pub enum Chooser {
    /// Dense probable-object-location field, best cells first.
    PoloDense { score: ScoreParams, parallel: bool },
    /// Monte-Carlo variant: evaluate `k` sampled cells per replan.
    PoloSampled { score: ScoreParams, k: usize, rng: ChaCha8Rng },
    /// Score over 2D-projected maps instead of the voxel grid.
    Polo2d { score: ScoreParams },
    /// Coverage maximization: most newly visible voxels first.
    Gain { score: ScoreParams, parallel: bool },
    /// Head for the highest-probability voxel; frontier fallback while the
    /// probability map is still uniform.
    MaxProb { prior_epsilon: f64 },
    /// Classic frontier exploration, nearest frontier first.
    Frontier,
}

/// How many ranked candidates the controller will try to plan toward.
const MAX_PLAN_TRIES: usize = 40;
/// Resampling attempts for the sampled chooser when its pick is unusable.
const SAMPLE_RETRIES: usize = 5;
/// Cap on 2D-scored candidates per replan (cost control).
const MAX_2D_EVALS: usize = 200;
/// Margin (meters) kept inside the success radius when judging arrival
/// against a confirmed sighting, guarding the exact-boundary case.
const ARRIVAL_GUARD_M: f64 = 0.02;

impl Chooser {
    /// Ranked `(cell, score)` candidates, best first. Already filtered
    /// against inflated cells; planning feasibility is the caller's job.
    fn select(
        &mut self,
        maps: &MappingState,
        pose: &Pose,
        agent_cell: Cell,
        occ2d: &[CellState],
        inflated: &[bool],
        dims: &GridDims,
    ) -> Vec<(Cell, f64)> {
        match self {
            Chooser::PoloDense { score, parallel } => {
                match polo_dense(&maps.occ, &maps.prob, pose, score, *parallel) {
                    Ok(map) => rank_score_map(&map.total, &map.dzeta, &map.valid, inflated, dims),
                    Err(_) => Vec::new(),
                }
            }
            Chooser::Gain { score, parallel } => {
                match gain_dense(&maps.occ, pose, score, *parallel) {
                    Ok(map) => rank_score_map(&map.total, &map.dzeta, &map.valid, inflated, dims),
                    Err(_) => Vec::new(),
                }
            }
            Chooser::PoloSampled { score, k, rng } => {
                match polo_sampled(&maps.occ, &maps.prob, pose, score, *k, rng) {
                    Ok((cfg, s)) if !inflated[dims.cell_index(cfg.cell)] && s > 0.0 => {
                        vec![(cfg.cell, s)]
                    }
                    _ => Vec::new(),
                }
            }
            Chooser::Polo2d { score } => {
                let prob2d = maps.prob.project_max_2d();
                let dist = free_space_distance_field(dims, occ2d, &[agent_cell]);
                // Candidates: frontier cells plus free cells around the
                // highest-probability columns (so the exploit term has
                // interior viewpoints to act on).
                let mut cand: Vec<Cell> = frontiers(dims, occ2d);
                let mut top: Vec<usize> = (0..prob2d.len()).collect();
                top.sort_by(|&a, &b| {
                    prob2d[b].partial_cmp(&prob2d[a]).unwrap().then(a.cmp(&b))
                });
                for &col in top.iter().take(10) {
                    let (ci, cj) = (col as i32 % dims.l, col as i32 / dims.l);
                    for dj in -3i32..=3 {
                        for di in -3i32..=3 {
                            let c = (ci + di, cj + dj);
                            if dims.cell_in_bounds(c) {
                                cand.push(c);
                            }
                        }
                    }
                }
                cand.sort_unstable();
                cand.dedup();
                let mut scored: Vec<(Cell, f64, f64)> = Vec::new();
                for c in cand {
                    let idx = dims.cell_index(c);
                    if occ2d[idx] != CellState::Free
                        || inflated[idx]
                        || !dist[idx].is_finite()
                    {
                        continue;
                    }
                    let zeta = Configuration { cell: c, d_zeta: dist[idx] };
                    if let Ok(s) = polo_2d(occ2d, &prob2d, dims, &zeta, score) {
                        if s > 0.0 {
                            scored.push((c, s, dist[idx]));
                        }
                    }
                    if scored.len() >= MAX_2D_EVALS {
                        break;
                    }
                }
                scored.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap()
                        .then(a.2.partial_cmp(&b.2).unwrap())
                        .then(cell_key(a.0, dims).cmp(&cell_key(b.0, dims)))
                });
                scored.into_iter().take(MAX_PLAN_TRIES).map(|(c, s, _)| (c, s)).collect()
            }
            Chooser::MaxProb { prior_epsilon } => {
                let (v, p) = maps.prob.argmax();
                if p <= maps.prior + *prior_epsilon {
                    // Nothing stands out yet; explore like a frontier agent.
                    return frontier_candidates(occ2d, inflated, agent_cell, dims)
                        .into_iter()
                        .map(|(c, _)| (c, p))
                        .collect();
                }
                // Rank approach cells by geodesic distance from the hot
                // column (unknown space is traversable for ranking). Objects
                // usually sit on furniture whose entire footprint projects
                // as occupied, so grow the source through the contiguous
                // occupied slab around the column first — otherwise the
                // field cannot escape a column buried mid-receptacle.
                let seeds = occupied_slab_around(v, occ2d, dims, 0.5);
                let dist = distance_field(dims, |c| occ2d[c] != CellState::Occupied, &seeds);
                let mut cand: Vec<(f64, Cell)> = Vec::new();
                for j in 0..dims.l {
                    for i in 0..dims.l {
                        let idx = dims.cell_index((i, j));
                        if inflated[idx] || !dist[idx].is_finite() {
                            continue;
                        }
                        cand.push((dist[idx], (i, j)));
                    }
                }
                cand.sort_by(|a, b| {
                    a.0.partial_cmp(&b.0)
                        .unwrap()
                        .then(cell_key(a.1, dims).cmp(&cell_key(b.1, dims)))
                });
                cand.into_iter().take(20).map(|(_, c)| (c, p)).collect()
            }
            Chooser::Frontier => frontier_candidates(occ2d, inflated, agent_cell, dims),
        }
    }

    fn retries(&self) -> usize {
        match self {
            Chooser::PoloSampled { .. } => SAMPLE_RETRIES,
            _ => 1,
        }
    }
}

#[inline]
fn cell_key(c: Cell, dims: &GridDims) -> i32 {
    c.1 * dims.l + c.0
}

/// The hot column plus every occupied cell 8-connected to it within
/// `radius` meters of the column center: the piece of furniture (or wall)
/// the voxel belongs to, used as the zero-distance source when ranking
/// approach cells. Connectivity stops at free cells, so a nearby but
/// separate wall is not absorbed.
fn occupied_slab_around(
    v: Voxel,
    occ2d: &[CellState],
    dims: &GridDims,
    radius: f64,
) -> Vec<Cell> {
    let vc = dims.voxel_center(v);
    let col = (v.0, v.1);
    let mut seen = vec![false; dims.n_cells()];
    let mut seeds = vec![col];
    let mut stack = vec![col];
    seen[dims.cell_index(col)] = true;
    while let Some(c) = stack.pop() {
        for dj in -1i32..=1 {
            for di in -1i32..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let n = (c.0 + di, c.1 + dj);
                if !dims.cell_in_bounds(n) {
                    continue;
                }
                let idx = dims.cell_index(n);
                if seen[idx] || occ2d[idx] != CellState::Occupied {
                    continue;
                }
                let cc = dims.cell_center(n);
                if ((cc[0] - vc[0]).powi(2) + (cc[1] - vc[1]).powi(2)).sqrt() > radius {
                    continue;
                }
                seen[idx] = true;
                seeds.push(n);
                stack.push(n);
            }
        }
    }
    seeds
}

/// Rank a dense score field's usable cells: best total first, then nearer,
/// then lower index — the same ordering goal selection on full maps uses.
fn rank_score_map(
    total: &[f64],
    dzeta: &[f64],
    valid: &[bool],
    inflated: &[bool],
    dims: &GridDims,
) -> Vec<(Cell, f64)> {
    let mut cand: Vec<(f64, f64, i32)> = Vec::new();
    for idx in 0..total.len() {
        if !valid[idx] || inflated[idx] || total[idx] <= 0.0 {
            continue;
        }
        cand.push((total[idx], dzeta[idx], idx as i32));
    }
    cand.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(&b.2))
    });
    cand.into_iter()
        .take(MAX_PLAN_TRIES)
        .map(|(s, _, idx)| ((idx % dims.l, idx / dims.l), s))
        .collect()
}

/// Reachable frontier cells, nearest first (geodesic over known-free
/// space); the reported score is the path distance.
fn frontier_candidates(
    occ2d: &[CellState],
    inflated: &[bool],
    agent_cell: Cell,
    dims: &GridDims,
) -> Vec<(Cell, f64)> {
    let dist = free_space_distance_field(dims, occ2d, &[agent_cell]);
    let mut cand: Vec<(f64, Cell)> = Vec::new();
    for c in frontiers(dims, occ2d) {
        let idx = dims.cell_index(c);
        if inflated[idx] || !dist[idx].is_finite() {
            continue;
        }
        cand.push((dist[idx], c));
    }
    cand.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap().then(cell_key(a.1, dims).cmp(&cell_key(b.1, dims)))
    });
    cand.into_iter().take(MAX_PLAN_TRIES).map(|(d, c)| (c, d)).collect()
}

/// Shared navigation state: current plan, confirmation status, stuck
/// recovery.
struct Controller {
    p: ControlParams,
    path: VecDeque<Cell>,
    goal_cell: Option<Cell>,
    steps_since_replan: u32,
    confirmed: Option<Voxel>,
    pursuing: bool,
    /// Position before the last MOVE_FORWARD, for collision inference.
    last_forward_from: Option<(f64, f64)>,
    stuck: u32,
    blacklist: Vec<Cell>,
    /// Cells the body has bumped into: obstacles real enough to collide
    /// with but below or behind the camera's view, so the map alone would
    /// keep planning through them. Treated as permanently impassable.
    bumped: Vec<usize>,
    done: bool,
}

impl Controller {
    fn new(p: ControlParams) -> Controller {
        Controller {
            p,
            path: VecDeque::new(),
            goal_cell: None,
            steps_since_replan: 0,
            confirmed: None,
            pursuing: false,
            last_forward_from: None,
            stuck: 0,
            blacklist: Vec::new(),
            bumped: Vec::new(),
            done: false,
        }
    }

    /// After an inferred collision, mark every cell the blocked forward
    /// sweep could have hit. The body is a disc, so the contact may sit
    /// diagonally off the heading line; blaming only the straight-ahead
    /// cell lets the same sideways clip repeat forever. Candidates are all
    /// cells the swept disc touches, minus cells the disc already overlaps
    /// while standing still (standing there was legal, so they are clear)
    /// and minus cells currently observed free — a mapped-free column
    /// cannot be solid, so the blame must lie on an unknown or occupied
    /// cell in the sweep.
    fn bump_cells(&self, pose: &Pose, occ2d: &[CellState], dims: &GridDims) -> Vec<usize> {
        let r = self.p.kin.agent_radius;
        let vs = dims.voxel_size;
        let (sh, ch) = pose.heading.sin_cos();
        let from = [pose.x, pose.y];
        let to = [pose.x + self.p.kin.forward_step * ch, pose.y + self.p.kin.forward_step * sh];
        let r_cells = (r / vs).ceil() as i32 + 1;
        let cells_near = |p: [f64; 2]| -> Vec<usize> {
            let (ci, cj) = ((p[0] / vs).floor() as i32, (p[1] / vs).floor() as i32);
            let mut out = Vec::new();
            for dj in -r_cells..=r_cells {
                for di in -r_cells..=r_cells {
                    let cell = (ci + di, cj + dj);
                    if dims.cell_in_bounds(cell) && point_cell_distance(dims, p, cell) < r {
                        out.push(dims.cell_index(cell));
                    }
                }
            }
            out
        };
        let standing = cells_near(from);
        let step_len = self.p.kin.forward_step;
        let n = ((step_len / (vs * 0.5)).ceil() as usize).max(1);
        let mut out = Vec::new();
        for s in 1..=n {
            let t = s as f64 / n as f64;
            let p = [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
            for idx in cells_near(p) {
                if occ2d[idx] != CellState::Free
                    && !standing.contains(&idx)
                    && !out.contains(&idx)
                {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Waypoint arrival radius: generous enough that a forward step can
    /// never strand the agent oscillating around a waypoint it overshot.
    fn pop_radius(&self, dims: &GridDims) -> f64 {
        (0.5 * dims.voxel_size).max(0.55 * self.p.kin.forward_step)
    }

    /// Emit the next action along the current path, or `None` when the
    /// path is exhausted. Pops waypoints we've reached or passed.
    fn follow(&mut self, pose: &Pose, dims: &GridDims) -> Option<Action> {
        if self.path.is_empty() {
            return None;
        }
        // Among the next few waypoints, head for the nearest: a 0.25 m step
        // on a 0.1 m grid regularly skips past cells mid-stride.
        let window = self.path.len().min(6);
        let mut i_min = 0;
        let mut d_min = f64::INFINITY;
        for i in 0..window {
            let cc = dims.cell_center(self.path[i]);
            let d = ((pose.x - cc[0]).powi(2) + (pose.y - cc[1]).powi(2)).sqrt();
            if d < d_min {
                d_min = d;
                i_min = i;
            }
        }
        for _ in 0..i_min {
            self.path.pop_front();
        }
        if d_min <= self.pop_radius(dims) {
            self.path.pop_front();
        }
        let target = *self.path.front()?;
        let tc = dims.cell_center(target);
        let bearing = (tc[1] - pose.y).atan2(tc[0] - pose.x);
        let mis = angle_diff(bearing, pose.heading);
        let half = 0.5 * self.p.kin.turn_angle;
        if mis.abs() > half + 1e-12 {
            // A target dead behind gives +π, so the tie turns left.
            if mis > 0.0 {
                Some(Action::TurnLeft)
            } else {
                Some(Action::TurnRight)
            }
        } else {
            Some(Action::MoveForward)
        }
    }
}

/// Scan the probability map for a confirmable sighting: the strongest voxel
/// at or above the confirmation threshold with line of sight from the
/// camera on the agent's own occupancy map.
fn scan_confirm(
    maps: &MappingState,
    pose: &Pose,
    dims: &GridDims,
    p_confirm: f64,
    camera_height: f64,
) -> Option<Voxel> {
    let probs = maps.prob.p_slice();
    let mut cands: Vec<(f64, usize)> = Vec::new();
    for (idx, &p) in probs.iter().enumerate() {
        if p >= p_confirm {
            cands.push((p, idx));
        }
    }
    if cands.is_empty() {
        return None;
    }
    let cam = dims.voxel_of_point([pose.x, pose.y, camera_height])?;
    // Stable sort: equal probabilities keep index order.
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (_, idx) in cands.into_iter().take(50) {
        let v = dims.voxel_of_index(idx);
        if los_between_voxels(&maps.occ, cam, v) {
            return Some(v);
        }
    }
    None
}

/// A complete policy: the shared controller plus one goal chooser.
pub struct NavPolicy {
    name: String,
    ctrl: Controller,
    chooser: Chooser,
}

impl NavPolicy {
    pub fn polo_dense(score: ScoreParams, ctrl: ControlParams, parallel: bool) -> NavPolicy {
        NavPolicy {
            name: "polo-dense".into(),
            ctrl: Controller::new(ctrl),
            chooser: Chooser::PoloDense { score, parallel },
        }
    }

    pub fn polo_sampled(
        score: ScoreParams,
        ctrl: ControlParams,
        k: usize,
        seed: u64,
    ) -> NavPolicy {
        NavPolicy {
            name: "polo-sampled".into(),
            ctrl: Controller::new(ctrl),
            chooser: Chooser::PoloSampled { score, k, rng: ChaCha8Rng::seed_from_u64(seed) },
        }
    }

    pub fn polo_2d(score: ScoreParams, ctrl: ControlParams) -> NavPolicy {
        NavPolicy {
            name: "polo-2d".into(),
            ctrl: Controller::new(ctrl),
            chooser: Chooser::Polo2d { score },
        }
    }

    pub fn max_coverage(score: ScoreParams, ctrl: ControlParams, parallel: bool) -> NavPolicy {
        NavPolicy {
            name: "max-coverage".into(),
            ctrl: Controller::new(ctrl),
            chooser: Chooser::Gain { score, parallel },
        }
    }

    pub fn max_prob(ctrl: ControlParams) -> NavPolicy {
        NavPolicy {
            name: "max-prob".into(),
            ctrl: Controller::new(ctrl),
            chooser: Chooser::MaxProb { prior_epsilon: 1e-9 },
        }
    }

    pub fn fbe(ctrl: ControlParams) -> NavPolicy {
        NavPolicy {
            name: "fbe".into(),
            ctrl: Controller::new(ctrl),
            chooser: Chooser::Frontier,
        }
    }

    /// Pick a new navigation goal and plan toward it. Returns the chosen
    /// goal's score, or `None` when nothing viable remains.
    fn replan(
        &mut self,
        maps: &MappingState,
        pose: &Pose,
        agent_cell: Cell,
        occ2d: &[CellState],
        inflated: &[bool],
        dims: &GridDims,
    ) -> Option<f64> {
        self.ctrl.steps_since_replan = 0;
        self.ctrl.path.clear();
        self.ctrl.goal_cell = None;
        self.ctrl.pursuing = false;
        let r_arrived = self.ctrl.pop_radius(dims);

        // A confirmed sighting overrides exploration: approach it.
        if let Some(v) = self.ctrl.confirmed {
            if let Some(score) =
                self.plan_pursuit(v, maps, pose, agent_cell, occ2d, inflated, dims)
            {
                return Some(score);
            }
            // No reachable cell gets us closer. If we're already inside the
            // success radius, stopping here beats wandering off; otherwise
            // keep exploring — mapping may open a way.
            let vc = dims.voxel_center(v);
            let d = ((pose.x - vc[0]).powi(2) + (pose.y - vc[1]).powi(2)).sqrt();
            if d <= self.ctrl.p.kin.success_dist - ARRIVAL_GUARD_M {
                self.ctrl.done = true;
                return None;
            }
        }

        for _ in 0..self.chooser.retries() {
            let cands = self.chooser.select(maps, pose, agent_cell, occ2d, inflated, dims);
            for (cell, score) in cands {
                if self.ctrl.blacklist.contains(&cell) {
                    continue;
                }
                // Skip goals we are effectively standing on; they'd yield an
                // empty plan and another replan next step.
                let cc = dims.cell_center(cell);
                if ((pose.x - cc[0]).powi(2) + (pose.y - cc[1]).powi(2)).sqrt() <= r_arrived {
                    continue;
                }
                if let Ok(p) = plan_path(dims, occ2d, inflated, agent_cell, cell) {
                    if p.len() >= 2 {
                        self.ctrl.path = p.into_iter().skip(1).collect();
                        self.ctrl.goal_cell = Some(cell);
                        return Some(score);
                    }
                }
            }
        }
        None
    }

    /// Plan to a navigable cell beside a confirmed sighting.
    fn plan_pursuit(
        &mut self,
        v: Voxel,
        maps: &MappingState,
        pose: &Pose,
        agent_cell: Cell,
        occ2d: &[CellState],
        inflated: &[bool],
        dims: &GridDims,
    ) -> Option<f64> {
        let vc = dims.voxel_center(v);
        // Accept standing anywhere inside the success radius (less a small
        // guard); trying the nearest cells first keeps approaches tight
        // when the geometry allows it.
        let reach = 0.95 * self.ctrl.p.kin.success_dist;
        let r_arrived = self.ctrl.pop_radius(dims);
        let r_cells = (reach / dims.voxel_size).ceil() as i32 + 1;
        let mut targets: Vec<(f64, Cell)> = Vec::new();
        for dj in -r_cells..=r_cells {
            for di in -r_cells..=r_cells {
                let cell = (v.0 + di, v.1 + dj);
                if !dims.cell_in_bounds(cell) {
                    continue;
                }
                let idx = dims.cell_index(cell);
                if inflated[idx] || self.ctrl.blacklist.contains(&cell) {
                    continue;
                }
                let cc = dims.cell_center(cell);
                let d = ((cc[0] - vc[0]).powi(2) + (cc[1] - vc[1]).powi(2)).sqrt();
                if d <= reach {
                    targets.push((d, cell));
                }
            }
        }
        targets.sort_by(|a, b| {
            a.0.partial_cmp(&b.0).unwrap().then(cell_key(a.1, dims).cmp(&cell_key(b.1, dims)))
        });
        let p_sighting = maps.prob.p(v);
        for (_, cell) in targets.into_iter().take(60) {
            let cc = dims.cell_center(cell);
            if ((pose.x - cc[0]).powi(2) + (pose.y - cc[1]).powi(2)).sqrt() <= r_arrived {
                continue;
            }
            if let Ok(p) = plan_path(dims, occ2d, inflated, agent_cell, cell) {
                if p.len() >= 2 {
                    self.ctrl.path = p.into_iter().skip(1).collect();
                    self.ctrl.goal_cell = Some(cell);
                    self.ctrl.pursuing = true;
                    return Some(p_sighting);
                }
            }
        }
        None
    }
}

impl Policy for NavPolicy {
    fn act(&mut self, maps: &MappingState, pose: &Pose, _step: u32) -> Decision {
        let stop = Decision { action: Action::Stop, replanned_score: None };
        if self.ctrl.done {
            return stop;
        }
        let dims = *maps.occ.dims();
        let agent_cell = match dims.cell_of_point(pose.x, pose.y) {
            Some(c) => c,
            None => {
                self.ctrl.done = true;
                return stop;
            }
        };

        // Collision inference: a forward that didn't move means the body hit
        // something the map hasn't resolved. Replan; repeated bumps toward
        // the same goal blacklist it.
        let mut force_replan = false;
        let mut collided = false;
        if let Some(from) = self.ctrl.last_forward_from.take() {
            if from == (pose.x, pose.y) {
                force_replan = true;
                collided = true;
                self.ctrl.stuck += 1;
                if self.ctrl.stuck >= 3 {
                    if let Some(g) = self.ctrl.goal_cell {
                        self.ctrl.blacklist.push(g);
                    }
                    self.ctrl.goal_cell = None;
                    self.ctrl.path.clear();
                    self.ctrl.stuck = 0;
                }
            } else {
                self.ctrl.stuck = 0;
            }
        }

        // Planning views of the current map.
        let occ2d = maps.occ.project_2d(self.ctrl.p.k_body);
        let blocked: Vec<bool> = occ2d.iter().map(|&s| s == CellState::Occupied).collect();
        let mut inflated = inflate_obstacles(&dims, &blocked, self.ctrl.p.kin.agent_radius);
        // The agent's own neighborhood is evidently traversable even when
        // freshly mapped walls inflate over it; free it so plans can start.
        let r_free = self.ctrl.p.kin.agent_radius + 2.0 * dims.voxel_size;
        let r_cells = (r_free / dims.voxel_size).ceil() as i32;
        for dj in -r_cells..=r_cells {
            for di in -r_cells..=r_cells {
                let cell = (agent_cell.0 + di, agent_cell.1 + dj);
                if !dims.cell_in_bounds(cell) {
                    continue;
                }
                let idx = dims.cell_index(cell);
                if !blocked[idx] && point_cell_distance(&dims, [pose.x, pose.y], cell) <= r_free {
                    inflated[idx] = false;
                }
            }
        }
        // Feed collisions back into planning: the map can't see what the
        // body just hit (too low or too close for the camera), so without
        // this the planner would re-route through the same cell forever.
        if collided {
            for idx in self.ctrl.bump_cells(pose, &occ2d, &dims) {
                if !self.ctrl.bumped.contains(&idx) {
                    self.ctrl.bumped.push(idx);
                }
            }
        }
        // A bumped cell stays impassable while unobserved, but a later
        // free observation clears it: solid columns can never map as free,
        // so a free reading proves that blame landed on a bystander.
        for &idx in &self.ctrl.bumped {
            if occ2d[idx] != CellState::Free {
                inflated[idx] = true;
            }
        }

        // Sighting bookkeeping: drop a confirmation whose evidence washed
        // out (a false positive fading under fresh misses), then look for a
        // new one.
        if let Some(v) = self.ctrl.confirmed {
            if maps.prob.p(v) < self.ctrl.p.p_confirm {
                self.ctrl.confirmed = None;
                self.ctrl.pursuing = false;
                self.ctrl.path.clear();
                self.ctrl.goal_cell = None;
            }
        }
        if self.ctrl.confirmed.is_none() {
            if let Some(v) = scan_confirm(
                maps,
                pose,
                &dims,
                self.ctrl.p.p_confirm,
                self.ctrl.p.camera_height,
            ) {
                self.ctrl.confirmed = Some(v);
                self.ctrl.pursuing = false;
                self.ctrl.path.clear();
                self.ctrl.goal_cell = None;
            }
        }

        // Close enough to a confirmed sighting → declare it found. The
        // margin absorbs a confirmation voxel sitting a cell or two off the
        // object it was detected on.
        if let Some(v) = self.ctrl.confirmed {
            let vc = dims.voxel_center(v);
            let d = ((pose.x - vc[0]).powi(2) + (pose.y - vc[1]).powi(2)).sqrt();
            if d <= 0.85 * self.ctrl.p.kin.success_dist {
                self.ctrl.done = true;
                return stop;
            }
        }

        let goal_gone = match self.ctrl.goal_cell {
            None => true,
            Some(g) => inflated[dims.cell_index(g)],
        };
        let mut replanned_score = None;
        if force_replan
            || goal_gone
            || self.ctrl.path.is_empty()
            || self.ctrl.steps_since_replan >= self.ctrl.p.t_replan
        {
            replanned_score = self.replan(maps, pose, agent_cell, &occ2d, &inflated, &dims);
            if replanned_score.is_none() {
                // Nothing left worth visiting (or reachable): the episode
                // is over from the policy's point of view.
                self.ctrl.done = true;
                return stop;
            }
        }

        self.ctrl.steps_since_replan += 1;
        match self.ctrl.follow(pose, &dims) {
            Some(a) => {
                if a == Action::MoveForward {
                    self.ctrl.last_forward_from = Some((pose.x, pose.y));
                }
                Decision { action: a, replanned_score }
            }
            None => {
                if self.ctrl.pursuing {
                    // Arrived beside the sighting: stop if that actually put
                    // us inside the success radius, otherwise plan a fresh
                    // approach next step.
                    if let Some(v) = self.ctrl.confirmed {
                        let vc = dims.voxel_center(v);
                        let d =
                            ((pose.x - vc[0]).powi(2) + (pose.y - vc[1]).powi(2)).sqrt();
                        if d <= self.ctrl.p.kin.success_dist - ARRIVAL_GUARD_M {
                            self.ctrl.done = true;
                            return stop;
                        }
                    }
                }
                // Path finished this very step (overshoot popped the tail).
                // Turn in place; the next step replans with fresh maps.
                self.ctrl.path.clear();
                self.ctrl.goal_cell = None;
                self.ctrl.pursuing = false;
                Decision { action: Action::TurnLeft, replanned_score }
            }
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Construct a policy by name: `polo-dense`, `polo-sampled`, `polo-2d`,
/// `max-coverage`, `max-prob`, or `fbe`.
pub fn build_policy(
    name: &str,
    score: ScoreParams,
    ctrl: ControlParams,
    k: usize,
    seed: u64,
    parallel: bool,
) -> Result<NavPolicy> {
    match name {
        "polo-dense" => Ok(NavPolicy::polo_dense(score, ctrl, parallel)),
        "polo-sampled" => Ok(NavPolicy::polo_sampled(score, ctrl, k, seed)),
        "polo-2d" => Ok(NavPolicy::polo_2d(score, ctrl)),
        "max-coverage" => Ok(NavPolicy::max_coverage(score, ctrl, parallel)),
        "max-prob" => Ok(NavPolicy::max_prob(ctrl)),
        "fbe" => Ok(NavPolicy::fbe(ctrl)),
        other => Err(Error::UnknownPolicy(other.to_string())),
    }
}
