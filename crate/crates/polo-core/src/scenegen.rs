//! Seeded procedural indoor scenes: BSP room partitioning with doorway
//! gaps, furniture receptacles, one goal instance placed on a receptacle,
//! and distractor objects. Generation is a pure function of the seed — the
//! same seed always produces byte-identical scene files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridDims, Pose};
use crate::pathing::{disc_hits_blocked, distance_field, inflate_obstacles};
use crate::scene::{Receptacle, Scene, SceneObject, VoxelBox};
use crate::voxelmap::{CellState, OccupancyMap};

/// Knobs for the procedural generator. Lengths are meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    /// Grid side length in cells.
    pub l: i32,
    /// Grid height in voxel layers (≤ 16).
    pub h: i32,
    pub voxel_size: f64,
    /// Rooms are never split below this side length.
    pub min_room_m: f64,
    /// Doorway width carved into each interior wall.
    pub door_width_m: f64,
    /// Chance a splittable region is left whole (varied room sizes).
    pub p_stop_split: f64,
    /// Receptacles attempted per room (inclusive range).
    pub recp_per_room: (u32, u32),
    /// Distractor objects attempted across the scene.
    pub n_distractors: u32,
    pub goal_class: String,
    pub distractor_classes: Vec<String>,
    /// Camera/body height; navigable columns must be free through it.
    pub agent_height_m: f64,
    /// Body disc radius for clearance checks.
    pub agent_radius_m: f64,
    /// Scene placement attempts before giving up.
    pub max_retries: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            l: 96,
            h: 12,
            voxel_size: 0.1,
            min_room_m: 2.2,
            door_width_m: 0.7,
            p_stop_split: 0.2,
            recp_per_room: (1, 2),
            n_distractors: 2,
            goal_class: "mug".into(),
            distractor_classes: vec!["box".into(), "vase".into()],
            agent_height_m: 0.88,
            agent_radius_m: 0.17,
            max_retries: 16,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.l < 16 || self.h < 4 || self.h > 16 {
            return Err(Error::InvalidParam(format!(
                "grid {}x{} outside supported range",
                self.l, self.h
            )));
        }
        if !(self.voxel_size > 0.0) {
            return Err(Error::InvalidParam("voxel_size must be positive".into()));
        }
        if self.door_width_m < 2.0 * self.agent_radius_m + 2.0 * self.voxel_size {
            return Err(Error::InvalidParam(format!(
                "door width {} too narrow for agent radius {}",
                self.door_width_m, self.agent_radius_m
            )));
        }
        if self.recp_per_room.0 > self.recp_per_room.1 {
            return Err(Error::InvalidParam("recp_per_room range reversed".into()));
        }
        Ok(())
    }

    /// Topmost voxel layer the agent body occupies.
    pub fn body_top_layer(&self) -> i32 {
        ((self.agent_height_m / self.voxel_size).floor() as i32).min(self.h - 1)
    }
}

/// Furniture catalog entry: class name and footprint/height in meters.
const FURNITURE: &[(&str, f64, f64, f64)] = &[
    ("table", 0.8, 0.8, 0.5),
    ("counter", 1.2, 0.6, 0.9),
    ("couch", 1.8, 0.8, 0.45),
    ("shelf", 0.9, 0.4, 0.8),
];

/// Interior rectangle of free cells (inclusive bounds, walls excluded).
#[derive(Clone, Copy, Debug)]
struct Room {
    i0: i32,
    j0: i32,
    i1: i32,
    j1: i32,
}

impl Room {
    fn width(&self) -> i32 {
        self.i1 - self.i0 + 1
    }
    fn height(&self) -> i32 {
        self.j1 - self.j0 + 1
    }
}

/// Generate a scene from a seed. Placement is retried (with fresh
/// randomness from the same stream) until the goal is placed and a
/// substantial connected region of navigable space reaches it; after
/// `max_retries` failures the seed is rejected.
pub fn generate_scene(seed: u64, p: &GenParams) -> Result<Scene> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_reason = String::new();
    for _ in 0..p.max_retries.max(1) {
        match try_generate(seed, p, &mut rng) {
            Ok(scene) => return Ok(scene),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::GenerationFailed { seed, reason: last_reason })
}

fn try_generate(seed: u64, p: &GenParams, rng: &mut ChaCha8Rng) -> std::result::Result<Scene, String> {
    let dims = GridDims::new(p.l, p.h, p.voxel_size);
    let vs = p.voxel_size;
    let mut gt = OccupancyMap::new(dims);
    // Free interior, solid border walls at full height.
    for k in 0..dims.h {
        for j in 0..dims.l {
            for i in 0..dims.l {
                let wall = i == 0 || j == 0 || i == dims.l - 1 || j == dims.l - 1;
                gt.set_state((i, j, k), if wall { CellState::Occupied } else { CellState::Free });
            }
        }
    }

    // Recursive BSP wall placement.
    let min_room_cells = ((p.min_room_m / vs).round() as i32).max(4);
    let door_cells = ((p.door_width_m / vs).round() as i32).max(1);
    let mut rooms = Vec::new();
    let whole = Room { i0: 1, j0: 1, i1: dims.l - 2, j1: dims.l - 2 };
    split_region(whole, 0, min_room_cells, door_cells, p.p_stop_split, rng, &mut gt, &mut rooms);

    // Furniture receptacles.
    let mut receptacles: Vec<Receptacle> = Vec::new();
    for room in &rooms {
        let n = if p.recp_per_room.1 == 0 {
            0
        } else {
            rng.random_range(p.recp_per_room.0..=p.recp_per_room.1)
        };
        for _ in 0..n {
            let (class, fw_m, fd_m, fh_m) = FURNITURE[rng.random_range(0..FURNITURE.len())];
            let mut fw = ((fw_m / vs).round() as i32).max(1);
            let mut fd = ((fd_m / vs).round() as i32).max(1);
            if rng.random::<bool>() {
                std::mem::swap(&mut fw, &mut fd);
            }
            let k_top = ((fh_m / vs).round() as i32 - 1).clamp(0, dims.h - 1);
            // Keep a one-cell gap from room walls.
            let (lo_i, hi_i) = (room.i0 + 1, room.i1 - 1 - (fw - 1));
            let (lo_j, hi_j) = (room.j0 + 1, room.j1 - 1 - (fd - 1));
            if hi_i < lo_i || hi_j < lo_j {
                continue;
            }
            let mut placed = false;
            for _try in 0..6 {
                let i = rng.random_range(lo_i..=hi_i);
                let j = rng.random_range(lo_j..=hi_j);
                let b = VoxelBox::new((i, j, 0), (i + fw - 1, j + fd - 1, k_top));
                // Reject footprints touching existing furniture (one-cell
                // apron keeps walkable gaps around every piece).
                let apron = VoxelBox::new(
                    (b.min.0 - 1, b.min.1 - 1, 0),
                    (b.max.0 + 1, b.max.1 + 1, 0),
                );
                let clash = receptacles.iter().any(|r| {
                    !(apron.max.0 < r.bounds.min.0
                        || r.bounds.max.0 < apron.min.0
                        || apron.max.1 < r.bounds.min.1
                        || r.bounds.max.1 < apron.min.1)
                });
                if clash {
                    continue;
                }
                for v in b.voxels() {
                    gt.set_state(v, CellState::Occupied);
                }
                receptacles.push(Receptacle { class: class.into(), bounds: b });
                placed = true;
                break;
            }
            let _ = placed;
        }
    }
    // Degenerate configs (no furniture) still need one surface for the
    // goal: drop a low floor pad in a random room.
    if receptacles.is_empty() {
        let room = rooms[rng.random_range(0..rooms.len())];
        let i = rng.random_range(room.i0 + 1..=(room.i1 - 2).max(room.i0 + 1));
        let j = rng.random_range(room.j0 + 1..=(room.j1 - 2).max(room.j0 + 1));
        let b = VoxelBox::new((i, j, 0), (i + 1, j + 1, 0));
        for v in b.voxels() {
            gt.set_state(v, CellState::Occupied);
        }
        receptacles.push(Receptacle { class: "pad".into(), bounds: b });
    }

    // Goal instance on a receptacle with headroom.
    let goal_cells = ((0.2 / vs).round() as i32).max(1);
    let eligible: Vec<usize> = (0..receptacles.len())
        .filter(|&r| {
            let b = &receptacles[r].bounds;
            b.max.2 + goal_cells < dims.h
                && b.max.0 - b.min.0 + 1 >= goal_cells
                && b.max.1 - b.min.1 + 1 >= goal_cells
        })
        .collect();
    if eligible.is_empty() {
        return Err("no receptacle can hold the goal".into());
    }
    let host = eligible[rng.random_range(0..eligible.len())];
    let mut objects = Vec::new();
    {
        let rb = receptacles[host].bounds;
        let i = rng.random_range(rb.min.0..=rb.max.0 - (goal_cells - 1));
        let j = rng.random_range(rb.min.1..=rb.max.1 - (goal_cells - 1));
        let b = VoxelBox::new(
            (i, j, rb.max.2 + 1),
            (i + goal_cells - 1, j + goal_cells - 1, rb.max.2 + goal_cells),
        );
        for v in b.voxels() {
            gt.set_state(v, CellState::Occupied);
        }
        objects.push(SceneObject { class: p.goal_class.clone(), bounds: b, receptacle: Some(host) });
    }

    // Distractors on other receptacles (best effort).
    for d in 0..p.n_distractors {
        if p.distractor_classes.is_empty() || eligible.is_empty() {
            break;
        }
        let r = eligible[rng.random_range(0..eligible.len())];
        let rb = receptacles[r].bounds;
        let class = &p.distractor_classes[(d as usize) % p.distractor_classes.len()];
        let mut ok = false;
        for _try in 0..5 {
            let i = rng.random_range(rb.min.0..=rb.max.0 - (goal_cells - 1));
            let j = rng.random_range(rb.min.1..=rb.max.1 - (goal_cells - 1));
            let b = VoxelBox::new(
                (i, j, rb.max.2 + 1),
                (i + goal_cells - 1, j + goal_cells - 1, rb.max.2 + goal_cells),
            );
            let clash = objects.iter().any(|o: &SceneObject| {
                !(b.max.0 < o.bounds.min.0
                    || o.bounds.max.0 < b.min.0
                    || b.max.1 < o.bounds.min.1
                    || o.bounds.max.1 < b.min.1
                    || b.max.2 < o.bounds.min.2
                    || o.bounds.max.2 < b.min.2)
            });
            if clash {
                continue;
            }
            for v in b.voxels() {
                gt.set_state(v, CellState::Occupied);
            }
            objects.push(SceneObject { class: class.clone(), bounds: b, receptacle: Some(r) });
            ok = true;
            break;
        }
        let _ = ok;
    }

    // Navigable floor: columns free through the body height.
    let k_body = p.body_top_layer();
    let mut floor_mask = vec![false; dims.n_cells()];
    for j in 0..dims.l {
        'cell: for i in 0..dims.l {
            for k in 0..=k_body {
                if gt.state((i, j, k)) == CellState::Occupied {
                    continue 'cell;
                }
            }
            floor_mask[dims.cell_index((i, j))] = true;
        }
    }

    let scene = Scene { dims, gt, receptacles, objects, floor_mask, seed };

    // Connectivity: a disc-clearance agent must be able to approach the
    // goal from a substantial share of the clearance-passable space.
    let blocked: Vec<bool> = scene.floor_mask.iter().map(|&b| !b).collect();
    let inflated = inflate_obstacles(&dims, &blocked, p.agent_radius_m);
    let targets = goal_approach_cells(&scene, &p.goal_class, &inflated, 1.0);
    if targets.is_empty() {
        return Err("goal has no clearance-passable approach".into());
    }
    let dist = distance_field(&dims, |c| !inflated[c], &targets);
    let passable_total = inflated.iter().filter(|&&b| !b).count();
    let reachable = dist.iter().filter(|d| d.is_finite()).count();
    if passable_total == 0 || (reachable as f64) < 0.5 * passable_total as f64 {
        return Err(format!(
            "goal reaches only {reachable} of {passable_total} passable cells"
        ));
    }
    Ok(scene)
}

fn split_region(
    r: Room,
    depth: u32,
    min_room: i32,
    door: i32,
    p_stop: f64,
    rng: &mut ChaCha8Rng,
    gt: &mut OccupancyMap,
    rooms: &mut Vec<Room>,
) {
    let can_x = r.width() >= 2 * min_room + 1;
    let can_y = r.height() >= 2 * min_room + 1;
    let stop_early = depth > 0 && rng.random::<f64>() < p_stop;
    if (!can_x && !can_y) || stop_early {
        rooms.push(r);
        return;
    }
    let split_x = if can_x && can_y {
        if r.width() != r.height() {
            r.width() > r.height()
        } else {
            rng.random::<bool>()
        }
    } else {
        can_x
    };
    let h = gt.dims().h;
    if split_x {
        let c = rng.random_range(r.i0 + min_room..=r.i1 - min_room);
        let door_len = door.min(r.height());
        let dj = rng.random_range(r.j0..=r.j1 - door_len + 1);
        for j in r.j0..=r.j1 {
            if j >= dj && j < dj + door_len {
                continue;
            }
            for k in 0..h {
                gt.set_state((c, j, k), CellState::Occupied);
            }
        }
        split_region(Room { i1: c - 1, ..r }, depth + 1, min_room, door, p_stop, rng, gt, rooms);
        split_region(Room { i0: c + 1, ..r }, depth + 1, min_room, door, p_stop, rng, gt, rooms);
    } else {
        let c = rng.random_range(r.j0 + min_room..=r.j1 - min_room);
        let door_len = door.min(r.width());
        let di = rng.random_range(r.i0..=r.i1 - door_len + 1);
        for i in r.i0..=r.i1 {
            if i >= di && i < di + door_len {
                continue;
            }
            for k in 0..h {
                gt.set_state((i, c, k), CellState::Occupied);
            }
        }
        split_region(Room { j1: c - 1, ..r }, depth + 1, min_room, door, p_stop, rng, gt, rooms);
        split_region(Room { j0: c + 1, ..r }, depth + 1, min_room, door, p_stop, rng, gt, rooms);
    }
}

/// Clearance-passable cells whose center lies within `reach` meters
/// (horizontally) of some goal voxel center.
pub fn goal_approach_cells(
    scene: &Scene,
    goal_class: &str,
    inflated: &[bool],
    reach: f64,
) -> Vec<Cell> {
    let dims = scene.dims;
    let goals = scene.goal_voxels(goal_class);
    let mut out = Vec::new();
    let r_cells = (reach / dims.voxel_size).ceil() as i32 + 1;
    let mut seen = vec![false; dims.n_cells()];
    for g in &goals {
        let gc = dims.voxel_center(*g);
        for dj in -r_cells..=r_cells {
            for di in -r_cells..=r_cells {
                let c = (g.0 + di, g.1 + dj);
                if !dims.cell_in_bounds(c) {
                    continue;
                }
                let idx = dims.cell_index(c);
                if seen[idx] || inflated[idx] {
                    continue;
                }
                let cc = dims.cell_center(c);
                if ((cc[0] - gc[0]).powi(2) + (cc[1] - gc[1]).powi(2)).sqrt() <= reach {
                    seen[idx] = true;
                    out.push(c);
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Sample a start pose: a clearance-passable cell center from which the
/// goal is geodesically reachable, at least `min_dist_m` (horizontal,
/// straight-line) from every goal voxel, with a uniform random heading.
pub fn sample_start(
    scene: &Scene,
    goal_class: &str,
    agent_radius_m: f64,
    min_dist_m: f64,
    success_dist_m: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Pose> {
    let dims = scene.dims;
    let blocked: Vec<bool> = scene.floor_mask.iter().map(|&b| !b).collect();
    let inflated = inflate_obstacles(&dims, &blocked, agent_radius_m);
    let targets = goal_approach_cells(scene, goal_class, &inflated, success_dist_m);
    if targets.is_empty() {
        return Err(Error::GenerationFailed {
            seed: scene.seed,
            reason: "goal unreachable within success distance".into(),
        });
    }
    let dist = distance_field(&dims, |c| !inflated[c], &targets);
    let goals = scene.goal_voxels(goal_class);
    let mut candidates: Vec<Cell> = Vec::new();
    for j in 0..dims.l {
        for i in 0..dims.l {
            let idx = dims.cell_index((i, j));
            if inflated[idx] || !dist[idx].is_finite() {
                continue;
            }
            let cc = dims.cell_center((i, j));
            let near = goals.iter().any(|g| {
                let gc = dims.voxel_center(*g);
                ((cc[0] - gc[0]).powi(2) + (cc[1] - gc[1]).powi(2)).sqrt() < min_dist_m
            });
            if near {
                continue;
            }
            debug_assert!(!disc_hits_blocked(&dims, &blocked, cc, agent_radius_m));
            candidates.push((i, j));
        }
    }
    if candidates.is_empty() {
        return Err(Error::GenerationFailed {
            seed: scene.seed,
            reason: "no valid start cell".into(),
        });
    }
    let c = candidates[rng.random_range(0..candidates.len())];
    let cc = dims.cell_center(c);
    let heading = rng.random::<f64>() * std::f64::consts::TAU;
    Ok(Pose { x: cc[0], y: cc[1], heading })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_generation_is_deterministic_per_seed() {
        let p = GenParams::default();
        let a = generate_scene(9, &p).unwrap();
        let b = generate_scene(9, &p).unwrap();
        assert_eq!(a.save_text(), b.save_text());
        let c = generate_scene(10, &p).unwrap();
        assert_ne!(a.save_text(), c.save_text());
    }

    #[test]
    fn test_generated_scenes_validate() {
        let p = GenParams::default();
        for seed in 0..10 {
            let scene = generate_scene(seed, &p).unwrap();
            scene.validate(p.body_top_layer()).unwrap();
            // Exactly one goal instance, linked to a receptacle.
            let goals = scene.instances_of(&p.goal_class);
            assert_eq!(goals.len(), 1, "seed {seed}");
            assert!(scene.objects[goals[0]].receptacle.is_some());
        }
    }

    #[test]
    fn test_floor_mask_matches_column_occupancy() {
        let p = GenParams::default();
        let scene = generate_scene(3, &p).unwrap();
        let k_body = p.body_top_layer();
        for j in 0..scene.dims.l {
            for i in 0..scene.dims.l {
                let mut clear = true;
                for k in 0..=k_body {
                    if scene.gt.state((i, j, k)) == CellState::Occupied {
                        clear = false;
                        break;
                    }
                }
                assert_eq!(scene.floor_mask[scene.dims.cell_index((i, j))], clear);
            }
        }
    }

    #[test]
    fn test_start_sampling_reaches_goal() {
        let p = GenParams::default();
        for seed in 0..6 {
            let scene = generate_scene(seed, &p).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 7 + 1);
            let pose =
                sample_start(&scene, &p.goal_class, p.agent_radius_m, 2.0, 1.0, &mut rng).unwrap();
            // On the floor and clear of obstacles.
            let cell = scene.dims.cell_of_point(pose.x, pose.y).unwrap();
            assert!(scene.floor_mask[scene.dims.cell_index(cell)]);
            let blocked: Vec<bool> = scene.floor_mask.iter().map(|&b| !b).collect();
            assert!(!disc_hits_blocked(
                &scene.dims,
                &blocked,
                [pose.x, pose.y],
                p.agent_radius_m
            ));
            // Far enough from the goal.
            for g in scene.goal_voxels(&p.goal_class) {
                let gc = scene.dims.voxel_center(g);
                let d = ((pose.x - gc[0]).powi(2) + (pose.y - gc[1]).powi(2)).sqrt();
                assert!(d >= 2.0, "seed {seed}: start {d} m from goal");
            }
        }
    }

    #[test]
    fn test_single_room_no_furniture_config() {
        let p = GenParams {
            l: 48,
            min_room_m: 100.0, // never split
            recp_per_room: (0, 0),
            n_distractors: 0,
            ..GenParams::default()
        };
        let scene = generate_scene(5, &p).unwrap();
        scene.validate(p.body_top_layer()).unwrap();
        // One pad receptacle holding the goal, nothing else.
        assert_eq!(scene.receptacles.len(), 1);
        assert_eq!(scene.receptacles[0].class, "pad");
        assert_eq!(scene.objects.len(), 1);
        // No interior walls: occupied cells at body height are only the
        // border, the pad, and the goal box.
        let dims = scene.dims;
        for j in 2..dims.l - 2 {
            for i in 2..dims.l - 2 {
                let from_structure = scene.receptacles[0].bounds.contains((i, j, 0))
                    || scene.objects[0].bounds.footprint_within(&VoxelBox::new(
                        (i, j, 0),
                        (i, j, 0),
                    ));
                let occupied = scene.gt.state((i, j, 0)) == CellState::Occupied;
                if occupied && !from_structure {
                    // Goal box occupies layers above the pad only.
                    panic!("unexpected wall at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn test_goal_sits_on_its_receptacle() {
        let p = GenParams::default();
        for seed in 20..26 {
            let scene = generate_scene(seed, &p).unwrap();
            let gi = scene.instances_of(&p.goal_class)[0];
            let o = &scene.objects[gi];
            let r = &scene.receptacles[o.receptacle.unwrap()];
            assert_eq!(o.bounds.min.2, r.bounds.max.2 + 1);
            assert!(o.bounds.footprint_within(&r.bounds));
        }
    }
}
