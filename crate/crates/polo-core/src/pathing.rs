//! 2D path planning over projected occupancy: geodesic distance fields,
//! obstacle inflation, A* planning, and frontier extraction.
//!
//! All planning runs on the 2D column projection of the voxel map. Moves
//! are 8-connected; diagonal steps are allowed only when both adjacent
//! orthogonal cells are passable (no corner cutting).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::{Cell, GridDims};
use crate::voxelmap::CellState;

/// Max-heap entry ordered by smallest cost first.
#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    cell: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reverse for a min-heap; tie-break on the cell index so heap
        // behavior is fully deterministic.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// The 8 neighbor offsets: 4 orthogonal then 4 diagonal.
pub const NEIGHBORS8: [(i32, i32); 8] =
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Geodesic distance (meters) from any of `starts` to every passable cell,
/// `f64::INFINITY` where unreachable. Start cells are always expandable
/// even when not passable themselves (an agent may stand on a cell the map
/// has not confirmed as free yet).
pub fn distance_field<P: Fn(usize) -> bool>(
    dims: &GridDims,
    passable: P,
    starts: &[Cell],
) -> Vec<f64> {
    let l = dims.l;
    let n = dims.n_cells();
    let vs = dims.voxel_size;
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in starts {
        if !dims.cell_in_bounds(s) {
            continue;
        }
        let idx = dims.cell_index(s);
        if dist[idx] > 0.0 {
            dist[idx] = 0.0;
            heap.push(HeapEntry { cost: 0.0, cell: idx as u32 });
        }
    }
    let ok = |i: i32, j: i32, passable: &P| -> bool {
        i >= 0 && i < l && j >= 0 && j < l && passable((j * l + i) as usize)
    };
    while let Some(HeapEntry { cost, cell }) = heap.pop() {
        let idx = cell as usize;
        if cost > dist[idx] {
            continue;
        }
        let (i, j) = (idx as i32 % l, idx as i32 / l);
        for (n_ofs, &(di, dj)) in NEIGHBORS8.iter().enumerate() {
            let (ni, nj) = (i + di, j + dj);
            if !ok(ni, nj, &passable) {
                continue;
            }
            let diagonal = n_ofs >= 4;
            if diagonal && !(ok(i + di, j, &passable) && ok(i, j + dj, &passable)) {
                continue;
            }
            let step = if diagonal { SQRT2 * vs } else { vs };
            let nd = cost + step;
            let nidx = (nj * l + ni) as usize;
            if nd < dist[nidx] {
                dist[nidx] = nd;
                heap.push(HeapEntry { cost: nd, cell: nidx as u32 });
            }
        }
    }
    dist
}

/// Distance field over `Free` cells of a projected occupancy layer.
pub fn free_space_distance_field(
    dims: &GridDims,
    occ2d: &[CellState],
    starts: &[Cell],
) -> Vec<f64> {
    distance_field(dims, |c| occ2d[c] == CellState::Free, starts)
}

/// Distance from a point to the closed square footprint of a cell.
/// Zero inside the square.
#[inline]
pub fn point_cell_distance(dims: &GridDims, p: [f64; 2], cell: Cell) -> f64 {
    let vs = dims.voxel_size;
    let (x0, y0) = (cell.0 as f64 * vs, cell.1 as f64 * vs);
    let dx = (x0 - p[0]).max(p[0] - (x0 + vs)).max(0.0);
    let dy = (y0 - p[1]).max(p[1] - (y0 + vs)).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

/// Whether a disc of `radius` centered at `p` overlaps any blocked cell or
/// pokes outside the grid. This is the single collision predicate shared by
/// the simulator's movement check and obstacle inflation, so "the planner
/// says this center is safe" and "the body fits here" can never disagree.
pub fn disc_hits_blocked(dims: &GridDims, blocked: &[bool], p: [f64; 2], radius: f64) -> bool {
    let vs = dims.voxel_size;
    let r_cells = (radius / vs).ceil() as i32 + 1;
    let (ci, cj) = ((p[0] / vs).floor() as i32, (p[1] / vs).floor() as i32);
    for dj in -r_cells..=r_cells {
        for di in -r_cells..=r_cells {
            let (i, j) = (ci + di, cj + dj);
            if !dims.cell_in_bounds((i, j)) {
                // Outside the grid counts as solid; only matters if the
                // disc actually reaches past the boundary.
                let d = point_cell_distance(dims, p, (i, j));
                if d < radius {
                    return true;
                }
                continue;
            }
            if blocked[dims.cell_index((i, j))] && point_cell_distance(dims, p, (i, j)) < radius {
                return true;
            }
        }
    }
    false
}

/// Mark every cell whose center a disc of `radius` cannot occupy without
/// overlapping a blocked cell. The result is the planning-time "inflated"
/// obstacle mask: passable centers are exactly the collision-free ones.
pub fn inflate_obstacles(dims: &GridDims, blocked: &[bool], radius: f64) -> Vec<bool> {
    let vs = dims.voxel_size;
    // Offsets (di, dj) such that a blocked cell at that offset from a
    // center intersects the disc: distance from the center of cell (0,0)
    // to the square of cell (di, dj).
    let r_cells = (radius / vs).ceil() as i32 + 1;
    let mut offsets = Vec::new();
    for dj in -r_cells..=r_cells {
        for di in -r_cells..=r_cells {
            let dx = ((di.abs() as f64) - 0.5).max(0.0) * vs;
            let dy = ((dj.abs() as f64) - 0.5).max(0.0) * vs;
            if (dx * dx + dy * dy).sqrt() < radius {
                offsets.push((di, dj));
            }
        }
    }
    let l = dims.l;
    let mut out = vec![false; dims.n_cells()];
    for j in 0..l {
        for i in 0..l {
            if !blocked[(j * l + i) as usize] {
                continue;
            }
            for &(di, dj) in &offsets {
                let (ni, nj) = (i + di, j + dj);
                if ni >= 0 && ni < l && nj >= 0 && nj < l {
                    out[(nj * l + ni) as usize] = true;
                }
            }
        }
    }
    // Grid border: centers whose disc pokes outside.
    let margin = ((radius / vs) - 0.5).ceil().max(0.0) as i32;
    for j in 0..l {
        for i in 0..l {
            let near = i < margin || j < margin || i >= l - margin || j >= l - margin;
            if near {
                let c = dims.cell_center((i, j));
                let edge = c[0].min(c[1]).min(l as f64 * vs - c[0]).min(l as f64 * vs - c[1]);
                if edge < radius {
                    out[(j * l + i) as usize] = true;
                }
            }
        }
    }
    out
}

/// Per-cell A* traversal cost multiplier: `Unknown` cells cost extra so
/// plans prefer mapped space but may still commit through the frontier.
pub const UNKNOWN_COST_MULT: f64 = 1.5;

/// Shortest 8-connected path from `start` to `goal` over cells that are not
/// obstacle-inflated. Moves cost `vs` (straight) or `√2·vs` (diagonal),
/// scaled by [`UNKNOWN_COST_MULT`] when the destination cell is `Unknown`
/// in `occ2d`. Returns the cell sequence including both endpoints, or an
/// empty vector when no path exists.
///
/// Errors with [`Error::NonNavigable`] when `start` or `goal` sits inside
/// the inflated obstacle mask (callers treat that as "pick another goal").
pub fn plan_path(
    dims: &GridDims,
    occ2d: &[CellState],
    inflated: &[bool],
    start: Cell,
    goal: Cell,
) -> crate::error::Result<Vec<Cell>> {
    use crate::error::Error;
    let l = dims.l;
    let vs = dims.voxel_size;
    if !dims.cell_in_bounds(start) || inflated[dims.cell_index(start)] {
        return Err(Error::NonNavigable(start.0, start.1));
    }
    if !dims.cell_in_bounds(goal) || inflated[dims.cell_index(goal)] {
        return Err(Error::NonNavigable(goal.0, goal.1));
    }
    if start == goal {
        return Ok(vec![start]);
    }
    let n = dims.n_cells();
    let sidx = dims.cell_index(start);
    let gidx = dims.cell_index(goal);
    let octile = |idx: usize| -> f64 {
        let (i, j) = (idx as i32 % l, idx as i32 / l);
        let dx = (i - goal.0).abs() as f64;
        let dy = (j - goal.1).abs() as f64;
        let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
        (hi - lo + SQRT2 * lo) * vs
    };
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut heap = BinaryHeap::new();
    g[sidx] = 0.0;
    heap.push(HeapEntry { cost: octile(sidx), cell: sidx as u32 });
    let passable = |i: i32, j: i32| -> bool {
        i >= 0 && i < l && j >= 0 && j < l && !inflated[(j * l + i) as usize]
    };
    while let Some(HeapEntry { cost, cell }) = heap.pop() {
        let idx = cell as usize;
        if idx == gidx {
            break;
        }
        if cost > g[idx] + octile(idx) + 1e-12 {
            continue;
        }
        let (i, j) = (idx as i32 % l, idx as i32 / l);
        for (n_ofs, &(di, dj)) in NEIGHBORS8.iter().enumerate() {
            let (ni, nj) = (i + di, j + dj);
            if !passable(ni, nj) {
                continue;
            }
            let diagonal = n_ofs >= 4;
            if diagonal && !(passable(i + di, j) && passable(i, j + dj)) {
                continue;
            }
            let nidx = (nj * l + ni) as usize;
            let base = if diagonal { SQRT2 * vs } else { vs };
            let mult =
                if occ2d[nidx] == CellState::Unknown { UNKNOWN_COST_MULT } else { 1.0 };
            let nd = g[idx] + base * mult;
            if nd < g[nidx] {
                g[nidx] = nd;
                parent[nidx] = idx as u32;
                heap.push(HeapEntry { cost: nd + octile(nidx), cell: nidx as u32 });
            }
        }
    }
    if g[gidx].is_infinite() {
        return Ok(Vec::new());
    }
    let mut path = vec![goal];
    let mut cur = gidx;
    while cur != sidx {
        cur = parent[cur] as usize;
        path.push((cur as i32 % l, cur as i32 / l));
    }
    path.reverse();
    Ok(path)
}

/// Total metered cost of a planned path under the same cost model as
/// [`plan_path`] (useful for oracles and goal ranking).
pub fn path_cost(dims: &GridDims, occ2d: &[CellState], path: &[Cell]) -> f64 {
    let vs = dims.voxel_size;
    let mut total = 0.0;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let diagonal = a.0 != b.0 && a.1 != b.1;
        let base = if diagonal { SQRT2 * vs } else { vs };
        let mult = if occ2d[dims.cell_index(b)] == CellState::Unknown {
            UNKNOWN_COST_MULT
        } else {
            1.0
        };
        total += base * mult;
    }
    total
}

/// Frontier cells: `Free` cells with at least one `Unknown` 8-neighbor.
pub fn frontiers(dims: &GridDims, occ2d: &[CellState]) -> Vec<Cell> {
    let l = dims.l;
    let mut out = Vec::new();
    for j in 0..l {
        for i in 0..l {
            if occ2d[(j * l + i) as usize] != CellState::Free {
                continue;
            }
            let mut edge = false;
            for &(di, dj) in &NEIGHBORS8 {
                let (ni, nj) = (i + di, j + dj);
                if ni >= 0
                    && ni < l
                    && nj >= 0
                    && nj < l
                    && occ2d[(nj * l + ni) as usize] == CellState::Unknown
                {
                    edge = true;
                    break;
                }
            }
            if edge {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_distance_field_open_grid() {
        let dims = GridDims::new(5, 1, 1.0);
        let occ2d = vec![CellState::Free; 25];
        let d = free_space_distance_field(&dims, &occ2d, &[(0, 0)]);
        assert_eq!(d[dims.cell_index((0, 0))], 0.0);
        assert!((d[dims.cell_index((3, 0))] - 3.0).abs() < 1e-12);
        assert!((d[dims.cell_index((2, 2))] - 2.0 * SQRT2).abs() < 1e-12);
        // Octile mix: 4 right, 2 up = 2 diagonals + 2 straights.
        assert!((d[dims.cell_index((4, 2))] - (2.0 * SQRT2 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn test_distance_field_wall_and_unreachable() {
        let dims = GridDims::new(7, 1, 0.5);
        let mut occ2d = vec![CellState::Free; 49];
        for j in 0..6 {
            occ2d[dims.cell_index((3, j))] = CellState::Occupied;
        }
        let d = free_space_distance_field(&dims, &occ2d, &[(0, 3)]);
        // Must route around the wall's top gap at j=6.
        let direct = d[dims.cell_index((6, 3))];
        assert!(direct > 6.0 * 0.5, "went through the wall: {direct}");
        // Unknown cells are impassable.
        let mut occ2d2 = occ2d.clone();
        for j in 0..7 {
            occ2d2[dims.cell_index((3, j))] = CellState::Occupied;
        }
        let d2 = free_space_distance_field(&dims, &occ2d2, &[(0, 3)]);
        assert!(d2[dims.cell_index((6, 3))].is_infinite());
    }

    #[test]
    fn test_no_corner_cutting() {
        let dims = GridDims::new(3, 1, 1.0);
        let mut occ2d = vec![CellState::Free; 9];
        // Blocked orthogonals around the diagonal from (0,0) to (1,1).
        occ2d[dims.cell_index((1, 0))] = CellState::Occupied;
        occ2d[dims.cell_index((0, 1))] = CellState::Occupied;
        let d = free_space_distance_field(&dims, &occ2d, &[(0, 0)]);
        assert!(d[dims.cell_index((1, 1))].is_infinite());
    }

    #[test]
    fn test_start_on_non_free_cell_expands() {
        let dims = GridDims::new(3, 1, 1.0);
        let mut occ2d = vec![CellState::Free; 9];
        occ2d[dims.cell_index((0, 0))] = CellState::Unknown;
        let d = free_space_distance_field(&dims, &occ2d, &[(0, 0)]);
        assert_eq!(d[dims.cell_index((0, 0))], 0.0);
        assert!((d[dims.cell_index((1, 0))] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_inflation_matches_disc_predicate_at_every_center() {
        use rand::{Rng, SeedableRng};
        let dims = GridDims::new(24, 1, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let blocked: Vec<bool> = (0..dims.n_cells()).map(|_| rng.random::<f64>() < 0.15).collect();
            let radius = 0.05 + rng.random::<f64>() * 0.3;
            let inflated = inflate_obstacles(&dims, &blocked, radius);
            for j in 0..dims.l {
                for i in 0..dims.l {
                    let c = dims.cell_center((i, j));
                    assert_eq!(
                        inflated[dims.cell_index((i, j))],
                        disc_hits_blocked(&dims, &blocked, c, radius),
                        "cell ({i},{j}) radius {radius}"
                    );
                }
            }
        }
    }

    #[test]
    fn test_inflation_of_single_cell_is_a_disc() {
        let dims = GridDims::new(11, 1, 0.1);
        let mut blocked = vec![false; dims.n_cells()];
        blocked[dims.cell_index((5, 5))] = true;
        let inflated = inflate_obstacles(&dims, &blocked, 0.17);
        // Offsets whose square the 0.17 m disc reaches: (|d|−0.5)·0.1 per
        // axis; (2,0) → 0.15 < 0.17, (2,1) → 0.158 < 0.17, (2,2) → 0.212 ≥.
        // Count only the interior — the outer rings are blocked separately
        // by grid-boundary proximity.
        let mut count = 0;
        for j in 2..9 {
            for i in 2..9 {
                if inflated[dims.cell_index((i, j))] {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 21);
        assert!(inflated[dims.cell_index((7, 5))]);
        assert!(inflated[dims.cell_index((7, 6))]);
        assert!(!inflated[dims.cell_index((7, 7))]);
    }

    #[test]
    fn test_plan_path_basics() {
        let dims = GridDims::new(9, 1, 0.5);
        let occ2d = vec![CellState::Free; 81];
        let inflated = vec![false; 81];
        // Straight corridor.
        let p = plan_path(&dims, &occ2d, &inflated, (0, 4), (8, 4)).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p[0], (0, 4));
        assert_eq!(p[8], (8, 4));
        assert!((path_cost(&dims, &occ2d, &p) - 4.0).abs() < 1e-12);
        // Degenerate single-cell plan.
        assert_eq!(plan_path(&dims, &occ2d, &inflated, (3, 3), (3, 3)).unwrap(), vec![(3, 3)]);
        // Goal inside inflation → error.
        let mut inf2 = inflated.clone();
        inf2[dims.cell_index((8, 4))] = true;
        assert!(plan_path(&dims, &occ2d, &inf2, (0, 4), (8, 4)).is_err());
        // Sealed-off goal → empty path.
        let mut inf3 = inflated.clone();
        for j in 0..9 {
            inf3[dims.cell_index((6, j))] = true;
        }
        assert!(plan_path(&dims, &occ2d, &inf3, (0, 4), (8, 4)).unwrap().is_empty());
    }

    #[test]
    fn test_plan_path_prefers_known_space() {
        let dims = GridDims::new(11, 1, 1.0);
        let mut occ2d = vec![CellState::Unknown; 121];
        // A known-free detour row at j=0; straight line at j=2 is unknown.
        for i in 0..11 {
            occ2d[dims.cell_index((i, 0))] = CellState::Free;
        }
        occ2d[dims.cell_index((0, 2))] = CellState::Free;
        occ2d[dims.cell_index((10, 2))] = CellState::Free;
        let inflated = vec![false; 121];
        let p = plan_path(&dims, &occ2d, &inflated, (0, 2), (10, 2)).unwrap();
        // Direct unknown corridor costs 10·1.5 = 15; dropping to the free
        // row costs 2·√2·1.5 (two unknown-ish diagonals to enter/leave
        // via... ) — verify the plan routes through row 0.
        assert!(p.iter().any(|&(_, j)| j == 0), "plan ignored known space: {p:?}");
    }

    #[test]
    fn test_plan_path_cost_matches_dijkstra_oracle_on_random_mazes() {
        use rand::{Rng, SeedableRng};
        let dims = GridDims::new(32, 1, 0.25);
        let n = dims.n_cells();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..50 {
            let occ2d: Vec<CellState> = (0..n)
                .map(|_| {
                    let r: f64 = rng.random();
                    if r < 0.22 {
                        CellState::Occupied
                    } else if r < 0.45 {
                        CellState::Unknown
                    } else {
                        CellState::Free
                    }
                })
                .collect();
            let inflated: Vec<bool> = occ2d.iter().map(|&s| s == CellState::Occupied).collect();
            let open: Vec<Cell> = (0..n)
                .filter(|&c| !inflated[c])
                .map(|c| (c as i32 % dims.l, c as i32 / dims.l))
                .collect();
            if open.len() < 2 {
                continue;
            }
            let start = open[rng.random_range(0..open.len())];
            let goal = open[rng.random_range(0..open.len())];

            // Oracle: plain Dijkstra over the identical cost model.
            let mut dist = vec![f64::INFINITY; n];
            let mut heap = BinaryHeap::new();
            let sidx = dims.cell_index(start);
            dist[sidx] = 0.0;
            heap.push(HeapEntry { cost: 0.0, cell: sidx as u32 });
            let pass = |i: i32, j: i32| -> bool {
                i >= 0 && i < dims.l && j >= 0 && j < dims.l
                    && !inflated[(j * dims.l + i) as usize]
            };
            while let Some(HeapEntry { cost, cell }) = heap.pop() {
                let idx = cell as usize;
                if cost > dist[idx] {
                    continue;
                }
                let (i, j) = (idx as i32 % dims.l, idx as i32 / dims.l);
                for (k, &(di, dj)) in NEIGHBORS8.iter().enumerate() {
                    let (ni, nj) = (i + di, j + dj);
                    if !pass(ni, nj) {
                        continue;
                    }
                    if k >= 4 && !(pass(i + di, j) && pass(i, j + dj)) {
                        continue;
                    }
                    let nidx = (nj * dims.l + ni) as usize;
                    let base = if k >= 4 { SQRT2 * dims.voxel_size } else { dims.voxel_size };
                    let mult = if occ2d[nidx] == CellState::Unknown {
                        UNKNOWN_COST_MULT
                    } else {
                        1.0
                    };
                    let nd = cost + base * mult;
                    if nd < dist[nidx] {
                        dist[nidx] = nd;
                        heap.push(HeapEntry { cost: nd, cell: nidx as u32 });
                    }
                }
            }

            let plan = plan_path(&dims, &occ2d, &inflated, start, goal).unwrap();
            let gidx = dims.cell_index(goal);
            if plan.is_empty() {
                assert!(dist[gidx].is_infinite(), "trial {trial}: A* missed a path");
            } else {
                assert_eq!(plan[0], start);
                assert_eq!(*plan.last().unwrap(), goal);
                // Every consecutive pair adjacent.
                for w in plan.windows(2) {
                    assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
                }
                let cost = path_cost(&dims, &occ2d, &plan);
                assert!(
                    (cost - dist[gidx]).abs() < 1e-9,
                    "trial {trial}: A* cost {cost} vs oracle {}",
                    dist[gidx]
                );
            }
        }
    }

    #[test]
    fn test_frontier_extraction() {
        let dims = GridDims::new(5, 1, 1.0);
        let mut occ2d = vec![CellState::Unknown; 25];
        // Known-free 3×3 block in the corner.
        for j in 0..3 {
            for i in 0..3 {
                occ2d[dims.cell_index((i, j))] = CellState::Free;
            }
        }
        occ2d[dims.cell_index((1, 1))] = CellState::Occupied;
        let f = frontiers(&dims, &occ2d);
        // Free cells touching unknown: the L of cells at i==2 or j==2.
        let expect: Vec<Cell> =
            vec![(2, 0), (2, 1), (0, 2), (1, 2), (2, 2)];
        assert_eq!(f, expect);
    }
}
