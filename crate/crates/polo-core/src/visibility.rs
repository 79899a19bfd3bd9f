//! Visibility: exact ray traversal, line of sight, and the panoramic
//! visible-set sweep that the scoring layer is built on.
//!
//! The panoramic sweep is the hot path of the whole crate (dense scoring
//! evaluates it from every candidate cell), so it avoids per-voxel 3D ray
//! walks. Instead it works column-wise:
//!
//! * Each `(i, j)` column packs its occupancy and unknown-ness into 16-bit
//!   masks (one bit per height layer), so a single 2D column walk resolves
//!   all height "lanes" from the camera to one target column at once.
//! * The 2D walk between the camera cell and a target column runs on the
//!   doubled half-integer lattice with pure integer arithmetic — identical
//!   results to walking each 3D segment with [`crate::ray::LatticeWalker`],
//!   which is what the tests verify, with zero tolerance.
//! * Columns that are occupied at every layer ("opaque") cast angular
//!   shadows. Per camera cell the sweep marks shadowed angle bins that are
//!   *provably* blocked (conservative corner intervals, shrunk by a margin)
//!   and skips targets whose center direction falls in a fully dark bin at
//!   greater distance. Culling only ever skips voxels the exact walk would
//!   also reject, so results are unaffected.
//!
//! The camera point for visibility is the center of the *camera voxel*: the
//! camera cell center horizontally, at the center of the height layer that
//! contains the configured camera height. Keeping the point on the voxel
//! lattice is what makes sight lines exactly decidable in integers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{angle_diff, Cell, Voxel};
use crate::ray::FloatWalker;
use crate::voxelmap::{CellState, OccupancyMap};

/// Voxels visible from a configuration, with center-to-center distances in
/// meters. Sorted by `(i, j, k)`.
#[derive(Clone, Debug, Default)]
pub struct VisibleSet {
    pub voxels: Vec<(Voxel, f64)>,
}

/// Squared range in cell units; comparisons against integer squared cell
/// distances use this one value everywhere so that range boundaries are
/// decided identically in every code path.
#[inline]
pub(crate) fn range_cells_sq(range: f64, voxel_size: f64) -> f64 {
    let t = range / voxel_size;
    t * t
}

// --- public ray / line-of-sight API -----------------------------------------

/// Walk a ray through the map. Returns the voxels strictly after the origin
/// voxel in increasing entry-distance order together with their entry
/// distances, stopping at the first `Occupied` voxel (included, `hit=true`)
/// or once the entry distance exceeds `max_range`.
pub fn traverse_ray(
    occ: &OccupancyMap,
    origin: [f64; 3],
    dir: [f64; 3],
    max_range: f64,
) -> Result<(Vec<(Voxel, f64)>, bool)> {
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidParam(format!("ray direction {dir:?} is not normalizable")));
    }
    let dir = [dir[0] / n, dir[1] / n, dir[2] / n];
    let mut w = FloatWalker::new(origin, dir, occ.dims())
        .ok_or(Error::OutOfGrid { x: origin[0], y: origin[1], z: origin[2] })?;
    let mut out = Vec::new();
    let mut hit = false;
    while w.advance() {
        let t = w.t_entry();
        if t > max_range {
            break;
        }
        let v = w.cur();
        out.push((v, t));
        if occ.state(v) == CellState::Occupied {
            hit = true;
            break;
        }
    }
    Ok((out, hit))
}

/// True iff no `Occupied` voxel strictly between the two world points blocks
/// the open segment. The endpoint voxels themselves never block. Evaluated
/// in a canonical endpoint order, so `line_of_sight(a, b) ==
/// line_of_sight(b, a)`.
pub fn line_of_sight(occ: &OccupancyMap, a: [f64; 3], b: [f64; 3]) -> bool {
    let swap = match a.partial_cmp(&b) {
        Some(std::cmp::Ordering::Greater) => true,
        _ => false,
    };
    let (p, q) = if swap { (b, a) } else { (a, b) };
    let dims = occ.dims();
    let (Some(pv), Some(qv)) = (dims.voxel_of_point(p), dims.voxel_of_point(q)) else {
        return false;
    };
    if pv == qv {
        return true;
    }
    let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(dist > 0.0) {
        return true;
    }
    let dir = [d[0] / dist, d[1] / dist, d[2] / dist];
    let Some(mut w) = FloatWalker::new(p, dir, dims) else {
        return false;
    };
    while w.advance() {
        let v = w.cur();
        if v == qv || w.t_entry() >= dist {
            return true;
        }
        if occ.state(v) == CellState::Occupied {
            return false;
        }
    }
    true
}

/// Exact center-to-center sight line between two voxels: true iff no
/// `Occupied` voxel strictly between their centers crosses the segment with
/// positive length. Endpoint voxels never block. Integer-exact.
pub fn los_between_voxels(occ: &OccupancyMap, a: Voxel, b: Voxel) -> bool {
    let mut w = crate::ray::LatticeWalker::new(a, b);
    while let Some(v) = w.next_voxel() {
        if v == b {
            return true;
        }
        if occ.state(v) == CellState::Occupied {
            return false;
        }
    }
    true
}

/// All `Unknown` voxels within `range` meters of the camera point above
/// `cell` that have an unobstructed center-to-center sight line from the
/// camera voxel. The camera voxel itself is excluded (distances are
/// strictly positive).
pub fn visible_set(
    occ: &OccupancyMap,
    cell: Cell,
    camera_height: f64,
    range: f64,
) -> Result<VisibleSet> {
    let dims = *occ.dims();
    if !dims.cell_in_bounds(cell) {
        return Err(Error::CellOutOfBounds(cell.0, cell.1));
    }
    let kc = dims.layer_of_height(camera_height);
    if occ.state((cell.0, cell.1, kc)) == CellState::Occupied {
        return Err(Error::NonNavigable(cell.0, cell.1));
    }
    let grid = ColumnGrid::build(occ);
    let sweep = Sweep::new(&grid, dims.voxel_size, kc, range);
    let mut scratch = SweepScratch::default();
    let mut out = Collect { voxels: Vec::new() };
    sweep.run(cell, &mut scratch, &mut out);
    out.voxels.sort_unstable_by_key(|(v, _)| *v);
    Ok(VisibleSet { voxels: out.voxels })
}

// --- column grid -------------------------------------------------------------

/// Column-packed view of an occupancy map: per (i, j) column, bit `k` of
/// `occ`/`unk` marks an occupied/unknown voxel at layer `k`.
pub(crate) struct ColumnGrid {
    pub(crate) l: i32,
    pub(crate) h: i32,
    pub(crate) occ: Vec<u16>,
    pub(crate) unk: Vec<u16>,
    /// Columns occupied at every layer, as (i, j).
    pub(crate) opaque: Vec<(i32, i32)>,
    /// Row-major bitset over columns with any unknown voxel; `wpr` words per
    /// row.
    pub(crate) unk_rows: Vec<u64>,
    pub(crate) wpr: usize,
    /// Summed-area table over the "column has any occupied voxel"
    /// indicator, (l+1)x(l+1); lets column walks skip solid-free corridors.
    sat: Vec<u32>,
}

impl ColumnGrid {
    pub(crate) fn build(map: &OccupancyMap) -> ColumnGrid {
        let dims = map.dims();
        let l = dims.l;
        let h = dims.h;
        let n2 = dims.n_cells();
        let mut occ = vec![0u16; n2];
        let mut unk = vec![0u16; n2];
        let states = map.states();
        for k in 0..h as usize {
            let bit = 1u16 << k;
            let layer = &states[k * n2..(k + 1) * n2];
            for (c, s) in layer.iter().enumerate() {
                match s {
                    CellState::Occupied => occ[c] |= bit,
                    CellState::Unknown => unk[c] |= bit,
                    CellState::Free => {}
                }
            }
        }
        let full = full_mask(h);
        let mut opaque = Vec::new();
        let wpr = (l as usize + 63) / 64;
        let mut unk_rows = vec![0u64; wpr * l as usize];
        let lu = l as usize;
        let mut sat = vec![0u32; (lu + 1) * (lu + 1)];
        for j in 0..l {
            let mut row_sum = 0u32;
            for i in 0..l {
                let c = (j * l + i) as usize;
                if occ[c] == full {
                    opaque.push((i, j));
                }
                if occ[c] != 0 {
                    row_sum += 1;
                }
                if unk[c] != 0 {
                    unk_rows[j as usize * wpr + (i as usize) / 64] |= 1u64 << (i % 64);
                }
                sat[(j as usize + 1) * (lu + 1) + i as usize + 1] =
                    sat[j as usize * (lu + 1) + i as usize + 1] + row_sum;
            }
        }
        ColumnGrid { l, h, occ, unk, opaque, unk_rows, wpr, sat }
    }

    /// Any column with occupied voxels in the inclusive cell rectangle?
    #[inline]
    fn rect_has_solid(&self, i0: i32, i1: i32, j0: i32, j1: i32) -> bool {
        let w = self.l as usize + 1;
        let (i0, i1, j0, j1) = (i0 as usize, i1 as usize + 1, j0 as usize, j1 as usize + 1);
        self.sat[j1 * w + i1] + self.sat[j0 * w + i0]
            > self.sat[j0 * w + i1] + self.sat[j1 * w + i0]
    }
}

#[inline]
fn full_mask(h: i32) -> u16 {
    (((1u32 << h) - 1) & 0xffff) as u16
}

// --- angular bin table --------------------------------------------------------

/// Precomputed angle-bin lookup for integer cell offsets, shared across
/// sweeps with the same radius (global cache).
struct BinTable {
    rc: i32,
    nbins: usize,
    bins: Vec<u16>,
}

impl BinTable {
    fn build(rc: i32, nbins: usize) -> BinTable {
        let side = (2 * rc + 1) as usize;
        let mut bins = vec![0u16; side * side];
        let scale = nbins as f64 / std::f64::consts::TAU;
        for dj in -rc..=rc {
            for di in -rc..=rc {
                let phi = (dj as f64).atan2(di as f64);
                let u = (phi + std::f64::consts::PI) * scale;
                let b = (u.floor() as i64).clamp(0, nbins as i64 - 1) as u16;
                bins[((dj + rc) as usize) * side + (di + rc) as usize] = b;
            }
        }
        BinTable { rc, nbins, bins }
    }

    #[inline]
    fn bin_of(&self, di: i32, dj: i32) -> usize {
        debug_assert!(di.abs() <= self.rc && dj.abs() <= self.rc);
        let side = (2 * self.rc + 1) as usize;
        self.bins[((dj + self.rc) as usize) * side + (di + self.rc) as usize] as usize
    }
}

fn bin_table(rc: i32, nbins: usize) -> Arc<BinTable> {
    static CACHE: OnceLock<Mutex<HashMap<(i32, usize), Arc<BinTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard.entry((rc, nbins)).or_insert_with(|| Arc::new(BinTable::build(rc, nbins))).clone()
}

// --- sweep kernel -------------------------------------------------------------

/// Per-thread reusable buffers for the sweep (shadow bins and wall sorting).
#[derive(Default)]
pub(crate) struct SweepScratch {
    epoch: u32,
    dark: Vec<i64>,
    dark_epoch: Vec<u32>,
    ring_count: Vec<u32>,
    walls: Vec<(i32, i32)>,
}

impl SweepScratch {
    fn begin(&mut self, nbins: usize, rings: usize) {
        if self.dark.len() != nbins {
            self.dark = vec![i64::MAX; nbins];
            self.dark_epoch = vec![0; nbins];
            self.epoch = 0;
        }
        if self.ring_count.len() < rings + 2 {
            self.ring_count.resize(rings + 2, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            // Extremely rare wraparound: invalidate everything explicitly.
            self.dark_epoch.fill(0);
            self.epoch = 1;
        }
    }
}

/// Visitor over visible unknown voxels, one call per column that has
/// surviving sight lines (`survivors` holds the visible layer bits).
pub(crate) trait SweepVisit {
    fn visit_column(&mut self, sw: &Sweep, i: i32, j: i32, col: usize, survivors: u16, h2: i64);
}

pub(crate) struct Collect {
    pub(crate) voxels: Vec<(Voxel, f64)>,
}

impl SweepVisit for Collect {
    #[inline]
    fn visit_column(&mut self, sw: &Sweep, i: i32, j: i32, _col: usize, mut s: u16, h2: i64) {
        while s != 0 {
            let k = s.trailing_zeros() as i32;
            s &= s - 1;
            let d2 = h2 + sw.dzsq[k as usize];
            self.voxels.push(((i, j, k), (d2 as f64).sqrt() * sw.vs));
        }
    }
}

pub(crate) struct CountVisible {
    pub(crate) count: u64,
}

impl SweepVisit for CountVisible {
    #[inline]
    fn visit_column(&mut self, _sw: &Sweep, _i: i32, _j: i32, _col: usize, s: u16, _h2: i64) {
        self.count += u64::from(s.count_ones());
    }
}

/// Distance-weighted probability sums, split into the below-threshold
/// (explore) and above-threshold (exploit) parts. Requires the sweep to be
/// built with probabilities attached.
pub(crate) struct WeightedSums {
    pub(crate) explore: f64,
    pub(crate) exploit: f64,
}

impl SweepVisit for WeightedSums {
    #[inline]
    fn visit_column(&mut self, sw: &Sweep, _i: i32, _j: i32, col: usize, mut s: u16, h2: i64) {
        let h = sw.grid.h as usize;
        let pcol = &sw.pcm[col * h..col * h + h];
        let hot = sw.hot[col];
        while s != 0 {
            let k = s.trailing_zeros() as usize;
            s &= s - 1;
            let d2 = (h2 + sw.dzsq[k]) as usize;
            let f = pcol[k] * sw.inv_dist[d2];
            if hot >> k & 1 == 1 {
                self.exploit += f;
            } else {
                self.explore += f;
            }
        }
    }
}

/// Per-voxel unit weights split by the probability threshold (the
/// distance-free weighting variant).
pub(crate) struct UnitSums {
    pub(crate) explore: f64,
    pub(crate) exploit: f64,
}

impl SweepVisit for UnitSums {
    #[inline]
    fn visit_column(&mut self, sw: &Sweep, _i: i32, _j: i32, col: usize, s: u16, _h2: i64) {
        let hot = (s & sw.hot[col]).count_ones();
        self.exploit += f64::from(hot);
        self.explore += f64::from(s.count_ones() - hot);
    }
}

/// Panoramic visible-set sweep from camera cells at one fixed camera layer.
pub(crate) struct Sweep<'a> {
    grid: &'a ColumnGrid,
    vs: f64,
    kc: i32,
    /// Squared range in cell units (may be +inf).
    r2c: f64,
    /// Conservative integer radius in cells (capped at the grid diameter).
    rc: i32,
    full: u16,
    /// Largest dz^2 over all layers relative to the camera layer.
    maxdz2: i64,
    /// dz^2 per layer.
    dzsq: [i64; 16],
    bins: Arc<BinTable>,
    /// Per-column mask of unknown voxels with probability >= threshold.
    hot: Vec<u16>,
    /// Column-major probability copy: `pcm[col*h + k]`.
    pcm: Vec<f64>,
    /// 1 / (sqrt(d2) * vs) for every in-range integer squared cell
    /// distance.
    inv_dist: Vec<f64>,
}

impl<'a> Sweep<'a> {
    pub(crate) fn new(grid: &'a ColumnGrid, vs: f64, camera_layer: i32, range: f64) -> Sweep<'a> {
        let r2c = range_cells_sq(range, vs);
        let max_rc = 2 * grid.l;
        let rc = if r2c.is_finite() {
            ((r2c.sqrt().ceil() as i64).clamp(1, max_rc as i64)) as i32
        } else {
            max_rc
        };
        let nbins = ((4 * grid.l) as usize).next_power_of_two().clamp(256, 2048);
        let kc = camera_layer;
        let mut dzsq = [0i64; 16];
        let mut maxdz2 = 0i64;
        for (k, d) in dzsq.iter_mut().enumerate() {
            let dz = k as i64 - kc as i64;
            *d = dz * dz;
            if k < grid.h as usize {
                maxdz2 = maxdz2.max(*d);
            }
        }
        Sweep {
            grid,
            vs,
            kc,
            r2c,
            rc,
            full: full_mask(grid.h),
            maxdz2,
            dzsq,
            bins: bin_table(rc, nbins),
            hot: Vec::new(),
            pcm: Vec::new(),
            inv_dist: Vec::new(),
        }
    }

    /// Attach per-voxel probabilities (layer-major, the probability map's
    /// native layout): builds the hot masks for the `threshold` split, a
    /// column-major copy for cache-friendly lane reads, and the
    /// inverse-distance table. Required by the sum visitors.
    pub(crate) fn with_probabilities(mut self, probs: &[f64], threshold: f64) -> Sweep<'a> {
        let l = self.grid.l as usize;
        let h = self.grid.h as usize;
        let n2 = l * l;
        let mut hot = vec![0u16; n2];
        let mut pcm = vec![0.0f64; n2 * h];
        for k in 0..h {
            let bit = 1u16 << k;
            let layer = &probs[k * n2..(k + 1) * n2];
            for (c, p) in layer.iter().enumerate() {
                pcm[c * h + k] = *p;
                if *p >= threshold && self.grid.unk[c] & bit != 0 {
                    hot[c] |= bit;
                }
            }
        }
        self.hot = hot;
        self.pcm = pcm;
        let max_d2 = self.r2c.min(((2 * self.grid.l) as f64).powi(2) * 3.0 + 1.0) as usize;
        let mut inv = vec![0.0f64; max_d2 + 1];
        for (d2, e) in inv.iter_mut().enumerate().skip(1) {
            *e = 1.0 / ((d2 as f64).sqrt() * self.vs);
        }
        self.inv_dist = inv;
        self
    }

    /// Largest |dz| such that a voxel at horizontal squared distance `h2`
    /// and height offset dz is still in range; `-1` when no layer is.
    #[inline]
    fn lane_halfwidth(&self, h2: i64) -> i32 {
        if !self.r2c.is_finite() {
            return self.grid.h;
        }
        let rem = (self.r2c - h2 as f64).max(-1.0);
        let mut w = if rem < 0.0 { -1 } else { rem.sqrt() as i64 };
        // The estimate can be off by one either way near the boundary; the
        // authoritative predicate is the same integer-vs-r2c comparison used
        // per voxel.
        while ((h2 + (w + 1) * (w + 1)) as f64) <= self.r2c {
            w += 1;
        }
        while w >= 0 && ((h2 + w * w) as f64) > self.r2c {
            w -= 1;
        }
        w as i32
    }

    #[inline]
    fn lane_window(&self, h2: i64) -> u16 {
        // Fast path: every layer of the column is in range.
        if ((h2 + self.maxdz2) as f64) <= self.r2c {
            return self.full;
        }
        let w = self.lane_halfwidth(h2);
        if w < 0 {
            return 0;
        }
        let lo = (self.kc - w).max(0);
        let hi = (self.kc + w).min(self.grid.h - 1);
        if hi < lo {
            return 0;
        }
        (((1u32 << (hi + 1)) - (1u32 << lo)) & 0xffff) as u16
    }

    /// Build the shadow bins for this origin from opaque columns, nearest
    /// ring first.
    fn build_shadows(&self, o: Cell, scratch: &mut SweepScratch) {
        let nbins = self.bins.nbins;
        let rc = self.rc;
        scratch.walls.clear();
        scratch.ring_count[..(rc as usize + 2)].fill(0);
        // Counting sort the in-range opaque columns by Chebyshev ring so
        // near walls are inserted first (their shadows let later walls be
        // skipped cheaply).
        let mut kept: Vec<(i32, i32)> = Vec::with_capacity(self.grid.opaque.len().min(4096));
        for &(qi, qj) in &self.grid.opaque {
            let di = qi - o.0;
            let dj = qj - o.1;
            if di.abs() > rc || dj.abs() > rc {
                continue;
            }
            let h2 = (di as i64) * (di as i64) + (dj as i64) * (dj as i64);
            if (h2 as f64) > self.r2c {
                continue;
            }
            let ring = di.abs().max(dj.abs()) as usize;
            scratch.ring_count[ring] += 1;
            kept.push((di, dj));
        }
        let rings = rc as usize + 1;
        let mut start = 0u32;
        for r in 0..rings {
            let c = scratch.ring_count[r];
            scratch.ring_count[r] = start;
            start += c;
        }
        scratch.walls.resize(kept.len(), (0, 0));
        for (di, dj) in kept {
            let ring = di.abs().max(dj.abs()) as usize;
            let at = scratch.ring_count[ring] as usize;
            scratch.ring_count[ring] += 1;
            scratch.walls[at] = (di, dj);
        }

        let scale = nbins as f64 / std::f64::consts::TAU;
        let epoch = scratch.epoch;
        for idx in 0..scratch.walls.len() {
            let (di, dj) = scratch.walls[idx];
            let c4 = 4 * ((di as i64) * (di as i64) + (dj as i64) * (dj as i64));
            let b = self.bins.bin_of(di, dj);
            if scratch.dark_epoch[b] == epoch && scratch.dark[b] <= c4 {
                // The wall's own center is already behind a shadow; its
                // marginal shadow is not worth the trigonometry.
                continue;
            }
            // Subtended interval from the four cell corners, in doubled
            // coordinates relative to the camera center.
            let phic = (dj as f64).atan2(di as f64);
            let mut lo = 0.0f64;
            let mut hi = 0.0f64;
            let mut far2 = 0i64;
            for (cx, cy) in [
                (2 * di - 1, 2 * dj - 1),
                (2 * di - 1, 2 * dj + 1),
                (2 * di + 1, 2 * dj - 1),
                (2 * di + 1, 2 * dj + 1),
            ] {
                let a = (cy as f64).atan2(cx as f64);
                let d = angle_diff(a, phic);
                lo = lo.min(d);
                hi = hi.max(d);
                far2 = far2.max((cx as i64) * (cx as i64) + (cy as i64) * (cy as i64));
            }
            // Conservative margin: only bins strictly inside the interval
            // are marked, so tiny angle rounding can never over-cull.
            const MARGIN: f64 = 1e-9;
            let ua = (phic + lo + MARGIN + std::f64::consts::PI) * scale;
            let ub = (phic + hi - MARGIN + std::f64::consts::PI) * scale;
            let b0 = ua.floor() as i64 + 1;
            let b1 = (ub - 1.0).floor() as i64;
            debug_assert!(b1 - b0 < nbins as i64);
            for bb in b0..=b1 {
                let bi = bb.rem_euclid(nbins as i64) as usize;
                if scratch.dark_epoch[bi] != epoch {
                    scratch.dark_epoch[bi] = epoch;
                    scratch.dark[bi] = far2;
                } else if scratch.dark[bi] > far2 {
                    scratch.dark[bi] = far2;
                }
            }
        }
    }

    #[inline]
    fn culled(&self, scratch: &SweepScratch, di: i32, dj: i32, h2: i64) -> bool {
        let b = self.bins.bin_of(di, dj);
        scratch.dark_epoch[b] == scratch.epoch && scratch.dark[b] <= 4 * h2
    }

    /// Resolve all height lanes from the camera voxel to one target column
    /// with a single 2D column walk. `lanes` holds candidate layer bits and
    /// the survivors (unblocked sight lines) are returned. Exact: matches
    /// per-lane 3D lattice walks bit for bit.
    fn walk_lanes(&self, o: Cell, t: Cell, mut lanes: u16) -> u16 {
        // Nothing can block when no column in the walk's bounding rectangle
        // holds an occupied voxel at all.
        if !self.grid.rect_has_solid(o.0.min(t.0), o.0.max(t.0), o.1.min(t.1), o.1.max(t.1)) {
            return lanes;
        }
        let dxi = t.0 - o.0;
        let dyj = t.1 - o.1;
        let sx = dxi.signum();
        let sy = dyj.signum();
        let denx = dxi.unsigned_abs() as i64;
        let deny = dyj.unsigned_abs() as i64;
        let czd = (2 * self.kc + 1) as i64;
        let l = self.grid.l;
        let (mut ci, mut cj) = o;
        let (mut pn, mut pd) = (0i64, 1i64);
        let (mut mx, mut my) = (1i64, 1i64);
        let mut steps = 0u32;
        loop {
            let hx = mx <= denx;
            let hy = my <= deny;
            if !hx && !hy {
                break;
            }
            let (nn, nd, step_x, step_y);
            if hx && hy {
                let nx = 2 * mx - 1;
                let ny = 2 * my - 1;
                let lhs = nx * deny;
                let rhs = ny * denx;
                if lhs < rhs {
                    nn = nx;
                    nd = 2 * denx;
                    step_x = true;
                    step_y = false;
                } else if lhs > rhs {
                    nn = ny;
                    nd = 2 * deny;
                    step_x = false;
                    step_y = true;
                } else {
                    nn = nx;
                    nd = 2 * denx;
                    step_x = true;
                    step_y = true;
                }
            } else if hx {
                nn = 2 * mx - 1;
                nd = 2 * denx;
                step_x = true;
                step_y = false;
            } else {
                nn = 2 * my - 1;
                nd = 2 * deny;
                step_x = false;
                step_y = true;
            }
            let occm = self.grid.occ[(cj * l + ci) as usize];
            if occm != 0 {
                lanes = Self::block_chord(occm, lanes, self.kc, czd, pn, pd, nn, nd, false);
                if lanes == 0 {
                    return 0;
                }
            }
            if step_x {
                ci += sx;
                mx += 1;
            }
            if step_y {
                cj += sy;
                my += 1;
            }
            pn = nn;
            pd = nd;
            // Periodically try to clear the rest of the corridor in one
            // rectangle query (covers the current, unprocessed column).
            steps += 1;
            if steps & 7 == 0
                && !self.grid.rect_has_solid(
                    ci.min(t.0),
                    ci.max(t.0),
                    cj.min(t.1),
                    cj.max(t.1),
                )
            {
                return lanes;
            }
        }
        debug_assert!((ci, cj) == t);
        let occm = self.grid.occ[(t.1 * l + t.0) as usize];
        if occm != 0 {
            lanes = Self::block_chord(occm, lanes, self.kc, czd, pn, pd, 1, 1, true);
        }
        lanes
    }

    /// Clear every lane whose 3D segment crosses an occupied voxel of the
    /// current column between parameter fractions `pn/pd` and `nn/nd`.
    /// For the final (target) column each lane excludes its own target bit.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn block_chord(
        occm: u16,
        lanes: u16,
        kc: i32,
        czd: i64,
        pn: i64,
        pd: i64,
        nn: i64,
        nd: i64,
        exclude_target: bool,
    ) -> u16 {
        let mut out = lanes;
        let mut rem = lanes;
        while rem != 0 {
            let k = rem.trailing_zeros() as i32;
            rem &= rem - 1;
            let dzd = 2 * (k - kc) as i64;
            // Doubled z at the chord endpoints, as exact fractions.
            let na = czd * pd + dzd * pn; // over pd
            let nb = czd * nd + dzd * nn; // over nd
            let (m_lo, m_hi) = if dzd > 0 {
                (na / (2 * pd), (nb - 1) / (2 * nd))
            } else if dzd < 0 {
                (nb / (2 * nd), (na - 1) / (2 * pd))
            } else {
                (kc as i64, kc as i64)
            };
            debug_assert!(m_lo <= m_hi && m_lo >= 0 && m_hi < 16);
            let mut mask = (((1u32 << (m_hi + 1)) - (1u32 << m_lo)) & 0xffff) as u16;
            if exclude_target {
                mask &= !(1u16 << k);
            }
            if occm & mask != 0 {
                out &= !(1u16 << k);
            }
        }
        out
    }

    /// Run the panoramic sweep from one camera cell, visiting every unknown
    /// voxel in range with a clear sight line.
    pub(crate) fn run<V: SweepVisit>(&self, o: Cell, scratch: &mut SweepScratch, vis: &mut V) {
        let l = self.grid.l;
        debug_assert!(
            self.grid.occ[(o.1 * l + o.0) as usize] & (1u16 << self.kc) == 0,
            "camera voxel must not be occupied"
        );
        scratch.begin(self.bins.nbins, self.rc as usize);
        self.build_shadows(o, scratch);

        let kc = self.kc;
        let col0 = (o.1 * l + o.0) as usize;

        // The camera's own column: straight vertical sight lines.
        let mut lanes = self.grid.unk[col0] & self.lane_window(0) & !(1u16 << kc);
        let occ0 = self.grid.occ[col0];
        let mut vert = 0u16;
        while lanes != 0 {
            let k = lanes.trailing_zeros() as i32;
            lanes &= lanes - 1;
            let (lo, hi) = if k > kc { (kc + 1, k - 1) } else { (k + 1, kc - 1) };
            let between = if hi < lo {
                0
            } else {
                (((1u32 << (hi + 1)) - (1u32 << lo)) & 0xffff) as u16
            };
            if occ0 & between == 0 {
                vert |= 1u16 << k;
            }
        }
        if vert != 0 {
            vis.visit_column(self, o.0, o.1, col0, vert, 0);
        }

        // All other columns, enumerated from the row bitsets of columns
        // that contain unknown voxels.
        let (j0, j1, full_rows) = if self.r2c.is_finite() {
            let wj = self.r2c.sqrt() as i32 + 1;
            ((o.1 - wj).max(0), (o.1 + wj).min(l - 1), false)
        } else {
            (0, l - 1, true)
        };
        for j in j0..=j1 {
            let dj = j - o.1;
            let dj2 = (dj as i64) * (dj as i64);
            let (i_lo, i_hi) = if full_rows {
                (0, l - 1)
            } else {
                let rem = self.r2c - dj2 as f64;
                if rem < 0.0 {
                    continue;
                }
                let wi = rem.sqrt() as i32 + 1;
                ((o.0 - wi).max(0), (o.0 + wi).min(l - 1))
            };
            if i_hi < i_lo {
                continue;
            }
            let row = &self.grid.unk_rows[j as usize * self.grid.wpr..][..self.grid.wpr];
            let w0 = (i_lo / 64) as usize;
            let w1 = (i_hi / 64) as usize;
            for wq in w0..=w1 {
                let mut bits = row[wq];
                if wq == w0 {
                    bits &= !0u64 << (i_lo % 64);
                }
                if wq == w1 {
                    bits &= !0u64 >> (63 - (i_hi % 64));
                }
                while bits != 0 {
                    let i = (wq * 64) as i32 + bits.trailing_zeros() as i32;
                    bits &= bits - 1;
                    if i == o.0 && j == o.1 {
                        continue;
                    }
                    let di = i - o.0;
                    let h2 = (di as i64) * (di as i64) + dj2;
                    if (h2 as f64) > self.r2c {
                        continue;
                    }
                    if self.culled(scratch, di, dj, h2) {
                        continue;
                    }
                    let col = (j * l + i) as usize;
                    let lanes0 = self.grid.unk[col] & self.lane_window(h2);
                    if lanes0 == 0 {
                        continue;
                    }
                    let survivors = self.walk_lanes(o, (i, j), lanes0);
                    if survivors != 0 {
                        vis.visit_column(self, i, j, col, survivors, h2);
                    }
                }
            }
        }
    }
}
