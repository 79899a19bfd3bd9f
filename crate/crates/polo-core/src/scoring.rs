//! Candidate-view scoring: the coverage gain score and the probable-object
//! location ("polo") score in dense, sampled, and 2D-projected variants,
//! plus goal selection over dense score maps.
//!
//! The polo score of a candidate cell ζ splits the unknown voxels visible
//! from it at probability threshold δ:
//!
//! ```text
//! total(ζ) = (Σ_{p(v)<δ} f(v) + β · Σ_{p(v)≥δ} f(v)) · exp(−λ·d_ζ)
//! ```
//!
//! with `f(v) = p(v)/d(v,ζ)` by default (switchable to `f ≡ 1`, which turns
//! the all-below-threshold case into the plain coverage gain). `d_ζ` is the
//! geodesic path cost from the agent over known-free space — Euclidean
//! distance would reward cells just across a wall.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridDims, Pose};
use crate::pathing::free_space_distance_field;
use crate::visibility::{ColumnGrid, CountVisible, Sweep, SweepScratch, UnitSums, WeightedSums};
use crate::voxelmap::{CellState, OccupancyMap, ProbabilityMap};

/// Per-voxel contribution weight inside the polo sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProximityWeight {
    /// `p(v) / d(v, ζ)`, the distance-decayed default.
    #[default]
    InverseDistance,
    /// `1` per voxel regardless of probability or distance; with every
    /// probability below the threshold this makes polo coincide with the
    /// coverage gain.
    Unit,
}

/// Parameters shared by the scoring variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    /// Exploitation weight on the above-threshold sum (≥ 0).
    pub beta: f64,
    /// Probability threshold splitting exploration from exploitation; keep
    /// it strictly above the map prior or the exploration sum is empty by
    /// construction.
    pub delta: f64,
    /// Distance penalty per meter of geodesic path cost (≥ 0).
    pub lambda: f64,
    /// Visibility range in meters.
    pub range: f64,
    /// Camera height above the floor in meters; visibility is evaluated
    /// from the center of the voxel layer containing this height.
    pub camera_height: f64,
    pub weight: ProximityWeight,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            beta: 5.0,
            delta: 0.2,
            lambda: 0.2,
            range: 10.0,
            camera_height: 0.88,
            weight: ProximityWeight::InverseDistance,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParam(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParam(format!("delta must be in (0,1), got {}", self.delta)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParam(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.range > 0.0) {
            return Err(Error::InvalidParam(format!("range must be > 0, got {}", self.range)));
        }
        if !self.camera_height.is_finite() {
            return Err(Error::InvalidParam("camera_height must be finite".into()));
        }
        Ok(())
    }
}

/// A candidate configuration: a navigable cell plus its geodesic path cost
/// from the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub cell: Cell,
    pub d_zeta: f64,
}

impl Configuration {
    pub fn new(cell: Cell, d_zeta: f64) -> Result<Configuration> {
        if !d_zeta.is_finite() || d_zeta < 0.0 {
            return Err(Error::InvalidParam(format!(
                "d_zeta must be finite and >= 0, got {d_zeta}"
            )));
        }
        Ok(Configuration { cell, d_zeta })
    }
}

/// One polo evaluation split into its terms; the decomposition
/// `total = (explore + beta * exploit) * exp(-lambda * d_zeta)` holds
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoloBreakdown {
    pub explore: f64,
    pub exploit: f64,
    pub total: f64,
}

/// Dense per-cell score fields. Invalid cells (not known-free or not
/// reachable) carry `-1.0` in every channel — a sentinel distinct from the
/// legal score `0.0` — and `false` in `valid`.
#[derive(Debug, Clone)]
pub struct PoloMap {
    pub l: i32,
    pub voxel_size: f64,
    pub explore: Vec<f64>,
    pub exploit: Vec<f64>,
    pub total: Vec<f64>,
    pub dzeta: Vec<f64>,
    pub valid: Vec<bool>,
}

pub const INVALID_SCORE: f64 = -1.0;

impl PoloMap {
    fn new_invalid(l: i32, voxel_size: f64) -> PoloMap {
        let n = (l as usize) * (l as usize);
        PoloMap {
            l,
            voxel_size,
            explore: vec![INVALID_SCORE; n],
            exploit: vec![INVALID_SCORE; n],
            total: vec![INVALID_SCORE; n],
            dzeta: vec![INVALID_SCORE; n],
            valid: vec![false; n],
        }
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        (cell.1 * self.l + cell.0) as usize
    }

    /// Portable text dump (one header line, then one line per row with
    /// comma-separated `explore;exploit;total;dzeta` tuples, invalid cells
    /// as `x`), for external plotting.
    pub fn dump_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("polo-scoremap v1 l={} voxel_size={}\n", self.l, self.voxel_size));
        for j in 0..self.l {
            let mut row = Vec::with_capacity(self.l as usize);
            for i in 0..self.l {
                let c = self.index((i, j));
                if self.valid[c] {
                    row.push(format!(
                        "{:.9e};{:.9e};{:.9e};{:.9e}",
                        self.explore[c], self.exploit[c], self.total[c], self.dzeta[c]
                    ));
                } else {
                    row.push("x".to_string());
                }
            }
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Highest-total cell of a dense map; ties prefer the smaller path cost,
/// then lexicographically smaller `(i, j)`. Errors when no cell is valid.
pub fn select_goal(map: &PoloMap) -> Result<(Configuration, f64)> {
    let mut best: Option<(Cell, f64, f64)> = None;
    for j in 0..map.l {
        for i in 0..map.l {
            let c = map.index((i, j));
            if !map.valid[c] {
                continue;
            }
            let (score, d) = (map.total[c], map.dzeta[c]);
            let better = match &best {
                None => true,
                Some((bc, bs, bd)) => {
                    score > *bs
                        || (score == *bs && (d < *bd || (d == *bd && (i, j) < *bc)))
                }
            };
            if better {
                best = Some(((i, j), score, d));
            }
        }
    }
    match best {
        Some((cell, score, d)) => Ok((Configuration { cell, d_zeta: d }, score)),
        None => Err(Error::Trapped),
    }
}

// --- shared evaluation plumbing ----------------------------------------------

fn check_pair(occ: &OccupancyMap, prob: &ProbabilityMap) -> Result<()> {
    if occ.dims() != prob.dims() {
        return Err(Error::DimsMismatch(format!(
            "occupancy {:?} vs probability {:?}",
            occ.dims(),
            prob.dims()
        )));
    }
    Ok(())
}

fn camera_layer_checked(dims: &GridDims, params: &ScoreParams) -> Result<i32> {
    params.validate()?;
    Ok(dims.layer_of_height(params.camera_height))
}

fn check_camera_voxel(occ: &OccupancyMap, cell: Cell, kc: i32) -> Result<()> {
    if !occ.dims().cell_in_bounds(cell) {
        return Err(Error::CellOutOfBounds(cell.0, cell.1));
    }
    if occ.state((cell.0, cell.1, kc)) == CellState::Occupied {
        return Err(Error::NonNavigable(cell.0, cell.1));
    }
    Ok(())
}

#[inline]
fn eval_sums(
    sweep: &Sweep,
    scratch: &mut SweepScratch,
    cell: Cell,
    weight: ProximityWeight,
) -> (f64, f64) {
    match weight {
        ProximityWeight::InverseDistance => {
            let mut acc = WeightedSums { explore: 0.0, exploit: 0.0 };
            sweep.run(cell, scratch, &mut acc);
            (acc.explore, acc.exploit)
        }
        ProximityWeight::Unit => {
            let mut acc = UnitSums { explore: 0.0, exploit: 0.0 };
            sweep.run(cell, scratch, &mut acc);
            (acc.explore, acc.exploit)
        }
    }
}

#[inline]
fn assemble(explore: f64, exploit: f64, beta: f64, lambda: f64, d: f64) -> f64 {
    (explore + beta * exploit) * (-lambda * d).exp()
}

// --- public scoring operations -------------------------------------------------

/// Coverage gain: the number of unknown voxels visible from ζ, decayed by
/// the geodesic path cost.
pub fn gain(occ: &OccupancyMap, zeta: &Configuration, params: &ScoreParams) -> Result<f64> {
    let kc = camera_layer_checked(occ.dims(), params)?;
    check_camera_voxel(occ, zeta.cell, kc)?;
    let cfg = Configuration::new(zeta.cell, zeta.d_zeta)?;
    let grid = ColumnGrid::build(occ);
    let sweep = Sweep::new(&grid, occ.dims().voxel_size, kc, params.range);
    let mut scratch = SweepScratch::default();
    let mut acc = CountVisible { count: 0 };
    sweep.run(cfg.cell, &mut scratch, &mut acc);
    Ok(acc.count as f64 * (-params.lambda * cfg.d_zeta).exp())
}

/// Polo score of a single configuration.
pub fn polo(
    occ: &OccupancyMap,
    prob: &ProbabilityMap,
    zeta: &Configuration,
    params: &ScoreParams,
) -> Result<PoloBreakdown> {
    check_pair(occ, prob)?;
    let kc = camera_layer_checked(occ.dims(), params)?;
    check_camera_voxel(occ, zeta.cell, kc)?;
    let cfg = Configuration::new(zeta.cell, zeta.d_zeta)?;
    let grid = ColumnGrid::build(occ);
    let sweep = Sweep::new(&grid, occ.dims().voxel_size, kc, params.range)
        .with_probabilities(prob.p_slice(), params.delta);
    let mut scratch = SweepScratch::default();
    let (explore, exploit) = eval_sums(&sweep, &mut scratch, cfg.cell, params.weight);
    Ok(PoloBreakdown {
        explore,
        exploit,
        total: assemble(explore, exploit, params.beta, params.lambda, cfg.d_zeta),
    })
}

/// Candidate cells for dense/sampled evaluation: known-free in the column
/// projection up to the camera layer, and geodesically reachable from the
/// agent. Returns (projected occupancy, distance field, camera layer).
fn candidate_fields(
    occ: &OccupancyMap,
    pose: &Pose,
    params: &ScoreParams,
) -> Result<(Vec<CellState>, Vec<f64>, i32)> {
    let dims = occ.dims();
    let kc = camera_layer_checked(dims, params)?;
    let agent = dims
        .cell_of_point(pose.x, pose.y)
        .ok_or(Error::OutOfGrid { x: pose.x, y: pose.y, z: 0.0 })?;
    let occ2d = occ.project_2d(kc);
    let dist = free_space_distance_field(dims, &occ2d, &[agent]);
    Ok((occ2d, dist, kc))
}

/// Dense polo evaluation at every valid cell. `parallel` switches on
/// data-parallel cell evaluation (cell results are independent and written
/// to disjoint slots, so the output is identical either way).
pub fn polo_dense(
    occ: &OccupancyMap,
    prob: &ProbabilityMap,
    pose: &Pose,
    params: &ScoreParams,
    parallel: bool,
) -> Result<PoloMap> {
    check_pair(occ, prob)?;
    let dims = *occ.dims();
    let (occ2d, dist, kc) = candidate_fields(occ, pose, params)?;
    let grid = ColumnGrid::build(occ);
    let sweep = Sweep::new(&grid, dims.voxel_size, kc, params.range)
        .with_probabilities(prob.p_slice(), params.delta);
    let mut map = PoloMap::new_invalid(dims.l, dims.voxel_size);
    let l = dims.l as usize;
    let (beta, lambda, weight) = (params.beta, params.lambda, params.weight);

    let eval_row = |j: usize,
                    scratch: &mut SweepScratch,
                    explore: &mut [f64],
                    exploit: &mut [f64],
                    total: &mut [f64],
                    dzeta: &mut [f64],
                    valid: &mut [bool]| {
        for i in 0..l {
            let c = j * l + i;
            let d = dist[c];
            if occ2d[c] != CellState::Free || !d.is_finite() {
                continue;
            }
            let (e, x) = eval_sums(&sweep, scratch, (i as i32, j as i32), weight);
            explore[i] = e;
            exploit[i] = x;
            total[i] = assemble(e, x, beta, lambda, d);
            dzeta[i] = d;
            valid[i] = true;
        }
    };

    if parallel {
        map.explore
            .par_chunks_mut(l)
            .zip(map.exploit.par_chunks_mut(l))
            .zip(map.total.par_chunks_mut(l))
            .zip(map.dzeta.par_chunks_mut(l))
            .zip(map.valid.par_chunks_mut(l))
            .enumerate()
            .for_each_init(SweepScratch::default, |scratch, (j, ((((e, x), t), dz), v))| {
                eval_row(j, scratch, e, x, t, dz, v);
            });
    } else {
        let mut scratch = SweepScratch::default();
        for j in 0..l {
            let (e, x, t, dz, v) = (
                &mut map.explore[j * l..(j + 1) * l],
                &mut map.exploit[j * l..(j + 1) * l],
                &mut map.total[j * l..(j + 1) * l],
                &mut map.dzeta[j * l..(j + 1) * l],
                &mut map.valid[j * l..(j + 1) * l],
            );
            eval_row(j, &mut scratch, e, x, t, dz, v);
        }
    }
    Ok(map)
}

/// Dense coverage-gain evaluation at every valid cell: the same candidate
/// set and distance decay as [`polo_dense`], but the score is the bare count
/// of visible unknown voxels (`explore` carries the count, `exploit` is 0).
pub fn gain_dense(
    occ: &OccupancyMap,
    pose: &Pose,
    params: &ScoreParams,
    parallel: bool,
) -> Result<PoloMap> {
    let dims = *occ.dims();
    let (occ2d, dist, kc) = candidate_fields(occ, pose, params)?;
    let grid = ColumnGrid::build(occ);
    let sweep = Sweep::new(&grid, dims.voxel_size, kc, params.range);
    let mut map = PoloMap::new_invalid(dims.l, dims.voxel_size);
    let l = dims.l as usize;
    let lambda = params.lambda;

    let eval_row = |j: usize,
                    scratch: &mut SweepScratch,
                    explore: &mut [f64],
                    exploit: &mut [f64],
                    total: &mut [f64],
                    dzeta: &mut [f64],
                    valid: &mut [bool]| {
        for i in 0..l {
            let c = j * l + i;
            let d = dist[c];
            if occ2d[c] != CellState::Free || !d.is_finite() {
                continue;
            }
            let mut acc = CountVisible { count: 0 };
            sweep.run((i as i32, j as i32), scratch, &mut acc);
            explore[i] = acc.count as f64;
            exploit[i] = 0.0;
            total[i] = acc.count as f64 * (-lambda * d).exp();
            dzeta[i] = d;
            valid[i] = true;
        }
    };

    if parallel {
        map.explore
            .par_chunks_mut(l)
            .zip(map.exploit.par_chunks_mut(l))
            .zip(map.total.par_chunks_mut(l))
            .zip(map.dzeta.par_chunks_mut(l))
            .zip(map.valid.par_chunks_mut(l))
            .enumerate()
            .for_each_init(SweepScratch::default, |scratch, (j, ((((e, x), t), dz), v))| {
                eval_row(j, scratch, e, x, t, dz, v);
            });
    } else {
        let mut scratch = SweepScratch::default();
        for j in 0..l {
            let (e, x, t, dz, v) = (
                &mut map.explore[j * l..(j + 1) * l],
                &mut map.exploit[j * l..(j + 1) * l],
                &mut map.total[j * l..(j + 1) * l],
                &mut map.dzeta[j * l..(j + 1) * l],
                &mut map.valid[j * l..(j + 1) * l],
            );
            eval_row(j, &mut scratch, e, x, t, dz, v);
        }
    }
    Ok(map)
}

/// Polo over `k` candidate cells sampled uniformly without replacement from
/// the valid set (all of them when fewer than `k` exist); returns the best
/// sampled configuration and its score. Deterministic for a fixed RNG
/// state.
pub fn polo_sampled<R: Rng>(
    occ: &OccupancyMap,
    prob: &ProbabilityMap,
    pose: &Pose,
    params: &ScoreParams,
    k: usize,
    rng: &mut R,
) -> Result<(Configuration, f64)> {
    check_pair(occ, prob)?;
    if k == 0 {
        return Err(Error::InvalidParam("sample count k must be >= 1".into()));
    }
    let dims = *occ.dims();
    let (occ2d, dist, kc) = candidate_fields(occ, pose, params)?;
    let mut candidates: Vec<u32> = (0..dims.n_cells() as u32)
        .filter(|&c| occ2d[c as usize] == CellState::Free && dist[c as usize].is_finite())
        .collect();
    if candidates.is_empty() {
        return Err(Error::Trapped);
    }
    // Partial Fisher-Yates: the first `take` entries become the sample.
    let take = k.min(candidates.len());
    for t in 0..take {
        let swap = rng.random_range(t..candidates.len());
        candidates.swap(t, swap);
    }
    let grid = ColumnGrid::build(occ);
    let sweep = Sweep::new(&grid, dims.voxel_size, kc, params.range)
        .with_probabilities(prob.p_slice(), params.delta);
    let mut scratch = SweepScratch::default();
    let l = dims.l;
    let mut best: Option<(Cell, f64, f64)> = None;
    for &c in &candidates[..take] {
        let cell = (c as i32 % l, c as i32 / l);
        let d = dist[c as usize];
        let (e, x) = eval_sums(&sweep, &mut scratch, cell, params.weight);
        let score = assemble(e, x, params.beta, params.lambda, d);
        let better = match &best {
            None => true,
            Some((bc, bs, bd)) => {
                score > *bs || (score == *bs && (d < *bd || (d == *bd && cell < *bc)))
            }
        };
        if better {
            best = Some((cell, score, d));
        }
    }
    let (cell, score, d) = best.unwrap();
    Ok((Configuration { cell, d_zeta: d }, score))
}

/// Polo over projected 2D maps: visibility runs over grid cells of a
/// synthesized single-layer map instead of voxels.
pub fn polo_2d(
    occ2d: &[CellState],
    prob2d: &[f64],
    dims: &GridDims,
    zeta: &Configuration,
    params: &ScoreParams,
) -> Result<f64> {
    params.validate()?;
    let n2 = dims.n_cells();
    if occ2d.len() != n2 || prob2d.len() != n2 {
        return Err(Error::DimsMismatch(format!(
            "projected maps must have {} cells, got {} / {}",
            n2,
            occ2d.len(),
            prob2d.len()
        )));
    }
    let flat = GridDims::new(dims.l, 1, dims.voxel_size);
    let mut occ = OccupancyMap::new(flat);
    for j in 0..dims.l {
        for i in 0..dims.l {
            occ.set_state((i, j, 0), occ2d[(j * dims.l + i) as usize]);
        }
    }
    let cfg = Configuration::new(zeta.cell, zeta.d_zeta)?;
    check_camera_voxel(&occ, cfg.cell, 0)?;
    let grid = ColumnGrid::build(&occ);
    let sweep =
        Sweep::new(&grid, flat.voxel_size, 0, params.range).with_probabilities(prob2d, params.delta);
    let mut scratch = SweepScratch::default();
    let (explore, exploit) = eval_sums(&sweep, &mut scratch, cfg.cell, params.weight);
    Ok(assemble(explore, exploit, params.beta, params.lambda, cfg.d_zeta))
}
