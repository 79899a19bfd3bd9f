//! Voxel maps: 3D occupancy, 3D object-probability with Bayesian log-odds
//! fusion, 2D projections, egocentric crops, depth integration and snapshot
//! serialization.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CameraModel, Cell, DepthImage, GridDims, Pose, Voxel};
use crate::ray::FloatWalker;

/// Occupancy knowledge for one voxel.
#[repr(u8)]
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum CellState {
    #[default]
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl CellState {
    pub fn from_u8(b: u8) -> Option<CellState> {
        match b {
            0 => Some(CellState::Unknown),
            1 => Some(CellState::Free),
            2 => Some(CellState::Occupied),
            _ => None,
        }
    }
}

/// Natural-log odds of a probability.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Inverse of [`logit`].
#[inline]
pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Dense 3D occupancy map over a [`GridDims`] lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMap {
    dims: GridDims,
    states: Vec<CellState>,
}

/// Counters returned by [`OccupancyMap::integrate_depth`].
#[derive(Clone, Copy, Debug, Default)]
pub struct IntegrateStats {
    /// Voxels that left the `Unknown` state during this update.
    pub newly_known: u32,
    /// Columns (2D cells) whose first voxel became known during this
    /// update — the increment of mapped floor area.
    pub newly_cells: u32,
}

impl OccupancyMap {
    pub fn new(dims: GridDims) -> OccupancyMap {
        let n = dims.n_voxels();
        OccupancyMap { dims, states: vec![CellState::Unknown; n] }
    }

    #[inline]
    pub fn dims(&self) -> &GridDims {
        &self.dims
    }

    #[inline]
    pub fn states(&self) -> &[CellState] {
        &self.states
    }

    /// State of an in-bounds voxel. Panics on out-of-bounds coordinates;
    /// use [`OccupancyMap::get`] for fallible access.
    #[inline]
    pub fn state(&self, v: Voxel) -> CellState {
        self.states[self.dims.voxel_index(v)]
    }

    #[inline]
    pub fn get(&self, v: Voxel) -> Option<CellState> {
        if self.dims.voxel_in_bounds(v) {
            Some(self.state(v))
        } else {
            None
        }
    }

    #[inline]
    pub fn set_state(&mut self, v: Voxel, s: CellState) {
        let idx = self.dims.voxel_index(v);
        self.states[idx] = s;
    }

    /// Number of voxels whose state is not `Unknown`.
    pub fn known_voxels(&self) -> usize {
        self.states.iter().filter(|s| **s != CellState::Unknown).count()
    }

    /// Column-collapse onto the ground plane using layers `0..=k_max`:
    /// a column is `Occupied` if any such voxel is occupied, else `Free` if
    /// any is free, else `Unknown`.
    pub fn project_2d(&self, k_max: i32) -> Vec<CellState> {
        let l = self.dims.l as usize;
        let n2 = l * l;
        let mut out = vec![CellState::Unknown; n2];
        let k_top = k_max.min(self.dims.h - 1).max(0) as usize;
        for k in 0..=k_top {
            let layer = &self.states[k * n2..(k + 1) * n2];
            for (o, s) in out.iter_mut().zip(layer.iter()) {
                match s {
                    CellState::Occupied => *o = CellState::Occupied,
                    CellState::Free if *o == CellState::Unknown => *o = CellState::Free,
                    _ => {}
                }
            }
        }
        out
    }

    /// Fold a depth image into the map: voxels crossed by each valid ray
    /// before its return become `Free`, the returning voxel becomes
    /// `Occupied`, both limited to `r_map` meters from the camera. Occupied
    /// returns win over free marks within one update; across updates the
    /// latest observation wins. Depth value `0` means "no return" and
    /// touches nothing.
    pub fn integrate_depth(
        &mut self,
        pose: &Pose,
        cam: &CameraModel,
        depth: &DepthImage,
        r_map: f64,
    ) -> Result<IntegrateStats> {
        if depth.width != cam.width || depth.height != cam.height {
            return Err(Error::DimsMismatch(format!(
                "depth image {}x{} does not match camera {}x{}",
                depth.width, depth.height, cam.width, cam.height
            )));
        }
        let origin = cam.origin(pose);
        self.dims
            .cell_of_point(pose.x, pose.y)
            .ok_or(Error::OutOfGrid { x: pose.x, y: pose.y, z: cam.height_m })?;
        if origin[2] < 0.0 || origin[2] >= self.dims.h as f64 * self.dims.voxel_size {
            return Err(Error::OutOfGrid { x: pose.x, y: pose.y, z: origin[2] });
        }
        let dirs = cam.local_ray_dirs();
        let mut stats = IntegrateStats::default();
        let mut occupied_hits: Vec<u32> = Vec::new();
        for (pix, d_local) in dirs.iter().enumerate() {
            let d_pix = depth.data[pix];
            if !(d_pix > 0.0) || !d_pix.is_finite() {
                continue;
            }
            let dir = CameraModel::to_world(*d_local, pose.heading);
            let mut w = match FloatWalker::new(origin, dir, &self.dims) {
                Some(w) => w,
                None => return Err(Error::OutOfGrid { x: origin[0], y: origin[1], z: origin[2] }),
            };
            loop {
                // The current voxel contains the return point when the exit
                // parameter passes the measured depth (points exactly on a
                // voxel boundary belong to the voxel being entered).
                if w.t_exit() > d_pix {
                    if d_pix <= r_map {
                        let idx = self.dims.voxel_index(w.cur()) as u32;
                        occupied_hits.push(idx);
                    }
                    break;
                }
                if w.t_entry() > r_map {
                    break;
                }
                let idx = self.dims.voxel_index(w.cur());
                if self.states[idx] == CellState::Unknown {
                    stats.newly_known += 1;
                    if !self.column_known_elsewhere(idx) {
                        stats.newly_cells += 1;
                    }
                }
                self.states[idx] = CellState::Free;
                if !w.advance() {
                    break;
                }
            }
        }
        for idx in occupied_hits {
            if self.states[idx as usize] == CellState::Unknown {
                stats.newly_known += 1;
                if !self.column_known_elsewhere(idx as usize) {
                    stats.newly_cells += 1;
                }
            }
            self.states[idx as usize] = CellState::Occupied;
        }
        Ok(stats)
    }

    /// Whether any voxel of `idx`'s column other than `idx` itself is
    /// already known. Used to detect first-time column mapping.
    fn column_known_elsewhere(&self, idx: usize) -> bool {
        let n2 = (self.dims.l as usize) * (self.dims.l as usize);
        let col = idx % n2;
        let own_k = idx / n2;
        for k in 0..self.dims.h as usize {
            if k != own_k && self.states[col + k * n2] != CellState::Unknown {
                return true;
            }
        }
        false
    }
}

/// How one piece of voxel evidence enters the probability map.
///
/// `Detection` entries are direct per-frame evidence (a detector hit on the
/// voxel, or an observed miss) and accumulate Bayesianly: every repetition
/// shifts the voxel's log-odds again. `Context` entries express a standing
/// circumstance — "this voxel sits near detected furniture, so the target
/// is plausibly here" — which is true once and stays true; re-observing the
/// same furniture adds no new information. They therefore only *raise* the
/// voxel to the level a single such observation justifies and are inert
/// afterwards. Without the distinction, staring at a couch for a few frames
/// would compound the same contextual hint into near-certainty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evidence {
    /// Accumulating per-frame evidence (detector hit or miss).
    Detection,
    /// Idempotent standing plausibility (furniture proximity).
    Context,
}

/// One voxel of evidence in an egocentric observation: an integer offset
/// from the camera voxel (world-axis aligned) and the likelihood that the
/// target object occupies that voxel given the current frame.
#[derive(Clone, Copy, Debug)]
pub struct ObsEntry {
    pub offset: (i32, i32, i32),
    pub likelihood: f64,
    pub evidence: Evidence,
}

/// Egocentric evidence produced from one camera frame. Offsets are relative
/// to the camera voxel: the voxel containing the camera point
/// `(pose.x, pose.y, camera_height)`.
#[derive(Clone, Debug, Default)]
pub struct LocalObservation {
    pub camera_height: f64,
    pub entries: Vec<ObsEntry>,
}

/// Counters returned by [`ProbabilityMap::fuse_observation`].
#[derive(Clone, Debug, Default)]
pub struct FuseStats {
    pub applied: u32,
    /// Entries whose world voxel fell outside the grid.
    pub dropped: u32,
    /// World voxels whose posterior changed in this fuse, in entry order.
    pub updated: Vec<Voxel>,
}

/// Dense per-voxel object-presence probability. Two channels per voxel:
/// accumulated detection log-odds (Bayesian) and a latched context level
/// (idempotent, see [`Evidence`]); the exposed probability is the sigmoid
/// of whichever is higher. Keeping them separate means contextual
/// plausibility can never amplify genuine detections and repeated context
/// can never masquerade as mounting evidence.
#[derive(Clone, Debug)]
pub struct ProbabilityMap {
    dims: GridDims,
    prior: f64,
    prior_logodds: f64,
    logodds: Vec<f64>,
    /// Latched context log-odds; `NEG_INFINITY` = no context seen.
    context: Vec<f64>,
    probs: Vec<f64>,
    touched: Vec<bool>,
    touched_count: usize,
}

impl ProbabilityMap {
    pub fn new(dims: GridDims, prior: f64) -> Result<ProbabilityMap> {
        if !(prior > 0.0 && prior < 1.0) || !prior.is_finite() {
            return Err(Error::InvalidParam(format!("prior must be in (0,1), got {prior}")));
        }
        let n = dims.n_voxels();
        let l0 = logit(prior);
        Ok(ProbabilityMap {
            dims,
            prior,
            prior_logodds: l0,
            logodds: vec![l0; n],
            context: vec![f64::NEG_INFINITY; n],
            probs: vec![prior; n],
            touched: vec![false; n],
            touched_count: 0,
        })
    }

    /// Rebuild a map from raw log-odds (used by projections and snapshots).
    pub fn from_parts(
        dims: GridDims,
        prior: f64,
        logodds: Vec<f64>,
        touched: Vec<bool>,
    ) -> Result<ProbabilityMap> {
        if !(prior > 0.0 && prior < 1.0) || !prior.is_finite() {
            return Err(Error::InvalidParam(format!("prior must be in (0,1), got {prior}")));
        }
        let n = dims.n_voxels();
        if logodds.len() != n || touched.len() != n {
            return Err(Error::DimsMismatch(format!(
                "log-odds buffer {} / touched buffer {} for {} voxels",
                logodds.len(),
                touched.len(),
                n
            )));
        }
        let probs = logodds.iter().map(|l| sigmoid(*l)).collect();
        let touched_count = touched.iter().filter(|t| **t).count();
        Ok(ProbabilityMap {
            dims,
            prior,
            prior_logodds: logit(prior),
            logodds,
            context: vec![f64::NEG_INFINITY; n],
            probs,
            touched,
            touched_count,
        })
    }

    /// Replace the context channel wholesale (snapshot restore). Entries of
    /// `NEG_INFINITY` mean "no context"; finite entries are latched levels.
    pub fn set_context_logodds(&mut self, context: Vec<f64>) -> Result<()> {
        let n = self.dims.n_voxels();
        if context.len() != n {
            return Err(Error::DimsMismatch(format!(
                "context buffer {} for {} voxels",
                context.len(),
                n
            )));
        }
        self.context = context;
        for i in 0..n {
            self.probs[i] = sigmoid(self.logodds[i].max(self.context[i]));
        }
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> &GridDims {
        &self.dims
    }

    #[inline]
    pub fn prior(&self) -> f64 {
        self.prior
    }

    #[inline]
    pub fn p(&self, v: Voxel) -> f64 {
        self.probs[self.dims.voxel_index(v)]
    }

    #[inline]
    pub fn p_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Accumulated detection log-odds of a voxel (the Bayesian channel;
    /// context raises are reported by [`Self::context_at`], and the exposed
    /// probability is the sigmoid of the higher of the two).
    #[inline]
    pub fn logodds_at(&self, v: Voxel) -> f64 {
        self.logodds[self.dims.voxel_index(v)]
    }

    #[inline]
    pub fn logodds_slice(&self) -> &[f64] {
        &self.logodds
    }

    #[inline]
    pub fn is_touched(&self, v: Voxel) -> bool {
        self.touched[self.dims.voxel_index(v)]
    }

    #[inline]
    pub fn touched_slice(&self) -> &[bool] {
        &self.touched
    }

    /// Number of voxels that have received at least one piece of evidence.
    #[inline]
    pub fn touched_count(&self) -> usize {
        self.touched_count
    }

    #[inline]
    fn mark_touched(&mut self, idx: usize) {
        if !self.touched[idx] {
            self.touched[idx] = true;
            self.touched_count += 1;
        }
    }

    #[inline]
    fn bump(&mut self, idx: usize, likelihood: f64) {
        self.logodds[idx] += logit(likelihood) - self.prior_logodds;
        self.probs[idx] = sigmoid(self.logodds[idx].max(self.context[idx]));
        self.mark_touched(idx);
    }

    /// Latch a context level: the voxel becomes at least as probable as a
    /// single observation of `likelihood` from the prior would make it, and
    /// repeating the same raise is a no-op.
    #[inline]
    fn raise(&mut self, idx: usize, likelihood: f64) {
        let level = logit(likelihood);
        if level > self.context[idx] {
            self.context[idx] = level;
            self.probs[idx] = sigmoid(self.logodds[idx].max(level));
        }
        self.mark_touched(idx);
    }

    /// Apply a single piece of accumulating detection evidence directly to
    /// a world voxel.
    pub fn apply_evidence(&mut self, v: Voxel, likelihood: f64) -> Result<()> {
        self.check_entry(v, likelihood)?;
        let idx = self.dims.voxel_index(v);
        self.bump(idx, likelihood);
        Ok(())
    }

    /// Latch context plausibility directly on a world voxel (see
    /// [`Evidence::Context`]).
    pub fn apply_context(&mut self, v: Voxel, likelihood: f64) -> Result<()> {
        self.check_entry(v, likelihood)?;
        let idx = self.dims.voxel_index(v);
        self.raise(idx, likelihood);
        Ok(())
    }

    fn check_entry(&self, v: Voxel, likelihood: f64) -> Result<()> {
        if !(likelihood > 0.0 && likelihood < 1.0) || !likelihood.is_finite() {
            return Err(Error::InvalidLikelihood(likelihood));
        }
        if !self.dims.voxel_in_bounds(v) {
            return Err(Error::OutOfGrid {
                x: v.0 as f64 * self.dims.voxel_size,
                y: v.1 as f64 * self.dims.voxel_size,
                z: v.2 as f64 * self.dims.voxel_size,
            });
        }
        Ok(())
    }

    /// Fuse an egocentric observation taken from `pose`. Detection entries
    /// update the posterior log-odds of their world voxel by
    /// `logit(likelihood) - logit(prior)`; context entries latch a level
    /// instead (see [`Evidence`]). Entries falling outside the grid are
    /// counted and dropped. Detection fusion is associative and commutative
    /// up to floating-point rounding, so observation order does not matter;
    /// context raises are idempotent and order-independent among
    /// themselves.
    pub fn fuse_observation(&mut self, obs: &LocalObservation, pose: &Pose) -> Result<FuseStats> {
        let cell = self
            .dims
            .cell_of_point(pose.x, pose.y)
            .ok_or(Error::OutOfGrid { x: pose.x, y: pose.y, z: obs.camera_height })?;
        let ck = self.dims.layer_of_height(obs.camera_height);
        let mut stats = FuseStats::default();
        for e in &obs.entries {
            if !(e.likelihood > 0.0 && e.likelihood < 1.0) || !e.likelihood.is_finite() {
                return Err(Error::InvalidLikelihood(e.likelihood));
            }
            let v = (cell.0 + e.offset.0, cell.1 + e.offset.1, ck + e.offset.2);
            if !self.dims.voxel_in_bounds(v) {
                stats.dropped += 1;
                continue;
            }
            let idx = self.dims.voxel_index(v);
            match e.evidence {
                Evidence::Detection => self.bump(idx, e.likelihood),
                Evidence::Context => self.raise(idx, e.likelihood),
            }
            stats.applied += 1;
            stats.updated.push(v);
        }
        Ok(stats)
    }

    /// Latched context level of a voxel (`NEG_INFINITY` when none).
    #[inline]
    pub fn context_at(&self, v: Voxel) -> f64 {
        self.context[self.dims.voxel_index(v)]
    }

    #[inline]
    pub fn context_slice(&self) -> &[f64] {
        &self.context
    }

    /// Voxel with the highest posterior (ties broken by voxel index order).
    pub fn argmax(&self) -> (Voxel, f64) {
        let mut best = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > best_p {
                best_p = *p;
                best = i;
            }
        }
        (self.dims.voxel_of_index(best), best_p)
    }

    /// Per-column maximum posterior over all layers (row-major `l*l`).
    pub fn project_max_2d(&self) -> Vec<f64> {
        let l = self.dims.l as usize;
        let n2 = l * l;
        let mut out = vec![f64::NEG_INFINITY; n2];
        for k in 0..self.dims.h as usize {
            let layer = &self.probs[k * n2..(k + 1) * n2];
            for (o, p) in out.iter_mut().zip(layer.iter()) {
                if *p > *o {
                    *o = *p;
                }
            }
        }
        out
    }
}

/// Egocentric crop of the maps: an `n x n x h` window of states and
/// probability values centered on a cell. Values use `-1.0` as the sentinel
/// for "outside the grid or no evidence yet".
#[derive(Clone, Debug)]
pub struct EgoCrop {
    pub n: i32,
    pub h: i32,
    /// World cell of the window's `(0, 0)` corner.
    pub origin: Cell,
    /// Row-major `((k * n) + j) * n + i`, `Unknown` outside the grid.
    pub occ: Vec<CellState>,
    /// Same layout; `-1.0` sentinel, posterior probability otherwise.
    pub values: Vec<f64>,
}

/// Cut an `n x n` full-height window centered on `center` out of both maps,
/// padding beyond the grid border with `Unknown` / `-1.0`.
pub fn crop_egocentric(
    occ: &OccupancyMap,
    prob: &ProbabilityMap,
    center: Cell,
    n: i32,
) -> Result<EgoCrop> {
    if occ.dims() != prob.dims() {
        return Err(Error::DimsMismatch("occupancy and probability grids differ".into()));
    }
    if n <= 0 {
        return Err(Error::InvalidParam(format!("crop size must be positive, got {n}")));
    }
    let dims = occ.dims();
    let h = dims.h;
    let origin = (center.0 - n / 2, center.1 - n / 2);
    let size = (n as usize) * (n as usize) * (h as usize);
    let mut crop = EgoCrop {
        n,
        h,
        origin,
        occ: vec![CellState::Unknown; size],
        values: vec![-1.0; size],
    };
    for k in 0..h {
        for jj in 0..n {
            for ii in 0..n {
                let v = (origin.0 + ii, origin.1 + jj, k);
                if !dims.voxel_in_bounds(v) {
                    continue;
                }
                let out_idx = (((k * n) + jj) * n + ii) as usize;
                crop.occ[out_idx] = occ.state(v);
                if prob.is_touched(v) {
                    crop.values[out_idx] = prob.p(v);
                }
            }
        }
    }
    Ok(crop)
}

// --- snapshot serialization -------------------------------------------------

const SNAPSHOT_MAGIC: &[u8; 8] = b"POLOMAP2";

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::parse("snapshot", "unexpected end of file"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Serialize both maps into the binary snapshot format: a magic header,
/// grid parameters, run-length-encoded occupancy states, raw detection
/// log-odds, raw context levels, and a touched-voxel bitset. Floats
/// round-trip bit for bit.
pub fn save_snapshot<P: AsRef<Path>>(
    path: P,
    occ: &OccupancyMap,
    prob: &ProbabilityMap,
) -> Result<()> {
    if occ.dims() != prob.dims() {
        return Err(Error::DimsMismatch("occupancy and probability grids differ".into()));
    }
    let dims = occ.dims();
    let mut buf = Vec::with_capacity(dims.n_voxels() * 9 + 64);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&dims.l.to_le_bytes());
    buf.extend_from_slice(&dims.h.to_le_bytes());
    push_f64(&mut buf, dims.voxel_size);
    push_f64(&mut buf, prob.prior());

    // RLE over states.
    let mut runs: Vec<(u32, u8)> = Vec::new();
    for s in occ.states() {
        let b = *s as u8;
        match runs.last_mut() {
            Some((n, last)) if *last == b && *n < u32::MAX => *n += 1,
            _ => runs.push((1, b)),
        }
    }
    push_u32(&mut buf, runs.len() as u32);
    for (n, b) in &runs {
        push_u32(&mut buf, *n);
        buf.push(*b);
    }

    for l in prob.logodds_slice() {
        push_f64(&mut buf, *l);
    }
    for c in prob.context_slice() {
        push_f64(&mut buf, *c);
    }

    let mut bits = vec![0u8; (dims.n_voxels() + 7) / 8];
    for (i, t) in prob.touched_slice().iter().enumerate() {
        if *t {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    buf.extend_from_slice(&bits);

    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Load a snapshot written by [`save_snapshot`].
pub fn load_snapshot<P: AsRef<Path>>(path: P) -> Result<(OccupancyMap, ProbabilityMap)> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut c = Cursor { buf: &raw, at: 0 };
    if c.take(8)? != SNAPSHOT_MAGIC {
        return Err(Error::parse("snapshot", "bad magic"));
    }
    let l = c.i32()?;
    let h = c.i32()?;
    let vs = c.f64()?;
    if l <= 0 || h <= 0 || h > 16 || !(vs > 0.0) || !vs.is_finite() {
        return Err(Error::parse("snapshot", format!("bad grid header l={l} h={h} vs={vs}")));
    }
    let prior = c.f64()?;
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::parse("snapshot", format!("bad prior {prior}")));
    }
    let dims = GridDims::new(l, h, vs);
    let n = dims.n_voxels();

    let n_runs = c.u32()? as usize;
    let mut states = Vec::with_capacity(n);
    for _ in 0..n_runs {
        let count = c.u32()? as usize;
        let b = c.take(1)?[0];
        let s = CellState::from_u8(b)
            .ok_or_else(|| Error::parse("snapshot", format!("bad state byte {b}")))?;
        states.resize(states.len() + count, s);
        if states.len() > n {
            return Err(Error::parse("snapshot", "state runs exceed voxel count"));
        }
    }
    if states.len() != n {
        return Err(Error::parse(
            "snapshot",
            format!("state runs cover {} of {} voxels", states.len(), n),
        ));
    }

    let mut logodds = Vec::with_capacity(n);
    for _ in 0..n {
        logodds.push(c.f64()?);
    }
    let mut context = Vec::with_capacity(n);
    for _ in 0..n {
        context.push(c.f64()?);
    }
    let bits = c.take((n + 7) / 8)?;
    let touched: Vec<bool> = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
    if c.at != raw.len() {
        return Err(Error::parse("snapshot", "trailing bytes"));
    }

    let occ = OccupancyMap { dims, states };
    let mut prob = ProbabilityMap::from_parts(dims, prior, logodds, touched)?;
    prob.set_context_logodds(context)?;
    Ok((occ, prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn small_dims() -> GridDims {
        GridDims::new(16, 8, 0.25)
    }

    #[test]
    fn test_fusion_examples() {
        // (prior, evidence list, expected posterior)
        let cases: &[(f64, &[f64], f64)] = &[
            (0.5, &[0.5], 0.5),
            (0.5, &[0.8, 0.8], 16.0 / 17.0),
            (0.2, &[0.2, 0.8], 0.8),
            (0.01, &[], 0.01),
        ];
        for (prior, evs, want) in cases {
            let mut m = ProbabilityMap::new(small_dims(), *prior).unwrap();
            for e in *evs {
                m.apply_evidence((3, 3, 1), *e).unwrap();
            }
            assert_relative_eq!(m.p((3, 3, 1)), *want, max_relative = 1e-12);
            // Untouched voxels stay exactly at the prior.
            assert_eq!(m.p((0, 0, 0)), *prior);
            assert_eq!(m.logodds_at((0, 0, 0)), logit(*prior));
        }
    }

    #[test]
    fn test_fuse_translates_and_drops() {
        let dims = small_dims();
        let mut m = ProbabilityMap::new(dims, 0.01).unwrap();
        let pose = Pose::new(1.1, 1.1, 0.0); // cell (4, 4)
        let obs = LocalObservation {
            camera_height: 0.3, // layer 1
            entries: vec![
                ObsEntry { offset: (1, 0, 0), likelihood: 0.9, evidence: Evidence::Detection },
                // out of grid:
                ObsEntry { offset: (100, 0, 0), likelihood: 0.9, evidence: Evidence::Detection },
            ],
        };
        let stats = m.fuse_observation(&obs, &pose).unwrap();
        assert_eq!(stats.applied, 1);
        assert_eq!(stats.dropped, 1);
        assert_eq!(stats.updated, vec![(5, 4, 1)]);
        assert!(m.p((5, 4, 1)) > 0.01);
        assert!(m.is_touched((5, 4, 1)));
        assert_eq!(m.touched_count(), 1);
    }

    #[test]
    fn test_bad_likelihood_rejected() {
        let mut m = ProbabilityMap::new(small_dims(), 0.01).unwrap();
        for bad in [0.0, 1.0, -0.1, 1.1, f64::NAN] {
            assert!(m.apply_evidence((0, 0, 0), bad).is_err(), "{bad} accepted");
            assert!(m.apply_context((0, 0, 0), bad).is_err(), "context {bad} accepted");
        }
    }

    #[test]
    fn test_context_is_idempotent_and_bounded() {
        let v = (3, 3, 1);
        let mut m = ProbabilityMap::new(small_dims(), 0.01).unwrap();
        m.apply_context(v, 0.25).unwrap();
        assert_relative_eq!(m.p(v), 0.25, max_relative = 1e-12);
        // Restating the same circumstance adds nothing.
        for _ in 0..50 {
            m.apply_context(v, 0.25).unwrap();
        }
        assert_relative_eq!(m.p(v), 0.25, max_relative = 1e-12);
        // A weaker context never lowers; a stronger one raises.
        m.apply_context(v, 0.1).unwrap();
        assert_relative_eq!(m.p(v), 0.25, max_relative = 1e-12);
        m.apply_context(v, 0.3).unwrap();
        assert_relative_eq!(m.p(v), 0.3, max_relative = 1e-12);
        assert!(m.is_touched(v));
        // The detection channel is untouched by context.
        assert_relative_eq!(m.logodds_at(v), logit(0.01), max_relative = 1e-12);
    }

    #[test]
    fn test_context_does_not_amplify_detections() {
        let v = (3, 3, 1);
        let prior = 0.01;
        // Detection on a context-raised voxel…
        let mut with_ctx = ProbabilityMap::new(small_dims(), prior).unwrap();
        with_ctx.apply_context(v, 0.25).unwrap();
        with_ctx.apply_evidence(v, 0.7).unwrap();
        // …lands exactly where it would without the context.
        let mut without = ProbabilityMap::new(small_dims(), prior).unwrap();
        without.apply_evidence(v, 0.7).unwrap();
        assert_relative_eq!(with_ctx.p(v), without.p(v), max_relative = 1e-12);
        assert_relative_eq!(with_ctx.p(v), 0.7, max_relative = 1e-12);
    }

    #[test]
    fn test_context_floors_washed_out_detections() {
        let v = (3, 3, 1);
        let mut m = ProbabilityMap::new(small_dims(), 0.01).unwrap();
        m.apply_context(v, 0.3).unwrap();
        m.apply_evidence(v, 0.7).unwrap();
        assert_relative_eq!(m.p(v), 0.7, max_relative = 1e-12);
        // Misses wash the detection away, down to the standing context.
        for _ in 0..60 {
            m.apply_evidence(v, sigmoid(logit(0.01) + logit(0.3))).unwrap();
        }
        assert_relative_eq!(m.p(v), 0.3, max_relative = 1e-9);
    }

    proptest! {
        /// Fusing the same evidence in any order gives the same posterior.
        #[test]
        fn prop_fusion_order_invariant(
            evs in proptest::collection::vec(0.05f64..0.95, 1..24),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut a = ProbabilityMap::new(small_dims(), 0.1).unwrap();
            for e in &evs { a.apply_evidence((2, 2, 2), *e).unwrap(); }
            let mut shuffled = evs.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            let mut b = ProbabilityMap::new(small_dims(), 0.1).unwrap();
            for e in &shuffled { b.apply_evidence((2, 2, 2), *e).unwrap(); }
            let pa = a.p((2, 2, 2));
            let pb = b.p((2, 2, 2));
            prop_assert!((pa - pb).abs() <= 1e-9 * pa.abs().max(pb.abs()).max(1e-300));
        }

        /// Log-odds fusion equals the direct odds-product form.
        #[test]
        fn prop_fusion_matches_odds_product(
            prior in 0.02f64..0.9,
            evs in proptest::collection::vec(0.05f64..0.95, 0..16),
        ) {
            let mut m = ProbabilityMap::new(small_dims(), prior).unwrap();
            for e in &evs { m.apply_evidence((1, 1, 1), *e).unwrap(); }
            let mut odds = prior / (1.0 - prior);
            for e in &evs {
                odds *= (e / (1.0 - e)) / (prior / (1.0 - prior));
            }
            let direct = odds / (1.0 + odds);
            let fused = m.p((1, 1, 1));
            prop_assert!(
                (fused - direct).abs() <= 1e-9 * fused.abs().max(direct.abs()).max(1e-300),
                "fused={fused} direct={direct}"
            );
        }

        /// Any interleaving of detections and context raises lands on
        /// sigmoid(max(detection log-odds sum, strongest context)).
        #[test]
        fn prop_mixed_channels_match_closed_form(
            prior in 0.02f64..0.5,
            evs in proptest::collection::vec((0.05f64..0.95, proptest::bool::ANY), 1..16),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let v = (2, 2, 2);
            let mut shuffled = evs.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            let mut m = ProbabilityMap::new(small_dims(), prior).unwrap();
            for (e, is_ctx) in &shuffled {
                if *is_ctx { m.apply_context(v, *e).unwrap(); }
                else { m.apply_evidence(v, *e).unwrap(); }
            }
            let mut l_det = logit(prior);
            let mut l_ctx = f64::NEG_INFINITY;
            for (e, is_ctx) in &evs {
                if *is_ctx { l_ctx = l_ctx.max(logit(*e)); }
                else { l_det += logit(*e) - logit(prior); }
            }
            let direct = sigmoid(l_det.max(l_ctx));
            let fused = m.p(v);
            prop_assert!(
                (fused - direct).abs() <= 1e-9 * fused.abs().max(direct.abs()).max(1e-300),
                "fused={fused} direct={direct}"
            );
        }
    }

    #[test]
    fn test_integrate_single_ray() {
        let dims = GridDims::new(16, 8, 0.25);
        let mut occ = OccupancyMap::new(dims);
        let cam = CameraModel { width: 1, height: 1, vfov: 0.1, hfov: 0.1, ..CameraModel::default() };
        // Camera at (0.375, 2.0) looking +x, wall return at 1.5 m.
        let pose = Pose::new(0.375, 2.0, 0.0);
        let mut depth = DepthImage::new(1, 1);
        depth.data[0] = 1.5;
        let cam = CameraModel { height_m: 0.9, ..cam }; // layer 3
        let stats = occ.integrate_depth(&pose, &cam, &depth, 5.0).unwrap();
        // Ray starts at x=0.375 in voxel i=1 and returns at x=1.875 => i=7.
        for i in 1..7 {
            assert_eq!(occ.state((i, 8, 3)), CellState::Free, "i={i}");
        }
        assert_eq!(occ.state((7, 8, 3)), CellState::Occupied);
        assert_eq!(occ.state((8, 8, 3)), CellState::Unknown);
        assert_eq!(stats.newly_known, 7);

        // Idempotent for the same pose + depth.
        let before = occ.clone();
        let stats2 = occ.integrate_depth(&pose, &cam, &depth, 5.0).unwrap();
        assert!(occ == before);
        assert_eq!(stats2.newly_known, 0);
    }

    #[test]
    fn test_integrate_respects_mapping_range() {
        let dims = GridDims::new(32, 8, 0.25);
        let mut occ = OccupancyMap::new(dims);
        let cam =
            CameraModel { width: 1, height: 1, vfov: 0.1, hfov: 0.1, height_m: 0.9, ..CameraModel::default() };
        let pose = Pose::new(0.375, 4.0, 0.0);
        let mut depth = DepthImage::new(1, 1);
        depth.data[0] = 6.0; // return beyond the 2 m mapping radius
        occ.integrate_depth(&pose, &cam, &depth, 2.0).unwrap();
        assert_eq!(occ.known_voxels(), occ.states().iter().filter(|s| **s == CellState::Free).count());
        // Free marks stop at 2 m: entry of voxel i is 0.25*i - 0.375.
        assert_eq!(occ.state((9, 16, 3)), CellState::Free); // entry 1.875
        assert_eq!(occ.state((10, 16, 3)), CellState::Unknown); // entry 2.125
        // No occupied voxel anywhere (hit was out of range).
        assert!(occ.states().iter().all(|s| *s != CellState::Occupied));
    }

    #[test]
    fn test_integrate_empty_depth_is_noop() {
        let dims = small_dims();
        let mut occ = OccupancyMap::new(dims);
        let cam = CameraModel { width: 4, height: 3, height_m: 0.9, ..CameraModel::default() };
        let pose = Pose::new(2.0, 2.0, 1.0);
        let depth = DepthImage::new(4, 3); // all zeros = no returns
        let stats = occ.integrate_depth(&pose, &cam, &depth, 5.0).unwrap();
        assert_eq!(stats.newly_known, 0);
        assert_eq!(occ.known_voxels(), 0);
    }

    #[test]
    fn test_projection_and_crop() {
        let dims = small_dims();
        let mut occ = OccupancyMap::new(dims);
        let mut prob = ProbabilityMap::new(dims, 0.01).unwrap();
        occ.set_state((4, 4, 0), CellState::Free);
        occ.set_state((4, 4, 5), CellState::Occupied); // above k_max=3
        occ.set_state((5, 4, 2), CellState::Occupied);
        prob.apply_evidence((5, 4, 2), 0.9).unwrap();

        let p2 = occ.project_2d(3);
        let l = dims.l as usize;
        assert_eq!(p2[4 * l + 4], CellState::Free);
        assert_eq!(p2[4 * l + 5], CellState::Occupied);
        assert_eq!(p2[0], CellState::Unknown);
        let p2_full = occ.project_2d(7);
        assert_eq!(p2_full[4 * l + 4], CellState::Occupied);

        let crop = crop_egocentric(&occ, &prob, (4, 4), 5).unwrap();
        assert_eq!(crop.origin, (2, 2));
        let at = |i: i32, j: i32, k: i32| (((k * 5) + j) * 5 + i) as usize;
        assert_eq!(crop.occ[at(2, 2, 0)], CellState::Free);
        assert_eq!(crop.occ[at(3, 2, 2)], CellState::Occupied);
        assert_eq!(crop.values[at(3, 2, 2)], prob.p((5, 4, 2)));
        assert_eq!(crop.values[at(2, 2, 0)], -1.0); // occupancy-known but no evidence
        assert_eq!(crop.values[at(0, 0, 0)], -1.0);

        // Window hanging over the border pads with sentinels.
        let crop2 = crop_egocentric(&occ, &prob, (0, 0), 5).unwrap();
        assert_eq!(crop2.occ[at(0, 0, 0)], CellState::Unknown);
        assert_eq!(crop2.values[at(0, 0, 0)], -1.0);
    }

    #[test]
    fn test_snapshot_roundtrip_is_exact() {
        let dims = small_dims();
        let mut occ = OccupancyMap::new(dims);
        let mut prob = ProbabilityMap::new(dims, 0.01).unwrap();
        occ.set_state((1, 2, 3), CellState::Occupied);
        occ.set_state((2, 2, 3), CellState::Free);
        prob.apply_evidence((1, 2, 3), 0.73).unwrap();
        prob.apply_evidence((9, 9, 1), 0.312).unwrap();
        prob.apply_context((4, 5, 2), 0.27).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.snap");
        save_snapshot(&path, &occ, &prob).unwrap();
        let (occ2, prob2) = load_snapshot(&path).unwrap();
        assert_eq!(occ2.dims(), occ.dims());
        assert!(occ2.states() == occ.states());
        for (a, b) in prob.logodds_slice().iter().zip(prob2.logodds_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in prob.context_slice().iter().zip(prob2.context_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(prob2.p((4, 5, 2)), prob.p((4, 5, 2)));
        assert_eq!(prob.touched_slice(), prob2.touched_slice());
        assert_eq!(prob2.prior(), 0.01);

        // Corruption is rejected.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.path().join("bad.snap");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(load_snapshot(&bad).is_err());
    }
}
