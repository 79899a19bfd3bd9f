//! Ground-truth scene model and the depth renderer.
//!
//! A [`Scene`] is the immutable world an episode runs in: a voxel occupancy
//! grid with no `Unknown` voxels, a set of receptacles (furniture surfaces
//! that may hold objects), a set of placed objects (the goal instance and
//! distractors), and a navigability mask for the floor plane. Everything an
//! agent learns about the scene flows through [`render_frame`], which casts
//! one ray per camera pixel against the ground-truth grid.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{CameraModel, Cell, DepthImage, GridDims, Pose, Voxel};
use crate::ray::FloatWalker;
use crate::voxelmap::{CellState, OccupancyMap};

/// Inclusive axis-aligned box of voxels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoxelBox {
    pub min: Voxel,
    pub max: Voxel,
}

impl VoxelBox {
    /// Box spanning `min..=max` per axis. Corners are normalized so the
    /// stored `min` is component-wise ≤ `max`.
    pub fn new(a: Voxel, b: Voxel) -> VoxelBox {
        VoxelBox {
            min: (a.0.min(b.0), a.1.min(b.1), a.2.min(b.2)),
            max: (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)),
        }
    }

    #[inline]
    pub fn contains(&self, v: Voxel) -> bool {
        v.0 >= self.min.0
            && v.0 <= self.max.0
            && v.1 >= self.min.1
            && v.1 <= self.max.1
            && v.2 >= self.min.2
            && v.2 <= self.max.2
    }

    /// Number of voxels in the box.
    pub fn volume(&self) -> usize {
        let dx = (self.max.0 - self.min.0 + 1) as usize;
        let dy = (self.max.1 - self.min.1 + 1) as usize;
        let dz = (self.max.2 - self.min.2 + 1) as usize;
        dx * dy * dz
    }

    /// All voxels in the box, k-major then j then i (ascending).
    pub fn voxels(&self) -> Vec<Voxel> {
        let mut out = Vec::with_capacity(self.volume());
        for k in self.min.2..=self.max.2 {
            for j in self.min.1..=self.max.1 {
                for i in self.min.0..=self.max.0 {
                    out.push((i, j, k));
                }
            }
        }
        out
    }

    /// The 2D cells under the box.
    pub fn footprint(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for j in self.min.1..=self.max.1 {
            for i in self.min.0..=self.max.0 {
                out.push((i, j));
            }
        }
        out
    }

    /// Whether this box's footprint is contained in `other`'s footprint.
    pub fn footprint_within(&self, other: &VoxelBox) -> bool {
        self.min.0 >= other.min.0
            && self.max.0 <= other.max.0
            && self.min.1 >= other.min.1
            && self.max.1 <= other.max.1
    }
}

/// A furniture surface that may hold objects: table, counter, couch, shelf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receptacle {
    pub class: String,
    pub bounds: VoxelBox,
}

/// A placed object instance. `receptacle` links it to the surface it sits
/// on; `None` means it stands on the floor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneObject {
    pub class: String,
    pub bounds: VoxelBox,
    pub receptacle: Option<usize>,
}

/// Immutable ground-truth world for one or more episodes.
#[derive(Clone, Debug)]
pub struct Scene {
    pub dims: GridDims,
    /// Ground-truth occupancy. Contains only `Free` and `Occupied`.
    pub gt: OccupancyMap,
    pub receptacles: Vec<Receptacle>,
    pub objects: Vec<SceneObject>,
    /// Per-cell navigability: `true` where the agent body fits.
    pub floor_mask: Vec<bool>,
    /// Seed the scene was generated from (0 for hand-built scenes).
    pub seed: u64,
}

/// Per-voxel semantic tag derived from a scene for a specific goal class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoxelLabel {
    /// Wall, floor, distractor object — plain geometry.
    Plain,
    /// Part of a goal-class object instance.
    Goal,
    /// Part of receptacle `id`.
    Receptacle(usize),
}

/// Dense voxel → [`VoxelLabel`] lookup for a fixed goal class.
#[derive(Clone, Debug)]
pub struct SemanticLabels {
    dims: GridDims,
    tags: Vec<u32>,
}

const TAG_PLAIN: u32 = 0;
const TAG_GOAL: u32 = 1;
const TAG_RECP_BASE: u32 = 2;

impl SemanticLabels {
    #[inline]
    pub fn label(&self, v: Voxel) -> VoxelLabel {
        match self.tags[self.dims.voxel_index(v)] {
            TAG_PLAIN => VoxelLabel::Plain,
            TAG_GOAL => VoxelLabel::Goal,
            t => VoxelLabel::Receptacle((t - TAG_RECP_BASE) as usize),
        }
    }
}

impl Scene {
    /// All voxels belonging to objects of `class`.
    pub fn goal_voxels(&self, class: &str) -> Vec<Voxel> {
        let mut out = Vec::new();
        for o in &self.objects {
            if o.class == class {
                out.extend(o.bounds.voxels());
            }
        }
        out
    }

    /// Indices of objects of `class`.
    pub fn instances_of(&self, class: &str) -> Vec<usize> {
        (0..self.objects.len()).filter(|&i| self.objects[i].class == class).collect()
    }

    /// Build the per-voxel semantic lookup for one goal class. Receptacle
    /// tags are written first so a goal object overlapping its receptacle
    /// (which generators avoid) still reads as the goal.
    pub fn labels(&self, goal_class: &str) -> SemanticLabels {
        let mut tags = vec![TAG_PLAIN; self.dims.n_voxels()];
        for (id, r) in self.receptacles.iter().enumerate() {
            for v in r.bounds.voxels() {
                if self.dims.voxel_in_bounds(v) {
                    tags[self.dims.voxel_index(v)] = TAG_RECP_BASE + id as u32;
                }
            }
        }
        for o in &self.objects {
            if o.class == goal_class {
                for v in o.bounds.voxels() {
                    if self.dims.voxel_in_bounds(v) {
                        tags[self.dims.voxel_index(v)] = TAG_GOAL;
                    }
                }
            }
        }
        SemanticLabels { dims: self.dims, tags }
    }

    /// Structural sanity checks. `body_top_layer` is the highest voxel layer
    /// the agent body occupies; navigable cells must be free through it.
    pub fn validate(&self, body_top_layer: i32) -> Result<()> {
        let n = self.dims.n_voxels();
        let states = self.gt.states();
        if states.len() != n {
            return Err(Error::DimsMismatch("occupancy grid size".into()));
        }
        if states.iter().any(|&s| s == CellState::Unknown) {
            return Err(Error::InvalidParam("scene occupancy contains unknown voxels".into()));
        }
        if self.floor_mask.len() != self.dims.n_cells() {
            return Err(Error::DimsMismatch("floor mask size".into()));
        }
        for (idx, o) in self.objects.iter().enumerate() {
            if !self.dims.voxel_in_bounds(o.bounds.min) || !self.dims.voxel_in_bounds(o.bounds.max)
            {
                return Err(Error::InvalidParam(format!("object {idx} out of bounds")));
            }
            if let Some(r) = o.receptacle {
                let rb = &self
                    .receptacles
                    .get(r)
                    .ok_or_else(|| Error::InvalidParam(format!("object {idx} bad receptacle")))?
                    .bounds;
                let on_top = o.bounds.min.2 == rb.max.2 + 1 && o.bounds.footprint_within(rb);
                let within = o.bounds.footprint_within(rb)
                    && o.bounds.min.2 >= rb.min.2
                    && o.bounds.max.2 <= rb.max.2;
                if !on_top && !within {
                    return Err(Error::InvalidParam(format!(
                        "object {idx} not on/within its receptacle"
                    )));
                }
            }
            for v in o.bounds.voxels() {
                if self.gt.state(v) != CellState::Occupied {
                    return Err(Error::InvalidParam(format!("object {idx} has free voxels")));
                }
            }
        }
        for (idx, r) in self.receptacles.iter().enumerate() {
            if !self.dims.voxel_in_bounds(r.bounds.min) || !self.dims.voxel_in_bounds(r.bounds.max)
            {
                return Err(Error::InvalidParam(format!("receptacle {idx} out of bounds")));
            }
            for v in r.bounds.voxels() {
                if self.gt.state(v) != CellState::Occupied {
                    return Err(Error::InvalidParam(format!("receptacle {idx} has free voxels")));
                }
            }
        }
        for j in 0..self.dims.l {
            for i in 0..self.dims.l {
                if !self.floor_mask[self.dims.cell_index((i, j))] {
                    continue;
                }
                for k in 0..=body_top_layer.min(self.dims.h - 1) {
                    if self.gt.state((i, j, k)) == CellState::Occupied {
                        return Err(Error::InvalidParam(format!(
                            "navigable cell ({i},{j}) blocked at layer {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Serialize to the versioned scene text format.
    pub fn save_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "polo-scene v1");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(
            s,
            "dims {} {} {}",
            self.dims.l, self.dims.h, self.dims.voxel_size
        );
        let mut occ = String::new();
        rle_encode(self.gt.states().iter().map(|s| match s {
            CellState::Free => 'F',
            CellState::Occupied => 'O',
            CellState::Unknown => 'U',
        }), &mut occ);
        let _ = writeln!(s, "occ {occ}");
        let mut floor = String::new();
        rle_encode(self.floor_mask.iter().map(|&b| if b { '1' } else { '0' }), &mut floor);
        let _ = writeln!(s, "floor {floor}");
        for r in &self.receptacles {
            let (a, b) = (r.bounds.min, r.bounds.max);
            let _ = writeln!(
                s,
                "receptacle {} {} {} {} {} {} {}",
                r.class, a.0, a.1, a.2, b.0, b.1, b.2
            );
        }
        for o in &self.objects {
            let (a, b) = (o.bounds.min, o.bounds.max);
            let link = o.receptacle.map_or_else(|| "-".to_string(), |r| r.to_string());
            let _ = writeln!(
                s,
                "object {} {} {} {} {} {} {} {}",
                o.class, link, a.0, a.1, a.2, b.0, b.1, b.2
            );
        }
        let _ = writeln!(s, "end");
        s
    }

    /// Parse the scene text format.
    pub fn load_text(text: &str) -> Result<Scene> {
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| Error::parse("scene", "empty input"))?;
        if head.trim() != "polo-scene v1" {
            return Err(Error::parse("scene", format!("bad header {head:?}")));
        }
        let mut seed = 0u64;
        let mut dims: Option<GridDims> = None;
        let mut occ: Option<Vec<CellState>> = None;
        let mut floor: Option<Vec<bool>> = None;
        let mut receptacles = Vec::new();
        let mut objects = Vec::new();
        let mut saw_end = false;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (kw, rest) = line.split_once(' ').unwrap_or((line, ""));
            match kw {
                "seed" => {
                    seed = rest
                        .trim()
                        .parse()
                        .map_err(|e| Error::parse("scene seed", format!("{e}")))?;
                }
                "dims" => {
                    let p: Vec<&str> = rest.split_whitespace().collect();
                    if p.len() != 3 {
                        return Err(Error::parse("scene dims", "expected `l h voxel_size`"));
                    }
                    let l: i32 =
                        p[0].parse().map_err(|e| Error::parse("scene dims", format!("{e}")))?;
                    let h: i32 =
                        p[1].parse().map_err(|e| Error::parse("scene dims", format!("{e}")))?;
                    let vs: f64 =
                        p[2].parse().map_err(|e| Error::parse("scene dims", format!("{e}")))?;
                    if l <= 0 || h <= 0 || h > 16 || !(vs > 0.0) {
                        return Err(Error::parse("scene dims", "out-of-range dimensions"));
                    }
                    dims = Some(GridDims::new(l, h, vs));
                }
                "occ" => {
                    let mut states = Vec::new();
                    rle_decode(rest, |c, n| {
                        let s = match c {
                            'F' => CellState::Free,
                            'O' => CellState::Occupied,
                            _ => return Err(Error::parse("scene occ", format!("bad state {c:?}"))),
                        };
                        states.extend(std::iter::repeat_n(s, n));
                        Ok(())
                    })?;
                    occ = Some(states);
                }
                "floor" => {
                    let mut mask = Vec::new();
                    rle_decode(rest, |c, n| {
                        let b = match c {
                            '1' => true,
                            '0' => false,
                            _ => {
                                return Err(Error::parse("scene floor", format!("bad flag {c:?}")))
                            }
                        };
                        mask.extend(std::iter::repeat_n(b, n));
                        Ok(())
                    })?;
                    floor = Some(mask);
                }
                "receptacle" => {
                    let p: Vec<&str> = rest.split_whitespace().collect();
                    if p.len() != 7 {
                        return Err(Error::parse("scene receptacle", "expected 7 fields"));
                    }
                    let b = parse_box(&p[1..7])?;
                    receptacles.push(Receptacle { class: p[0].to_string(), bounds: b });
                }
                "object" => {
                    let p: Vec<&str> = rest.split_whitespace().collect();
                    if p.len() != 8 {
                        return Err(Error::parse("scene object", "expected 8 fields"));
                    }
                    let link = if p[1] == "-" {
                        None
                    } else {
                        Some(
                            p[1].parse::<usize>()
                                .map_err(|e| Error::parse("scene object", format!("{e}")))?,
                        )
                    };
                    let b = parse_box(&p[2..8])?;
                    objects.push(SceneObject {
                        class: p[0].to_string(),
                        bounds: b,
                        receptacle: link,
                    });
                }
                "end" => {
                    saw_end = true;
                    break;
                }
                other => {
                    return Err(Error::parse("scene", format!("unknown record {other:?}")));
                }
            }
        }
        if !saw_end {
            return Err(Error::parse("scene", "missing end record"));
        }
        let dims = dims.ok_or_else(|| Error::parse("scene", "missing dims record"))?;
        let occ = occ.ok_or_else(|| Error::parse("scene", "missing occ record"))?;
        let floor = floor.ok_or_else(|| Error::parse("scene", "missing floor record"))?;
        if occ.len() != dims.n_voxels() {
            return Err(Error::parse("scene occ", "length does not match dims"));
        }
        if floor.len() != dims.n_cells() {
            return Err(Error::parse("scene floor", "length does not match dims"));
        }
        let mut gt = OccupancyMap::new(dims);
        for (idx, s) in occ.iter().enumerate() {
            gt.set_state(dims.voxel_of_index(idx), *s);
        }
        Ok(Scene { dims, gt, receptacles, objects, floor_mask: floor, seed })
    }
}

fn parse_box(p: &[&str]) -> Result<VoxelBox> {
    let mut v = [0i32; 6];
    for (i, t) in p.iter().enumerate() {
        v[i] = t.parse().map_err(|e| Error::parse("scene box", format!("{e}")))?;
    }
    Ok(VoxelBox::new((v[0], v[1], v[2]), (v[3], v[4], v[5])))
}

/// Encode a symbol stream as `count:symbol` tokens.
fn rle_encode(iter: impl Iterator<Item = char>, out: &mut String) {
    let mut cur: Option<(char, usize)> = None;
    for c in iter {
        match &mut cur {
            Some((sym, n)) if *sym == c => *n += 1,
            _ => {
                if let Some((sym, n)) = cur {
                    let _ = write!(out, "{n}:{sym} ");
                }
                cur = Some((c, 1));
            }
        }
    }
    if let Some((sym, n)) = cur {
        let _ = write!(out, "{n}:{sym}");
    }
}

fn rle_decode(text: &str, mut emit: impl FnMut(char, usize) -> Result<()>) -> Result<()> {
    for tok in text.split_whitespace() {
        let (n, sym) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse("rle", format!("bad token {tok:?}")))?;
        let n: usize = n.parse().map_err(|e| Error::parse("rle", format!("{e}")))?;
        let mut chars = sym.chars();
        let c = chars.next().ok_or_else(|| Error::parse("rle", "empty symbol"))?;
        if chars.next().is_some() {
            return Err(Error::parse("rle", format!("multi-char symbol {sym:?}")));
        }
        emit(c, n)?;
    }
    Ok(())
}

/// One rendered camera frame: the depth image plus, per pixel, the exact
/// voxel the return came from. Keeping both from the same ray walk means
/// perception code can never re-derive a different hit voxel than the
/// renderer used.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub depth: DepthImage,
    /// Per-pixel hit voxel; `None` where the pixel has no return.
    pub hits: Vec<Option<Voxel>>,
}

impl RenderedFrame {
    /// Sorted, deduplicated voxels with at least one pixel return.
    pub fn surface_voxels(&self) -> Vec<Voxel> {
        let set: BTreeSet<Voxel> = self.hits.iter().flatten().copied().collect();
        set.into_iter().collect()
    }
}

/// Cast one ray per pixel against ground-truth occupancy. A pixel's depth is
/// the Euclidean distance (along the ray) at which the ray enters the first
/// occupied voxel; pixels with no occupied voxel within `cam.max_depth` read
/// 0.0. The camera must sit inside the grid in a non-occupied voxel.
pub fn render_frame(gt: &OccupancyMap, pose: &Pose, cam: &CameraModel) -> Result<RenderedFrame> {
    let dims = *gt.dims();
    let origin = cam.origin(pose);
    let cam_voxel = dims.voxel_of_point(origin).ok_or(Error::OutOfGrid {
        x: origin[0],
        y: origin[1],
        z: origin[2],
    })?;
    if gt.state(cam_voxel) == CellState::Occupied {
        return Err(Error::NonNavigable(cam_voxel.0, cam_voxel.1));
    }
    let n_px = (cam.width * cam.height) as usize;
    let mut depth = vec![0.0f64; n_px];
    let mut hits: Vec<Option<Voxel>> = vec![None; n_px];
    for (px, local) in cam.local_ray_dirs().into_iter().enumerate() {
        let dir = CameraModel::to_world(local, pose.heading);
        let mut w = match FloatWalker::new(origin, dir, &dims) {
            Some(w) => w,
            None => continue,
        };
        while w.advance() {
            if w.t_entry() > cam.max_depth {
                break;
            }
            if gt.state(w.cur()) == CellState::Occupied {
                depth[px] = w.t_entry();
                hits[px] = Some(w.cur());
                break;
            }
        }
    }
    Ok(RenderedFrame {
        depth: DepthImage { width: cam.width, height: cam.height, data: depth },
        hits,
    })
}
