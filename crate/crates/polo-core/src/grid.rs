//! Grid geometry: dimensions, index/world conversions, poses and the camera
//! model.
//!
//! Conventions used everywhere in the crate:
//!
//! * The world is an `l × l × h` axis-aligned voxel grid with edge length
//!   `voxel_size` meters. Voxel `(i, j, k)` spans
//!   `[i·vs, (i+1)·vs) × [j·vs, (j+1)·vs) × [k·vs, (k+1)·vs)` and its center
//!   sits at `((i+0.5)·vs, (j+0.5)·vs, (k+0.5)·vs)`.
//! * A *cell* is the 2D column footprint `(i, j)`; a *voxel* adds the height
//!   index `k`.
//! * Headings are radians in `[0, 2π)`, counter-clockwise, `0` along `+x`.

use serde::{Deserialize, Serialize};

/// A 2D map cell (column footprint).
pub type Cell = (i32, i32);
/// A 3D voxel index.
pub type Voxel = (i32, i32, i32);

/// Grid dimensions shared by all maps of one world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDims {
    /// Horizontal side length in cells.
    pub l: i32,
    /// Height in voxels.
    pub h: i32,
    /// Edge length of one voxel in meters.
    pub voxel_size: f64,
}

impl Default for GridDims {
    fn default() -> Self {
        GridDims { l: 192, h: 15, voxel_size: 0.05 }
    }
}

impl GridDims {
    pub fn new(l: i32, h: i32, voxel_size: f64) -> Self {
        assert!(l > 0 && h > 0 && h <= 16, "height must fit in a 16-bit column mask");
        assert!(voxel_size > 0.0);
        GridDims { l, h, voxel_size }
    }

    #[inline]
    pub fn n_voxels(&self) -> usize {
        (self.l as usize) * (self.l as usize) * (self.h as usize)
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        (self.l as usize) * (self.l as usize)
    }

    #[inline]
    pub fn cell_in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.0 < self.l && c.1 >= 0 && c.1 < self.l
    }

    #[inline]
    pub fn voxel_in_bounds(&self, v: Voxel) -> bool {
        v.0 >= 0 && v.0 < self.l && v.1 >= 0 && v.1 < self.l && v.2 >= 0 && v.2 < self.h
    }

    /// Flat index of a voxel; column-major in `k` so one column is contiguous
    /// in the per-column bitmask tables (not in this array).
    #[inline]
    pub fn voxel_index(&self, v: Voxel) -> usize {
        debug_assert!(self.voxel_in_bounds(v));
        ((v.2 as usize) * (self.l as usize) + (v.1 as usize)) * (self.l as usize) + v.0 as usize
    }

    #[inline]
    pub fn cell_index(&self, c: Cell) -> usize {
        debug_assert!(self.cell_in_bounds(c));
        (c.1 as usize) * (self.l as usize) + c.0 as usize
    }

    /// World-space center of a voxel.
    #[inline]
    pub fn voxel_center(&self, v: Voxel) -> [f64; 3] {
        [
            (v.0 as f64 + 0.5) * self.voxel_size,
            (v.1 as f64 + 0.5) * self.voxel_size,
            (v.2 as f64 + 0.5) * self.voxel_size,
        ]
    }

    /// World-space center of a cell (2D).
    #[inline]
    pub fn cell_center(&self, c: Cell) -> [f64; 2] {
        [(c.0 as f64 + 0.5) * self.voxel_size, (c.1 as f64 + 0.5) * self.voxel_size]
    }

    /// Voxel containing a world point, or `None` outside the grid.
    #[inline]
    pub fn voxel_of_point(&self, p: [f64; 3]) -> Option<Voxel> {
        let v = (
            (p[0] / self.voxel_size).floor() as i32,
            (p[1] / self.voxel_size).floor() as i32,
            (p[2] / self.voxel_size).floor() as i32,
        );
        if self.voxel_in_bounds(v) {
            Some(v)
        } else {
            None
        }
    }

    /// Voxel coordinates of a flat index produced by [`GridDims::voxel_index`].
    #[inline]
    pub fn voxel_of_index(&self, idx: usize) -> Voxel {
        let l = self.l as usize;
        ((idx % l) as i32, ((idx / l) % l) as i32, (idx / (l * l)) as i32)
    }

    /// Cell containing a world point (2D), or `None` outside the grid.
    #[inline]
    pub fn cell_of_point(&self, x: f64, y: f64) -> Option<Cell> {
        let c = ((x / self.voxel_size).floor() as i32, (y / self.voxel_size).floor() as i32);
        if self.cell_in_bounds(c) {
            Some(c)
        } else {
            None
        }
    }

    /// Height index of the voxel layer containing height `z`, clamped into
    /// the grid. This is where the camera voxel for visibility sits.
    #[inline]
    pub fn layer_of_height(&self, z: f64) -> i32 {
        ((z / self.voxel_size).floor() as i32).clamp(0, self.h - 1)
    }

    /// World extents in meters.
    pub fn world_size(&self) -> [f64; 3] {
        [
            self.l as f64 * self.voxel_size,
            self.l as f64 * self.voxel_size,
            self.h as f64 * self.voxel_size,
        ]
    }
}

/// Agent pose on the floor plane. The camera height comes from the camera
/// model, not the pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, counter-clockwise from `+x`, `[0, 2π)`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading: wrap_angle(heading) }
    }
}

/// Normalize an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    r
}

/// Signed smallest rotation from `from` to `to`, in `(-π, π]`.
#[inline]
pub fn angle_diff(to: f64, from: f64) -> f64 {
    let mut d = (to - from) % std::f64::consts::TAU;
    if d > std::f64::consts::PI {
        d -= std::f64::consts::TAU;
    } else if d <= -std::f64::consts::PI {
        d += std::f64::consts::TAU;
    }
    d
}

/// Row-major depth image. `0.0` marks pixels with no return (no surface
/// within range).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> DepthImage {
        DepthImage { width, height, data: vec![0.0; (width * height) as usize] }
    }

    #[inline]
    pub fn at(&self, row: u32, col: u32) -> f64 {
        self.data[(row * self.width + col) as usize]
    }
}

/// Pinhole camera model for depth rendering and evidence integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub width: u32,
    pub height: u32,
    /// Horizontal field of view in radians.
    pub hfov: f64,
    /// Vertical field of view in radians.
    pub vfov: f64,
    /// Maximum sensing depth in meters; rays report no hit beyond it.
    pub max_depth: f64,
    /// Camera height above the floor in meters.
    pub height_m: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel { width: 80, height: 48, hfov: 1.55, vfov: 1.0, max_depth: 10.0, height_m: 0.88 }
    }
}

impl CameraModel {
    /// Ray directions in the camera-local frame (`+x` forward, `+y` left,
    /// `+z` up), row-major, unit length.
    pub fn local_ray_dirs(&self) -> Vec<[f64; 3]> {
        let w = self.width as f64;
        let h = self.height as f64;
        let fx = (w / 2.0) / (self.hfov / 2.0).tan();
        let fy = (h / 2.0) / (self.vfov / 2.0).tan();
        let mut dirs = Vec::with_capacity((self.width * self.height) as usize);
        for v in 0..self.height {
            for u in 0..self.width {
                let yy = -((u as f64 + 0.5) - w / 2.0) / fx;
                let zz = -((v as f64 + 0.5) - h / 2.0) / fy;
                let n = (1.0 + yy * yy + zz * zz).sqrt();
                dirs.push([1.0 / n, yy / n, zz / n]);
            }
        }
        dirs
    }

    /// Rotate a camera-local direction into the world frame for a heading.
    #[inline]
    pub fn to_world(dir: [f64; 3], heading: f64) -> [f64; 3] {
        let (s, c) = heading.sin_cos();
        [c * dir[0] - s * dir[1], s * dir[0] + c * dir[1], dir[2]]
    }

    /// Camera origin point in world space for a pose.
    #[inline]
    pub fn origin(&self, pose: &Pose) -> [f64; 3] {
        [pose.x, pose.y, self.height_m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_voxel_roundtrip() {
        let d = GridDims::new(16, 8, 0.25);
        for v in [(0, 0, 0), (15, 15, 7), (3, 9, 4)] {
            let c = d.voxel_center(v);
            assert_eq!(d.voxel_of_point(c), Some(v));
        }
        assert_eq!(d.voxel_of_point([-0.01, 0.5, 0.5]), None);
        assert_eq!(d.voxel_of_point([4.0, 0.5, 0.5]), None);
    }

    #[test]
    fn test_layer_of_height_clamps() {
        let d = GridDims::new(16, 8, 0.25);
        assert_eq!(d.layer_of_height(0.88), 3);
        assert_eq!(d.layer_of_height(-1.0), 0);
        assert_eq!(d.layer_of_height(99.0), 7);
    }

    #[test]
    fn test_wrap_and_diff() {
        assert_relative_eq!(wrap_angle(-0.1), std::f64::consts::TAU - 0.1, epsilon = 1e-12);
        assert_relative_eq!(angle_diff(0.1, 6.2), 0.1 - 6.2 + std::f64::consts::TAU, epsilon = 1e-12);
        // Directly behind resolves to +π, never -π.
        let d = angle_diff(std::f64::consts::PI, 0.0);
        assert!(d > 0.0);
        assert_relative_eq!(d, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn test_camera_rays_unit_and_centered() {
        let cam = CameraModel::default();
        let dirs = cam.local_ray_dirs();
        assert_eq!(dirs.len(), (cam.width * cam.height) as usize);
        for d in &dirs {
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            assert_relative_eq!(n, 1.0, epsilon = 1e-12);
            assert!(d[0] > 0.0, "all rays point forward");
        }
        // Edge rays span the configured horizontal FOV.
        let left = dirs[0];
        let right = dirs[(cam.width - 1) as usize];
        let span = left[1].atan2(left[0]) - right[1].atan2(right[0]);
        assert!(span < cam.hfov && span > cam.hfov * 0.9);
    }
}
