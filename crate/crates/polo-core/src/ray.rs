//! Voxel ray walking primitives.
//!
//! Two walkers with different contracts:
//!
//! * [`FloatWalker`] steps a ray with arbitrary `f64` origin and direction
//!   through the grid (rendering, depth integration). When two or three
//!   boundary crossings coincide exactly it steps all tied axes at once, so
//!   a ray sliding through a voxel corner or edge never visits the
//!   zero-chord side voxels.
//! * [`LatticeWalker`] walks the segment between two voxel centers in pure
//!   integer arithmetic. Voxel centers live on a half-integer lattice, so in
//!   doubled coordinates every comparison is exact: the walker enumerates
//!   precisely the voxels whose open boxes the segment crosses with positive
//!   length, in order. Line-of-sight between cell centers is built on this,
//!   which makes visibility results reproducible bit for bit and lets tests
//!   compare against a brute-force segment/box oracle with no tolerance.

use crate::grid::{GridDims, Voxel};

/// Amanatides–Woo stepping for arbitrary origins/directions.
pub(crate) struct FloatWalker {
    cur: [i32; 3],
    step: [i32; 3],
    t_max: [f64; 3],
    t_delta: [f64; 3],
    t_entry: f64,
    l: i32,
    h: i32,
}

impl FloatWalker {
    /// `origin` must lie inside the grid; `dir` need not be unit length, but
    /// the entry parameters are measured in units of `|dir|`, so pass a unit
    /// vector to get meters.
    pub(crate) fn new(origin: [f64; 3], dir: [f64; 3], dims: &GridDims) -> Option<FloatWalker> {
        let vs = dims.voxel_size;
        let mut cur = [0i32; 3];
        for a in 0..3 {
            cur[a] = (origin[a] / vs).floor() as i32;
        }
        let inb = cur[0] >= 0
            && cur[0] < dims.l
            && cur[1] >= 0
            && cur[1] < dims.l
            && cur[2] >= 0
            && cur[2] < dims.h;
        if !inb {
            return None;
        }
        let mut step = [0i32; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            if dir[a] > 0.0 {
                step[a] = 1;
                t_max[a] = ((cur[a] + 1) as f64 * vs - origin[a]) / dir[a];
                t_delta[a] = vs / dir[a];
            } else if dir[a] < 0.0 {
                step[a] = -1;
                t_max[a] = (cur[a] as f64 * vs - origin[a]) / dir[a];
                t_delta[a] = vs / -dir[a];
            }
        }
        Some(FloatWalker { cur, step, t_max, t_delta, t_entry: 0.0, l: dims.l, h: dims.h })
    }

    #[inline]
    pub(crate) fn cur(&self) -> Voxel {
        (self.cur[0], self.cur[1], self.cur[2])
    }

    /// Ray parameter at which the current voxel was entered.
    #[inline]
    pub(crate) fn t_entry(&self) -> f64 {
        self.t_entry
    }

    /// Ray parameter at which the current voxel will be left.
    #[inline]
    pub(crate) fn t_exit(&self) -> f64 {
        self.t_max[0].min(self.t_max[1]).min(self.t_max[2])
    }

    /// Advance to the next crossed voxel. Returns `false` once the walk
    /// leaves the grid.
    pub(crate) fn advance(&mut self) -> bool {
        let t = self.t_max[0].min(self.t_max[1]).min(self.t_max[2]);
        if !t.is_finite() {
            return false;
        }
        // Step every axis whose boundary crossing ties with the minimum:
        // corner and edge crossings skip the zero-chord neighbors.
        for a in 0..3 {
            if self.t_max[a] == t {
                self.cur[a] += self.step[a];
                self.t_max[a] += self.t_delta[a];
            }
        }
        self.t_entry = t;
        self.cur[0] >= 0
            && self.cur[0] < self.l
            && self.cur[1] >= 0
            && self.cur[1] < self.l
            && self.cur[2] >= 0
            && self.cur[2] < self.h
    }
}

/// Exact integer walk between two voxel centers.
///
/// Works in doubled voxel coordinates: the center of voxel `(i, j, k)` is the
/// odd integer point `(2i+1, 2j+1, 2k+1)` and faces lie on even integers.
/// The `m`-th boundary crossing along axis `a` happens at segment fraction
/// `(2m - 1) / (2 |Δa|)`; fractions are compared by cross-multiplication, so
/// ties are detected exactly and tied axes step together.
pub(crate) struct LatticeWalker {
    cur: [i32; 3],
    step: [i32; 3],
    den: [i64; 3],
    m: [i64; 3],
    done: bool,
}

impl LatticeWalker {
    pub(crate) fn new(a: Voxel, b: Voxel) -> LatticeWalker {
        let d = [b.0 - a.0, b.1 - a.1, b.2 - a.2];
        LatticeWalker {
            cur: [a.0, a.1, a.2],
            step: [d[0].signum(), d[1].signum(), d[2].signum()],
            den: [d[0].unsigned_abs() as i64, d[1].unsigned_abs() as i64, d[2].unsigned_abs() as i64],
            m: [1, 1, 1],
            done: d == [0, 0, 0],
        }
    }

    /// Next voxel entered by the segment (excluding the start voxel,
    /// including the end voxel, in order). `None` after the end voxel.
    pub(crate) fn next_voxel(&mut self) -> Option<Voxel> {
        if self.done {
            return None;
        }
        // Find the smallest pending crossing fraction (2m-1)/(2 den) among
        // axes that still have crossings left.
        let mut best: Option<(i64, i64)> = None; // (num, den) of the minimum
        for a in 0..3 {
            if self.m[a] > self.den[a] {
                continue;
            }
            let n = 2 * self.m[a] - 1;
            let d = self.den[a];
            match best {
                None => best = Some((n, d)),
                Some((bn, bd)) => {
                    // n/d < bn/bd  <=>  n*bd < bn*d  (all positive)
                    if n * bd < bn * d {
                        best = Some((n, d));
                    }
                }
            }
        }
        let (bn, bd) = match best {
            Some(x) => x,
            None => {
                self.done = true;
                return None;
            }
        };
        for a in 0..3 {
            if self.m[a] <= self.den[a] {
                let n = 2 * self.m[a] - 1;
                if n * bd == bn * self.den[a] {
                    self.cur[a] += self.step[a];
                    self.m[a] += 1;
                }
            }
        }
        let v = (self.cur[0], self.cur[1], self.cur[2]);
        if self.m[0] > self.den[0] && self.m[1] > self.den[1] && self.m[2] > self.den[2] {
            self.done = true;
        }
        Some(v)
    }
}

/// All voxels crossed by the center-to-center segment, start voxel included.
#[cfg(test)]
pub(crate) fn lattice_segment_voxels(a: Voxel, b: Voxel) -> Vec<Voxel> {
    let mut out = vec![a];
    let mut w = LatticeWalker::new(a, b);
    while let Some(v) = w.next_voxel() {
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: does the open segment between the centers of `a`
    /// and `b` cross the open box of voxel `w` with positive length?
    /// Exact rational slab test in doubled coordinates.
    fn segment_crosses_box(a: Voxel, b: Voxel, w: Voxel) -> bool {
        let c = [2 * a.0 + 1, 2 * a.1 + 1, 2 * a.2 + 1];
        let t = [2 * b.0 + 1, 2 * b.1 + 1, 2 * b.2 + 1];
        let lo = [2 * w.0, 2 * w.1, 2 * w.2];
        // Track the chord interval [tn_lo/td_lo, tn_hi/td_hi] as exact
        // fractions with positive denominators.
        let mut t_lo = (0i64, 1i64);
        let mut t_hi = (1i64, 1i64);
        for ax in 0..3 {
            let d = (t[ax] - c[ax]) as i64;
            let b0 = lo[ax] as i64 - c[ax] as i64;
            let b1 = b0 + 2;
            if d == 0 {
                // Slab constraint reduces to strict containment.
                if !(b0 < 0 && 0 < b1) {
                    return false;
                }
                continue;
            }
            // entry n0/den, exit n1/den with den > 0
            let (n0, n1, den) = if d > 0 { (b0, b1, d) } else { (-b1, -b0, -d) };
            if n0 * t_lo.1 > t_lo.0 * den {
                t_lo = (n0, den);
            }
            if n1 * t_hi.1 < t_hi.0 * den {
                t_hi = (n1, den);
            }
        }
        // Positive chord: t_lo < t_hi strictly, intersected with (0,1).
        t_lo.0 * t_hi.1 < t_hi.0 * t_lo.1
    }

    fn oracle_voxels(a: Voxel, b: Voxel, lo: Voxel, hi: Voxel) -> Vec<Voxel> {
        let mut out = vec![];
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                for k in lo.2..=hi.2 {
                    let w = (i, j, k);
                    if w == a || segment_crosses_box(a, b, w) {
                        out.push(w);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn test_lattice_walk_matches_box_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..400 {
            let a = (rng.random_range(0..10), rng.random_range(0..10), rng.random_range(0..6));
            let b = (rng.random_range(0..10), rng.random_range(0..10), rng.random_range(0..6));
            let mut walked = lattice_segment_voxels(a, b);
            let mut oracle = oracle_voxels(
                a,
                b,
                (a.0.min(b.0), a.1.min(b.1), a.2.min(b.2)),
                (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)),
            );
            walked.sort_unstable();
            walked.dedup();
            oracle.sort_unstable();
            assert_eq!(walked, oracle, "a={a:?} b={b:?}");
        }
    }

    #[test]
    fn test_lattice_diagonal_skips_corner_neighbors() {
        // Perfect 45° diagonal passes through corners; only the diagonal
        // voxels have positive chords.
        let v = lattice_segment_voxels((0, 0, 0), (3, 3, 0));
        assert_eq!(v, vec![(0, 0, 0), (1, 1, 0), (2, 2, 0), (3, 3, 0)]);
    }

    #[test]
    fn test_lattice_axis_run() {
        let v = lattice_segment_voxels((2, 1, 0), (6, 1, 0));
        assert_eq!(v, vec![(2, 1, 0), (3, 1, 0), (4, 1, 0), (5, 1, 0), (6, 1, 0)]);
    }

    #[test]
    fn test_float_walker_axis_row() {
        let dims = GridDims::new(8, 8, 0.5);
        let mut w = FloatWalker::new([0.25, 0.25, 0.25], [1.0, 0.0, 0.0], &dims).unwrap();
        let mut seen = vec![w.cur()];
        while w.advance() {
            seen.push(w.cur());
        }
        let expect: Vec<Voxel> = (0..8).map(|i| (i, 0, 0)).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn test_float_walker_entry_distances_increase() {
        use rand::{Rng, SeedableRng};
        let dims = GridDims::new(16, 8, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let o = [
                rng.random_range(0.2..15.8),
                rng.random_range(0.2..15.8),
                rng.random_range(0.2..7.8),
            ];
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let ph: f64 = rng.random_range(-1.2..1.2f64);
            let dir = [th.cos() * ph.cos(), th.sin() * ph.cos(), ph.sin()];
            let mut w = FloatWalker::new(o, dir, &dims).unwrap();
            let mut last = -1.0;
            let mut prev = w.cur();
            while w.advance() {
                assert!(w.t_entry() >= last);
                let c = w.cur();
                let dd =
                    (c.0 - prev.0).abs() + (c.1 - prev.1).abs() + (c.2 - prev.2).abs();
                assert!(dd >= 1 && dd <= 3, "step changed {dd} axes");
                last = w.t_entry();
                prev = c;
            }
        }
    }
}
