//! Euclidean distance to the unsafe set (Occupied ∪ Unknown voxels).
//!
//! The voxel field is the exact Euclidean distance transform over voxel
//! centers, computed with the separable lower-envelope algorithm of
//! Felzenszwalb and Huttenlocher. Queries for the collision checker use the
//! field only as a broad phase: near unsafe voxels the clearance is measured
//! exactly against the observed surface extent of each occupied voxel (the
//! whole voxel for unknown ones) and against the map boundary, since space
//! outside the map is unobserved.

use nalgebra::Vector3;

use crate::geometry::{Aabb, PlanarPose};
use crate::occupancy_map::{cell_of, LocalMap, VoxelClass, VoxelCounts};

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub voxel_size: f64,
    pub counts: VoxelCounts,
    pub frame: PlanarPose,
    pub bbox_min: Vector3<f64>,
    pub bbox_max: Vector3<f64>,
    /// Distance from each voxel center to the nearest unsafe voxel center, in meters.
    pub dist: Vec<f64>,
    /// Value used when no unsafe voxel exists.
    pub cap: f64,
    solids: Vec<Option<Aabb>>,
}

impl DistanceField {
    pub fn from_map(map: &LocalMap) -> Self {
        compute_distance_field(map)
    }

    /// Value of the voxel containing the body-frame point; 0 outside the map.
    pub fn query(&self, p: &Vector3<f64>) -> f64 {
        match cell_of(&self.bbox_min, self.voxel_size, self.counts, p) {
            Some(c) => self.dist[self.counts.flat(c)],
            None => 0.0,
        }
    }

    pub fn query_world(&self, p: &Vector3<f64>) -> f64 {
        self.query(&self.frame.to_body(p))
    }

    /// Distance from a body-frame point to the unsafe geometry, saturated at
    /// `horizon`. Zero inside an unsafe voxel or outside the map.
    pub fn clearance(&self, p: &Vector3<f64>, horizon: f64) -> f64 {
        let Some(c) = cell_of(&self.bbox_min, self.voxel_size, self.counts, p) else {
            return 0.0;
        };
        let here = self.dist[self.counts.flat(c)];
        if here <= 0.0 {
            return 0.0;
        }
        let boundary = (0..3)
            .map(|i| (p[i] - self.bbox_min[i]).min(self.bbox_max[i] - p[i]))
            .fold(f64::INFINITY, f64::min);
        let mut best = horizon.min(boundary);
        let alpha = self.voxel_size;
        if here - alpha * 3f64.sqrt() >= best {
            return best;
        }
        let reach = (best / alpha).ceil() as i64 + 1;
        let n = self.counts.as_array();
        let lo: Vec<usize> = (0..3).map(|i| (c[i] as i64 - reach).max(0) as usize).collect();
        let hi: Vec<usize> = (0..3).map(|i| (c[i] as i64 + reach).min(n[i] as i64 - 1) as usize).collect();
        for iz in lo[2]..=hi[2] {
            for iy in lo[1]..=hi[1] {
                let row = self.counts.flat([0, iy, iz]);
                for ix in lo[0]..=hi[0] {
                    if let Some(b) = &self.solids[row + ix] {
                        let d = b.distance(p);
                        if d < best {
                            best = d;
                        }
                    }
                }
            }
        }
        best
    }

    pub fn clearance_world(&self, p: &Vector3<f64>, horizon: f64) -> f64 {
        self.clearance(&self.frame.to_body(p), horizon)
    }
}

/// Builds the field from a classified map.
pub fn compute_distance_field(map: &LocalMap) -> DistanceField {
    let counts = map.counts;
    let alpha = map.voxel_size;
    let total = counts.total();
    let mut solids = vec![None; total];
    let mut grid = vec![f64::INFINITY; total];
    for f in 0..total {
        let class = map.classify(f);
        if class == VoxelClass::Free {
            continue;
        }
        grid[f] = 0.0;
        let voxel = map.voxel_box(counts.unflat(f));
        solids[f] = Some(match (class, map.surfaces[f]) {
            (VoxelClass::Occupied, Some(s)) => s,
            _ => voxel,
        });
    }
    squared_edt(&mut grid, counts);
    let cap = alpha * (counts.nx + counts.ny + counts.nz) as f64;
    let dist = grid.iter().map(|&d2| (alpha * d2.sqrt()).min(cap)).collect();
    DistanceField {
        voxel_size: alpha,
        counts,
        frame: map.frame(),
        bbox_min: map.bbox_min,
        bbox_max: map.bbox_max,
        dist,
        cap,
        solids,
    }
}

/// In-place squared distance transform in cell units; zeros mark sites.
fn squared_edt(grid: &mut [f64], counts: VoxelCounts) {
    let n = counts.as_array();
    let strides = [1, n[0], n[0] * n[1]];
    let longest = *n.iter().max().unwrap();
    let mut f = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    for axis in 0..3 {
        let len = n[axis];
        let stride = strides[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..n[b] {
            for i in 0..n[a] {
                let base = i * strides[a] + j * strides[b];
                for k in 0..len {
                    f[k] = grid[base + k * stride];
                }
                edt_1d(&f[..len], &mut out[..len], &mut v, &mut z);
                for k in 0..len {
                    grid[base + k * stride] = out[k];
                }
            }
        }
    }
}

/// Lower envelope of parabolas; `f` may contain +∞ for non-sites.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.fill(f64::INFINITY);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_primitives::VehicleState;

    fn map(n: usize, alpha: f64) -> LocalMap {
        let counts = VoxelCounts { nx: n, ny: n, nz: n };
        let mut m = LocalMap::new(alpha, counts, VehicleState::at_rest(Vector3::zeros(), 0.0), 0.01);
        m.logodds.fill(-1.0);
        m
    }

    #[test]
    fn single_site_gives_euclidean_distances() {
        let mut m = map(9, 0.5);
        let c = m.counts.flat([4, 4, 4]);
        m.logodds[c] = 2.0;
        let f = compute_distance_field(&m);
        assert_eq!(f.dist[c], 0.0);
        assert_eq!(f.dist[m.counts.flat([7, 4, 4])], 1.5);
        let diag = f.dist[m.counts.flat([5, 5, 5])];
        assert!((diag - 0.5 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn all_free_is_capped() {
        let m = map(6, 0.2);
        let f = compute_distance_field(&m);
        assert!(f.dist.iter().all(|&d| (d - 0.2 * 18.0).abs() < 1e-12));
    }

    #[test]
    fn unknown_counts_as_unsafe() {
        let mut m = map(5, 0.5);
        let c = m.counts.flat([0, 0, 0]);
        m.logodds[c] = 0.0;
        let f = compute_distance_field(&m);
        assert_eq!(f.dist[c], 0.0);
        assert_eq!(f.dist[m.counts.flat([2, 0, 0])], 1.0);
    }

    #[test]
    fn query_outside_map_is_zero() {
        let m = map(4, 0.5);
        let f = compute_distance_field(&m);
        assert_eq!(f.query(&Vector3::new(5.0, 0.0, 0.0)), 0.0);
        assert!(f.query(&Vector3::zeros()) > 0.0);
    }

    #[test]
    fn clearance_uses_observed_surface() {
        let mut m = map(20, 0.5);
        let c = m.world_to_voxel(&Vector3::new(2.1, 0.0, 0.0)).unwrap();
        let f = m.counts.flat(c);
        m.logodds[f] = 2.0;
        m.surfaces[f] = Some(Aabb::new(Vector3::new(2.1, -0.2, -0.2), Vector3::new(2.1, 0.2, 0.2)));
        let field = compute_distance_field(&m);
        let d = field.clearance(&Vector3::new(1.6, 0.0, 0.0), 10.0);
        assert!((d - 0.5).abs() < 1e-12, "{d}");
        // Far away only the map boundary matters.
        let far = field.clearance(&Vector3::new(-3.0, 0.0, 0.0), 10.0);
        assert!((far - 2.0).abs() < 1e-12, "{far}");
        assert_eq!(field.clearance(&Vector3::new(-3.0, 0.0, 0.0), 0.4), 0.4);
    }

    #[test]
    fn clearance_inside_unsafe_voxel_is_zero() {
        let mut m = map(10, 0.5);
        m.logodds[m.counts.flat([5, 5, 5])] = 0.0;
        let field = compute_distance_field(&m);
        assert_eq!(field.clearance(&Vector3::new(0.25, 0.25, 0.25), 1.0), 0.0);
    }
}
