//! Body-frame local occupancy grid rebuilt from at most two depth keyframes.
//!
//! Each voxel stores a log-odds value. Rays are traversed with an incremental
//! DDA; within a single insertion every voxel is updated at most once, and a
//! voxel holding a ray endpoint takes the occupied update even if other rays
//! of the same image pass through it. Occupied voxels also remember the
//! extent of the endpoints that landed in them, which the collision checker
//! uses as the observed surface inside the voxel.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::SensorModel;
use crate::error::{ConfigError, MapError};
use crate::geometry::{Aabb, PlanarPose};
use crate::motion_primitives::VehicleState;

/// Voxel counts per body axis; fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelCounts {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl VoxelCounts {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, ConfigError> {
        let c = Self { nx, ny, nz };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return Err(ConfigError::Counts(self.nx, self.ny, self.nz));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.nx as f64, self.ny as f64, self.nz as f64)
    }

    /// Flat index, x fastest.
    pub fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.nx * (c[1] + self.ny * c[2])
    }

    pub fn unflat(&self, idx: usize) -> [usize; 3] {
        [idx % self.nx, (idx / self.nx) % self.ny, idx / (self.nx * self.ny)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoxelClass {
    Free,
    Occupied,
    Unknown,
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Forward-facing z-depth image.
///
/// `+∞` means the ray returned nothing within `max_range`; `NaN` marks an
/// invalid pixel that carries no information.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depths: Vec<f64>,
    pub intrinsics: Intrinsics,
    pub max_range: f64,
}

impl DepthImage {
    /// Image with every pixel set to `fill`.
    pub fn filled(width: usize, height: usize, intrinsics: Intrinsics, max_range: f64, fill: f64) -> Self {
        Self { width, height, depths: vec![fill; width * height], intrinsics, max_range }
    }

    /// Body-frame direction through the center of pixel (u, v), scaled so its
    /// forward component is 1 (multiplying by a z-depth gives the point).
    pub fn ray_dir(&self, u: usize, v: usize) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new(1.0, -((u as f64 + 0.5) - k.cx) / k.fx, -((v as f64 + 0.5) - k.cy) / k.fy)
    }

    pub fn depth(&self, u: usize, v: usize) -> f64 {
        self.depths[v * self.width + u]
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// Tangents of the half field of view (horizontal, vertical).
    pub fn half_fov_tangents(&self) -> (f64, f64) {
        let k = &self.intrinsics;
        (0.5 * self.width as f64 / k.fx, 0.5 * self.height as f64 / k.fy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub state: VehicleState,
    pub depth: Arc<DepthImage>,
    pub timestamp: f64,
}

/// Latest keyframe plus at most one past keyframe gated by distance β.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeBuffer {
    pub latest: Option<Keyframe>,
    pub past: Option<Keyframe>,
    pub beta: f64,
}

impl KeyframeBuffer {
    pub fn new(beta: f64) -> Self {
        Self { latest: None, past: None, beta }
    }

    pub fn update(mut self, new: Keyframe) -> Self {
        self.push(new);
        self
    }

    /// The old latest becomes the past keyframe when there is no past yet or
    /// when `new` is more than β from the current past.
    pub fn push(&mut self, new: Keyframe) {
        let promote = match &self.past {
            None => true,
            Some(past) => (new.state.position - past.state.position).norm() > self.beta,
        };
        let old = self.latest.replace(new);
        if promote {
            if let Some(old) = old {
                self.past = Some(old);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMap {
    pub voxel_size: f64,
    pub counts: VoxelCounts,
    /// State at the map center; the body frame is its yaw-only frame.
    pub origin_state: VehicleState,
    pub logodds: Vec<f64>,
    pub bbox_min: Vector3<f64>,
    pub bbox_max: Vector3<f64>,
    /// Classification band half-width around 0.
    pub eps: f64,
    /// Body-frame extent of the ray endpoints inside each voxel.
    pub surfaces: Vec<Option<Aabb>>,
}

impl LocalMap {
    pub fn new(voxel_size: f64, counts: VoxelCounts, origin_state: VehicleState, eps: f64) -> Self {
        let half = counts.as_vector() * (0.5 * voxel_size);
        Self {
            voxel_size,
            counts,
            origin_state,
            logodds: vec![0.0; counts.total()],
            bbox_min: -half,
            bbox_max: half,
            eps,
            surfaces: vec![None; counts.total()],
        }
    }

    pub fn frame(&self) -> PlanarPose {
        self.origin_state.pose()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::new(self.bbox_min, self.bbox_max)
    }

    /// Voxel whose half-open cell contains the body-frame point.
    pub fn world_to_voxel(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        cell_of(&self.bbox_min, self.voxel_size, self.counts, p)
    }

    pub fn voxel_center(&self, c: [usize; 3]) -> Vector3<f64> {
        voxel_center(&self.bbox_min, self.voxel_size, c)
    }

    pub fn voxel_box(&self, c: [usize; 3]) -> Aabb {
        let lo = self.bbox_min + Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.voxel_size;
        Aabb::new(lo, lo + Vector3::repeat(self.voxel_size))
    }

    pub fn classify(&self, idx: usize) -> VoxelClass {
        classify_logodds(self.logodds[idx], self.eps)
    }
}

pub fn classify(map: &LocalMap, idx: usize) -> VoxelClass {
    map.classify(idx)
}

pub fn world_to_voxel(map: &LocalMap, p: &Vector3<f64>) -> Option<[usize; 3]> {
    map.world_to_voxel(p)
}

/// Strict thresholds: exactly ±eps is Unknown.
pub fn classify_logodds(l: f64, eps: f64) -> VoxelClass {
    if l > eps {
        VoxelClass::Occupied
    } else if l < -eps {
        VoxelClass::Free
    } else {
        VoxelClass::Unknown
    }
}

pub(crate) fn cell_of(bbox_min: &Vector3<f64>, alpha: f64, counts: VoxelCounts, p: &Vector3<f64>) -> Option<[usize; 3]> {
    let n = counts.as_array();
    let mut c = [0usize; 3];
    for i in 0..3 {
        let f = ((p[i] - bbox_min[i]) / alpha).floor();
        if !(f >= 0.0 && f < n[i] as f64) {
            return None;
        }
        c[i] = f as usize;
    }
    Some(c)
}

pub(crate) fn voxel_center(bbox_min: &Vector3<f64>, alpha: f64, c: [usize; 3]) -> Vector3<f64> {
    bbox_min + Vector3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * alpha
}

/// Voxels crossed by the body-frame segment `a → b`, clipped to the map box, in order.
pub fn voxel_traversal(map: &LocalMap, a: &Vector3<f64>, b: &Vector3<f64>) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    traverse(map, a, b, |c| out.push(c));
    out
}

fn traverse(map: &LocalMap, a: &Vector3<f64>, b: &Vector3<f64>, mut visit: impl FnMut([usize; 3])) {
    let d = b - a;
    let Some((t_in, t_out)) = map.bbox().ray_interval(a, &d) else {
        return;
    };
    let t0 = t_in.max(0.0);
    let t1 = t_out.min(1.0);
    if t0 > t1 {
        return;
    }
    let alpha = map.voxel_size;
    let n = map.counts.as_array();
    let p0 = a + d * t0;
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for i in 0..3 {
        let f = ((p0[i] - map.bbox_min[i]) / alpha).floor();
        cell[i] = (f.max(0.0) as i64).min(n[i] as i64 - 1);
        if d[i] > 0.0 {
            step[i] = 1;
            let boundary = map.bbox_min[i] + (cell[i] + 1) as f64 * alpha;
            t_max[i] = (boundary - a[i]) / d[i];
            t_delta[i] = alpha / d[i];
        } else if d[i] < 0.0 {
            step[i] = -1;
            let boundary = map.bbox_min[i] + cell[i] as f64 * alpha;
            t_max[i] = (boundary - a[i]) / d[i];
            t_delta[i] = -alpha / d[i];
        }
    }
    loop {
        visit([cell[0] as usize, cell[1] as usize, cell[2] as usize]);
        let mut axis = 0;
        for i in 1..3 {
            if t_max[i] < t_max[axis] {
                axis = i;
            }
        }
        if t_max[axis] > t1 {
            break;
        }
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= n[axis] as i64 {
            break;
        }
        t_max[axis] += t_delta[axis];
    }
}

const MARK_FREE: u8 = 1;
const MARK_OCC: u8 = 2;

/// Inserts every pixel of `frame`.
pub fn insert_depth(map: &mut LocalMap, frame: &Keyframe, sensor: &SensorModel) {
    insert_strided(map, frame, sensor, 1);
}

fn insert_strided(map: &mut LocalMap, frame: &Keyframe, sensor: &SensorModel, stride: usize) {
    let map_frame = map.frame();
    let cam = frame.state.pose();
    let origin = map_frame.to_body(&cam.position);
    let img = &*frame.depth;
    let mut mark = vec![0u8; map.counts.total()];
    let mut touched: Vec<usize> = Vec::new();
    let mut idx = 0;
    while idx < img.len() {
        let (u, v) = (idx % img.width, idx / img.width);
        idx += stride;
        let z = img.depths[v * img.width + u];
        if z.is_nan() {
            continue;
        }
        let dir = map_frame.dir_to_body(&cam.dir_to_world(&img.ray_dir(u, v)));
        let hit = z.is_finite() && z <= img.max_range;
        let end = if hit { origin + dir * z } else { origin + dir.normalize() * img.max_range };
        let end_cell = if hit { map.world_to_voxel(&end) } else { None };
        let end_flat = end_cell.map(|c| map.counts.flat(c));
        let counts = map.counts;
        traverse(map, &origin, &end, |c| {
            let f = counts.flat(c);
            if Some(f) != end_flat && mark[f] == 0 {
                mark[f] = MARK_FREE;
                touched.push(f);
            }
        });
        if let Some(f) = end_flat {
            if mark[f] == 0 {
                touched.push(f);
            }
            mark[f] = MARK_OCC;
            match &mut map.surfaces[f] {
                Some(b) => b.grow(end),
                slot @ None => *slot = Some(Aabb::point(end)),
            }
        }
    }
    for f in touched {
        let delta = if mark[f] == MARK_OCC { sensor.l_occ } else { sensor.l_free };
        map.logodds[f] = (map.logodds[f] + delta).clamp(sensor.l_min, sensor.l_max);
    }
}

/// Regenerates the local map at `voxel_size` from the buffered keyframes.
///
/// Rays are subsampled with a common stride so that the two images together
/// insert at most `sensor.max_rays_per_build` rays. Afterwards, voxels that
/// no ray has touched, that lie outside the latest camera frustum and whose
/// centers are within `sensor.clear_radius` of the map center are set free:
/// the vehicle occupies or has just flown through that space.
pub fn build_map(
    buffer: &KeyframeBuffer,
    voxel_size: f64,
    counts: VoxelCounts,
    sensor: &SensorModel,
    alpha_range: (f64, f64),
) -> Result<LocalMap, MapError> {
    let (lo, hi) = alpha_range;
    if !(voxel_size >= lo - 1e-9 && voxel_size <= hi + 1e-9) {
        return Err(MapError::VoxelSize { alpha: voxel_size, min: lo, max: hi });
    }
    let latest = buffer.latest.as_ref().ok_or(MapError::EmptyBuffer)?;
    let mut map = LocalMap::new(voxel_size, counts, latest.state, sensor.eps);
    let pixels = latest.depth.len() + buffer.past.as_ref().map_or(0, |p| p.depth.len());
    let stride = pixels.div_ceil(sensor.max_rays_per_build.max(1)).max(1);
    insert_strided(&mut map, latest, sensor, stride);
    if let Some(past) = &buffer.past {
        insert_strided(&mut map, past, sensor, stride);
    }
    if sensor.clear_radius > 0.0 {
        let (tan_h, tan_v) = latest.depth.half_fov_tangents();
        let r2 = sensor.clear_radius * sensor.clear_radius;
        for f in 0..map.logodds.len() {
            if map.logodds[f] != 0.0 {
                continue;
            }
            let c = map.voxel_center(counts.unflat(f));
            let in_view = c.x > 0.0 && c.y.abs() <= c.x * tan_h && c.z.abs() <= c.x * tan_v;
            if !in_view && c.norm_squared() <= r2 {
                map.logodds[f] = sensor.l_free.clamp(sensor.l_min, sensor.l_max);
            }
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts() -> VoxelCounts {
        VoxelCounts { nx: 40, ny: 20, nz: 20 }
    }

    fn rest() -> VehicleState {
        VehicleState::at_rest(Vector3::zeros(), 0.0)
    }

    fn single_ray(depth: f64) -> Arc<DepthImage> {
        let k = Intrinsics { fx: 1.0, fy: 1.0, cx: 0.5, cy: 0.5 };
        Arc::new(DepthImage::filled(1, 1, k, 10.0, depth))
    }

    fn kf(pos: Vector3<f64>, depth: Arc<DepthImage>, t: f64) -> Keyframe {
        Keyframe { state: VehicleState::at_rest(pos, 0.0), depth, timestamp: t }
    }

    fn no_prior() -> SensorModel {
        SensorModel { clear_radius: 0.0, ..Default::default() }
    }

    #[test]
    fn bbox_corners_for_reference_counts() {
        let m = LocalMap::new(0.5, counts(), rest(), 0.01);
        assert_eq!(m.bbox_min, Vector3::new(-10.0, -5.0, -5.0));
        assert_eq!(m.bbox_max, Vector3::new(10.0, 5.0, 5.0));
        assert!(m.logodds.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn voxel_lookup_is_half_open() {
        let m = LocalMap::new(0.5, counts(), rest(), 0.01);
        assert_eq!(m.world_to_voxel(&m.bbox_min), Some([0, 0, 0]));
        assert_eq!(m.world_to_voxel(&m.bbox_max), None);
        assert_eq!(m.world_to_voxel(&Vector3::new(0.26, 0.0, 0.0)).unwrap()[0], 20);
    }

    #[test]
    fn classification_thresholds_are_strict() {
        assert_eq!(classify_logodds(0.0, 0.01), VoxelClass::Unknown);
        assert_eq!(classify_logodds(3.5, 0.01), VoxelClass::Occupied);
        assert_eq!(classify_logodds(0.01, 0.01), VoxelClass::Unknown);
        assert_eq!(classify_logodds(-0.01, 0.01), VoxelClass::Unknown);
        assert_eq!(classify_logodds(-0.4, 0.01), VoxelClass::Free);
    }

    #[test]
    fn buffer_promotion_rule() {
        let img = single_ray(f64::INFINITY);
        let b = KeyframeBuffer::new(0.5).update(kf(Vector3::zeros(), img.clone(), 0.0));
        assert!(b.past.is_none());
        let b = b.update(kf(Vector3::new(0.1, 0.0, 0.0), img.clone(), 0.1));
        assert_eq!(b.past.as_ref().unwrap().timestamp, 0.0);
        let b = b.update(kf(Vector3::new(0.3, 0.0, 0.0), img.clone(), 0.2));
        assert_eq!(b.past.as_ref().unwrap().timestamp, 0.0);
        assert_eq!(b.latest.as_ref().unwrap().timestamp, 0.2);
        let b = b.update(kf(Vector3::new(0.7, 0.0, 0.0), img, 0.3));
        assert_eq!(b.past.as_ref().unwrap().timestamp, 0.2);
    }

    #[test]
    fn single_return_marks_free_then_occupied() {
        let buf = KeyframeBuffer::new(0.5).update(kf(Vector3::zeros(), single_ray(2.0), 0.0));
        let m = build_map(&buf, 0.5, counts(), &no_prior(), (0.1, 0.5)).unwrap();
        let c = counts();
        // The ray runs along the y = z = 0 cell boundary, inside cells (·, 10, 10).
        for ix in 20..24 {
            assert_eq!(m.logodds[c.flat([ix, 10, 10])], -0.4, "ix {ix}");
        }
        assert_eq!(m.logodds[c.flat([24, 10, 10])], 0.85);
        assert_eq!(m.logodds.iter().filter(|&&l| l != 0.0).count(), 5);
    }

    #[test]
    fn invalid_pixels_leave_map_unknown() {
        let buf = KeyframeBuffer::new(0.5).update(kf(Vector3::zeros(), single_ray(f64::NAN), 0.0));
        let m = build_map(&buf, 0.5, counts(), &no_prior(), (0.1, 0.5)).unwrap();
        assert!(m.logodds.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn no_return_clears_to_box_exit() {
        let buf = KeyframeBuffer::new(0.5).update(kf(Vector3::zeros(), single_ray(f64::INFINITY), 0.0));
        let m = build_map(&buf, 0.2, counts(), &no_prior(), (0.1, 0.5)).unwrap();
        let c = counts();
        for ix in 20..40 {
            assert_eq!(m.classify(c.flat([ix, 10, 10])), VoxelClass::Free);
        }
    }

    #[test]
    fn repeated_hits_accumulate_and_clamp() {
        let sensor = no_prior();
        let frame = kf(Vector3::zeros(), single_ray(2.0), 0.0);
        let mut m = LocalMap::new(0.5, counts(), rest(), 0.01);
        let end = counts().flat([24, 10, 10]);
        insert_depth(&mut m, &frame, &sensor);
        insert_depth(&mut m, &frame, &sensor);
        assert!((m.logodds[end] - 1.7).abs() < 1e-12);
        for _ in 0..5 {
            insert_depth(&mut m, &frame, &sensor);
        }
        assert_eq!(m.logodds[end], 3.5);
    }

    #[test]
    fn rejects_voxel_size_out_of_range() {
        let buf = KeyframeBuffer::new(0.5).update(kf(Vector3::zeros(), single_ray(2.0), 0.0));
        let err = build_map(&buf, 0.7, counts(), &no_prior(), (0.1, 0.5)).unwrap_err();
        assert!(matches!(err, MapError::VoxelSize { .. }));
        let empty = KeyframeBuffer::new(0.5);
        assert_eq!(build_map(&empty, 0.3, counts(), &no_prior(), (0.1, 0.5)).unwrap_err(), MapError::EmptyBuffer);
    }

    #[test]
    fn ray_outside_box_changes_nothing() {
        let mut m = LocalMap::new(0.5, counts(), rest(), 0.01);
        let before = m.clone();
        let far = kf(Vector3::new(0.0, 50.0, 0.0), single_ray(2.0), 0.0);
        insert_depth(&mut m, &far, &no_prior());
        assert_eq!(m, before);
    }

    #[test]
    fn clear_prior_skips_the_camera_frustum() {
        let buf = KeyframeBuffer::new(0.5).update(kf(Vector3::zeros(), single_ray(f64::NAN), 0.0));
        let m = build_map(&buf, 0.5, counts(), &SensorModel::default(), (0.1, 0.5)).unwrap();
        let c = counts();
        // Behind the camera: cleared. Straight ahead inside the 1×1 image frustum: untouched.
        assert_eq!(m.classify(c.flat([19, 10, 10])), VoxelClass::Free);
        assert_eq!(m.classify(c.flat([21, 10, 10])), VoxelClass::Unknown);
        // Beyond the radius: untouched.
        assert_eq!(m.classify(c.flat([15, 10, 10])), VoxelClass::Unknown);
    }
}
