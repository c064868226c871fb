//! Axis-aligned boxes and the planar rigid transforms used between world and body frames.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// Axis-aligned box given by its min and max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_center_size(center: Vector3<f64>, size: Vector3<f64>) -> Self {
        let half = size * 0.5;
        Self { min: center - half, max: center + half }
    }

    /// Degenerate box holding a single point.
    pub fn point(p: Vector3<f64>) -> Self {
        Self { min: p, max: p }
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn size(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn grow(&mut self, p: Vector3<f64>) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Euclidean distance from `p` to the box, 0 inside.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Slab test. Returns the parameter interval `[t_enter, t_exit]` of the line
    /// `origin + t·dir` inside the box, or `None` when the line misses it.
    pub fn ray_interval(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let mut a = (self.min[i] - origin[i]) * inv;
            let mut b = (self.max[i] - origin[i]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Yaw-only rigid transform: body axes are the world axes rotated about +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPose {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl PlanarPose {
    pub fn new(position: Vector3<f64>, yaw: f64) -> Self {
        Self { position, yaw }
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw)
    }

    pub fn to_body(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * (world - self.position)
    }

    pub fn to_world(&self, body: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * body + self.position
    }

    pub fn dir_to_world(&self, body: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * body
    }

    pub fn dir_to_body(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * world
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}
