//! Planner parameters and their defaults.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::occupancy_map::VoxelCounts;

/// Velocity and acceleration bounds for primitive generation.
///
/// `v_x` is recomputed every round from the voxel size; the rest are constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedLimits {
    pub v_x: f64,
    pub v_z: f64,
    pub omega: f64,
    /// Maximum forward deceleration (also used as the ramp rate), m/s².
    pub a_x: f64,
    /// Constant reduction applied to the ideal forward speed bound.
    pub dv: f64,
}

impl Default for SpeedLimits {
    fn default() -> Self {
        Self { v_x: 0.0, v_z: 1.0, omega: 0.8, a_x: 0.5, dv: 0.1 }
    }
}

/// Log-odds sensor model and map-construction knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub l_occ: f64,
    pub l_free: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// Half-width of the Unknown band around log-odds 0.
    pub eps: f64,
    /// Upper bound on rays inserted per map build.
    pub max_rays_per_build: usize,
    /// Never-observed voxels outside the latest camera frustum and within this
    /// radius of the map center are treated as free (0 disables).
    pub clear_radius: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            l_occ: 0.85,
            l_free: -0.4,
            l_min: -2.0,
            l_max: 3.5,
            eps: 0.01,
            max_rays_per_build: 20_000,
            clear_radius: 1.5,
        }
    }
}

/// Everything one planning round needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Planning period Δt_p.
    pub dt_plan: f64,
    /// Map build budget Δt_m.
    pub dt_map: f64,
    /// Sensing period Δt_s.
    pub dt_sense: f64,
    /// Voxel size step Δα.
    pub alpha_step: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub counts: VoxelCounts,
    /// Sensor range z_max.
    pub z_max: f64,
    pub r_robot: f64,
    pub r_coll: f64,
    pub limits: SpeedLimits,
    /// Keyframe distance threshold β.
    pub beta: f64,
    pub max_level_changes: usize,
    /// Primitive horizon T.
    pub primitive_duration: f64,
    pub sample_dt: f64,
    /// Joystick grid levels per axis (odd, so zero is included).
    pub joystick_levels: usize,
    pub sensor: SensorModel,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            dt_plan: 0.1,
            dt_map: 0.08,
            dt_sense: 0.07,
            alpha_step: 0.01,
            alpha_min: 0.1,
            alpha_max: 0.5,
            counts: VoxelCounts { nx: 40, ny: 20, nz: 20 },
            z_max: 10.0,
            r_robot: 0.3,
            r_coll: 0.1,
            limits: SpeedLimits::default(),
            beta: 0.5,
            max_level_changes: 3,
            primitive_duration: 1.0,
            sample_dt: 0.02,
            joystick_levels: 21,
            sensor: SensorModel::default(),
        }
    }
}

impl PlannerConfig {
    /// Required clearance from the unsafe set, r_robot + r_coll.
    pub fn safety_radius(&self) -> f64 {
        self.r_robot + self.r_coll
    }

    /// Latency budget Δt_s + Δt_m + 2Δt_p.
    pub fn latency(&self) -> f64 {
        self.dt_sense + self.dt_map + 2.0 * self.dt_plan
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("dt_plan", self.dt_plan),
            ("dt_sense", self.dt_sense),
            ("alpha_step", self.alpha_step),
            ("alpha_min", self.alpha_min),
            ("z_max", self.z_max),
            ("r_robot", self.r_robot),
            ("a_x", self.limits.a_x),
            ("primitive_duration", self.primitive_duration),
            ("sample_dt", self.sample_dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NotPositive(name, v));
            }
        }
        if self.alpha_min > self.alpha_max {
            return Err(ConfigError::AlphaRange { min: self.alpha_min, max: self.alpha_max });
        }
        if self.primitive_duration < self.dt_plan {
            return Err(ConfigError::Invalid("primitive_duration must cover one planning period"));
        }
        if self.joystick_levels < 3 || self.joystick_levels % 2 == 0 {
            return Err(ConfigError::Invalid("joystick_levels must be odd and at least 3"));
        }
        if self.max_level_changes == 0 {
            return Err(ConfigError::Invalid("max_level_changes must be at least 1"));
        }
        self.counts.validate()?;
        Ok(())
    }
}
