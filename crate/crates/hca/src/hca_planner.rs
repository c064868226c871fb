//! Hierarchical collision avoidance: one planning round adapts the voxel size,
//! rebuilds the map and distance field, and checks the selected and stopping
//! primitives against it.

use std::time::Instant;

use crate::config::PlannerConfig;
use crate::distance_field::{compute_distance_field, DistanceField};
use crate::error::MapError;
use crate::motion_primitives::{map_joystick, max_speed, stopping_action, JoystickInput, MotionPrimitive, VehicleState};
use crate::occupancy_map::{build_map, KeyframeBuffer, LocalMap};

/// Map construction and collision checking used by a planning round.
///
/// The grid backend is the real pipeline; tests substitute stubs to drive the
/// round through chosen feasibility patterns.
pub trait CollisionBackend {
    /// Rebuilds whatever the checker needs at voxel size `alpha`.
    fn build(&mut self, alpha: f64, buffer: &KeyframeBuffer, cfg: &PlannerConfig) -> Result<(), MapError>;

    /// Checks both primitives against the most recent build.
    fn in_collision(&self, selected: &MotionPrimitive, stopping: &MotionPrimitive, cfg: &PlannerConfig) -> bool;
}

/// Occupancy map plus distance field, keeping the last build for inspection.
#[derive(Debug, Default, Clone)]
pub struct GridBackend {
    pub map: Option<LocalMap>,
    pub field: Option<DistanceField>,
    pub builds: usize,
}

impl GridBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CollisionBackend for GridBackend {
    fn build(&mut self, alpha: f64, buffer: &KeyframeBuffer, cfg: &PlannerConfig) -> Result<(), MapError> {
        let map = build_map(buffer, alpha, cfg.counts, &cfg.sensor, (cfg.alpha_min, cfg.alpha_max))?;
        self.field = Some(compute_distance_field(&map));
        self.map = Some(map);
        self.builds += 1;
        Ok(())
    }

    fn in_collision(&self, selected: &MotionPrimitive, stopping: &MotionPrimitive, cfg: &PlannerConfig) -> bool {
        match &self.field {
            Some(field) => in_collision(selected, stopping, field, cfg.safety_radius()),
            None => true,
        }
    }
}

/// True if any sample of either primitive comes within `threshold` of the
/// unsafe set or leaves the map.
///
/// Samples are spaced at most `min(α/2, 0.02·v_peak)` apart along the path,
/// and never closer than 1 cm.
pub fn in_collision(selected: &MotionPrimitive, stopping: &MotionPrimitive, field: &DistanceField, threshold: f64) -> bool {
    primitive_collides(selected, field, threshold) || primitive_collides(stopping, field, threshold)
}

fn primitive_collides(prim: &MotionPrimitive, field: &DistanceField, threshold: f64) -> bool {
    let blocked = |t: f64| field.clearance_world(&prim.state_at(t).position, threshold) < threshold;
    let peak = prim.peak_speed();
    if peak <= 0.0 || prim.duration <= 0.0 {
        return blocked(0.0);
    }
    let spacing = (0.5 * field.voxel_size).min(0.02 * peak).max(0.01);
    let dt = spacing / peak;
    let steps = (prim.duration / dt).ceil() as usize;
    (0..=steps).any(|i| blocked((i as f64 * dt).min(prim.duration)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Planned { selected: MotionPrimitive, stopping: MotionPrimitive },
    Fallback,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Planned { .. } => "planned",
            Outcome::Fallback => "fallback",
        }
    }

    pub fn is_planned(&self) -> bool {
        matches!(self, Outcome::Planned { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub outcome: Outcome,
    /// Voxel size carried into the next round.
    pub voxel_size_out: f64,
    /// Number of failed checks (resolution decreases) in this round.
    pub levels_tried: usize,
    pub map_builds: usize,
    /// Wall-clock duration of the round, seconds.
    pub round_duration: f64,
}

fn clamp_alpha(alpha: f64, cfg: &PlannerConfig) -> f64 {
    alpha.clamp(cfg.alpha_min, cfg.alpha_max)
}

/// One adaptive planning round.
///
/// The voxel size first grows by Δα; each failed check shrinks it by Δα and
/// retries, up to `max_level_changes` attempts. The primitives are recomputed
/// before every map build because the speed bound depends on the voxel size.
pub fn hca_round<B: CollisionBackend>(
    predicted: &VehicleState,
    raw: &JoystickInput,
    alpha_prev: f64,
    buffer: &KeyframeBuffer,
    cfg: &PlannerConfig,
    backend: &mut B,
) -> Result<PlanResult, MapError> {
    let started = Instant::now();
    let mut alpha = clamp_alpha(alpha_prev + cfg.alpha_step, cfg);
    let mut levels = 0;
    let mut builds = 0;
    let mut planned = None;
    while levels < cfg.max_level_changes {
        let (selected, stopping) = primitives_for(predicted, raw, alpha, cfg);
        backend.build(alpha, buffer, cfg)?;
        builds += 1;
        if backend.in_collision(&selected, &stopping, cfg) {
            alpha = clamp_alpha(alpha - cfg.alpha_step, cfg);
            levels += 1;
        } else {
            planned = Some(Outcome::Planned { selected, stopping });
            break;
        }
    }
    Ok(PlanResult {
        outcome: planned.unwrap_or(Outcome::Fallback),
        voxel_size_out: alpha,
        levels_tried: levels,
        map_builds: builds,
        round_duration: started.elapsed().as_secs_f64(),
    })
}

/// Non-adaptive baseline: a single check at a pinned voxel size.
pub fn fixed_round<B: CollisionBackend>(
    predicted: &VehicleState,
    raw: &JoystickInput,
    alpha: f64,
    buffer: &KeyframeBuffer,
    cfg: &PlannerConfig,
    backend: &mut B,
) -> Result<PlanResult, MapError> {
    let started = Instant::now();
    let (selected, stopping) = primitives_for(predicted, raw, alpha, cfg);
    backend.build(alpha, buffer, cfg)?;
    let collides = backend.in_collision(&selected, &stopping, cfg);
    let outcome = if collides { Outcome::Fallback } else { Outcome::Planned { selected, stopping } };
    Ok(PlanResult {
        outcome,
        voxel_size_out: alpha,
        levels_tried: usize::from(collides),
        map_builds: 1,
        round_duration: started.elapsed().as_secs_f64(),
    })
}

/// Selected and stopping primitives under the speed bound for `alpha`.
pub fn primitives_for(
    predicted: &VehicleState,
    raw: &JoystickInput,
    alpha: f64,
    cfg: &PlannerConfig,
) -> (MotionPrimitive, MotionPrimitive) {
    let mut limits = cfg.limits;
    limits.v_x = max_speed(alpha, cfg);
    let selected = map_joystick(predicted, raw, &limits, cfg);
    let stopping = stopping_action(&selected, cfg.dt_plan, &limits);
    (selected, stopping)
}
