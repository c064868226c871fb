//! Forward-arc motion primitives, the voxel-size-dependent speed bound and
//! stopping actions.
//!
//! A primitive holds a constant yaw rate and blends each linear speed from the
//! start state toward its commanded value at the deceleration limit `A_x`.
//! Positions are evaluated in closed form, so executed trajectories and
//! collision samples share one code path.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::{PlannerConfig, SpeedLimits};
use crate::geometry::{wrap_angle, PlanarPose};

/// Yaw rates at or below this magnitude use the straight-line limit.
pub const OMEGA_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// World position, meters.
    pub position: Vector3<f64>,
    /// Heading in (−π, π].
    pub yaw: f64,
    /// Body-frame velocity; only x and z are driven.
    pub linear_velocity: Vector3<f64>,
    pub yaw_rate: f64,
}

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>, yaw: f64) -> Self {
        Self { position, yaw: wrap_angle(yaw), linear_velocity: Vector3::zeros(), yaw_rate: 0.0 }
    }

    pub fn speed(&self) -> f64 {
        self.linear_velocity.norm()
    }

    pub fn pose(&self) -> PlanarPose {
        PlanarPose::new(self.position, self.yaw)
    }
}

/// Raw operator axes (forward, vertical, yaw), each clamped to [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JoystickInput {
    pub axes: [f64; 3],
}

impl JoystickInput {
    pub fn new(forward: f64, vertical: f64, yaw: f64) -> Self {
        Self::from_axes([forward, vertical, yaw])
    }

    /// Non-finite axes become 0.
    pub fn from_axes(axes: [f64; 3]) -> Self {
        let clamp = |a: f64| if a.is_finite() { a.clamp(-1.0, 1.0) } else { 0.0 };
        Self { axes: axes.map(clamp) }
    }

    pub fn forward() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Command {
    pub v_x: f64,
    pub v_z: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Selected,
    Stopping,
}

/// Speed that moves linearly from `v0` to `v1` over `[0, ramp]` and holds `v1` after.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ramp {
    v0: f64,
    v1: f64,
    ramp: f64,
}

impl Ramp {
    fn constant(v: f64) -> Self {
        Self { v0: v, v1: v, ramp: 0.0 }
    }

    fn toward(v0: f64, target: f64, rate: f64) -> Self {
        if v0 == target {
            return Self::constant(target);
        }
        Self { v0, v1: target, ramp: (target - v0).abs() / rate }
    }

    fn to_rest_over(v0: f64, duration: f64) -> Self {
        if duration <= 0.0 {
            return Self::constant(0.0);
        }
        Self { v0, v1: 0.0, ramp: duration }
    }

    fn accel(&self) -> f64 {
        if self.ramp > 0.0 {
            (self.v1 - self.v0) / self.ramp
        } else {
            0.0
        }
    }

    fn speed(&self, t: f64) -> f64 {
        if t >= self.ramp {
            self.v1
        } else {
            self.v0 + self.accel() * t
        }
    }

    fn distance(&self, t: f64) -> f64 {
        let t1 = t.min(self.ramp);
        let d1 = self.v0 * t1 + 0.5 * self.accel() * t1 * t1;
        d1 + self.v1 * (t - t1).max(0.0)
    }
}

/// ∫₀^τ (v0 + a·t)·(cos θ(t), sin θ(t)) dt with θ(t) = yaw0 + ω·t.
fn arc_displacement(v0: f64, a: f64, yaw0: f64, omega: f64, tau: f64) -> (f64, f64) {
    if tau <= 0.0 {
        return (0.0, 0.0);
    }
    if omega.abs() <= OMEGA_EPS {
        let s = v0 * tau + 0.5 * a * tau * tau;
        return (s * yaw0.cos(), s * yaw0.sin());
    }
    // With s = ωτ: ∫₀^τ e^{iωt} dt = τ·f1(s) and ∫₀^τ t·e^{iωt} dt = τ²·f2(s).
    let s = omega * tau;
    let half = 0.5 * s;
    let f1 = (s.sin() / s, 2.0 * half.sin() * half.sin() / s);
    let f2 = if s.abs() < 1e-2 {
        let s2 = s * s;
        (0.5 - s2 / 8.0 + s2 * s2 / 144.0, s / 3.0 - s * s2 / 30.0 + s * s2 * s2 / 840.0)
    } else {
        (
            s.sin() / s - 2.0 * half.sin() * half.sin() / (s * s),
            (s.sin() - s * s.cos()) / (s * s),
        )
    };
    let re = v0 * tau * f1.0 + a * tau * tau * f2.0;
    let im = v0 * tau * f1.1 + a * tau * tau * f2.1;
    let (sy, cy) = yaw0.sin_cos();
    (re * cy - im * sy, re * sy + im * cy)
}

/// Sample instants `0, dt, 2dt, …` with the final one exactly at `duration`.
fn sample_times(duration: f64, dt: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    if duration <= 0.0 {
        return times;
    }
    let mut k = 1u32;
    loop {
        let t = f64::from(k) * dt;
        if t >= duration - 1e-9 {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(duration);
    times
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionPrimitive {
    pub command: Command,
    pub duration: f64,
    pub start: VehicleState,
    pub samples: Vec<(f64, VehicleState)>,
    pub kind: PrimitiveKind,
    pub sample_dt: f64,
    vx: Ramp,
    vz: Ramp,
}

impl MotionPrimitive {
    fn build(
        start: VehicleState,
        command: Command,
        duration: f64,
        sample_dt: f64,
        kind: PrimitiveKind,
        vx: Ramp,
        vz: Ramp,
    ) -> Self {
        let mut prim = Self { command, duration, start, samples: Vec::new(), kind, sample_dt, vx, vz };
        prim.samples = sample_times(duration, sample_dt).into_iter().map(|t| (t, prim.state_at(t))).collect();
        prim
    }

    /// Constant command from the start state, no ramp.
    pub fn constant(start: VehicleState, command: Command, duration: f64, sample_dt: f64) -> Self {
        Self::build(
            start,
            command,
            duration,
            sample_dt,
            PrimitiveKind::Selected,
            Ramp::constant(command.v_x),
            Ramp::constant(command.v_z),
        )
    }

    /// Zero-length primitive holding the start position.
    pub fn hover(at: VehicleState, sample_dt: f64) -> Self {
        let rest = VehicleState::at_rest(at.position, at.yaw);
        Self::build(
            rest,
            Command::default(),
            0.0,
            sample_dt,
            PrimitiveKind::Stopping,
            Ramp::constant(0.0),
            Ramp::constant(0.0),
        )
    }

    /// Closed-form state at `t` (clamped to the primitive's span).
    pub fn state_at(&self, t: f64) -> VehicleState {
        let t = t.clamp(0.0, self.duration);
        let omega = self.command.omega;
        let yaw0 = self.start.yaw;
        let t1 = t.min(self.vx.ramp);
        let (dx1, dy1) = arc_displacement(self.vx.v0, self.vx.accel(), yaw0, omega, t1);
        let (dx2, dy2) = arc_displacement(self.vx.v1, 0.0, yaw0 + omega * t1, omega, t - t1);
        let dz = self.vz.distance(t);
        let at_end = t >= self.duration;
        let yaw_rate = if self.kind == PrimitiveKind::Stopping && at_end { 0.0 } else { omega };
        VehicleState {
            position: self.start.position + Vector3::new(dx1 + dx2, dy1 + dy2, dz),
            yaw: wrap_angle(yaw0 + omega * t),
            linear_velocity: Vector3::new(self.vx.speed(t), 0.0, self.vz.speed(t)),
            yaw_rate,
        }
    }

    pub fn end_state(&self) -> VehicleState {
        self.samples.last().map(|s| s.1).unwrap_or(self.start)
    }

    /// Largest linear speed reached (profiles are linear, so an endpoint).
    pub fn peak_speed(&self) -> f64 {
        let a = Vector3::new(self.vx.v0, 0.0, self.vz.v0).norm();
        let b = Vector3::new(self.vx.v1, 0.0, self.vz.v1).norm();
        a.max(b)
    }

    /// Path length of the x-y-z trajectory, integrated on a fine grid.
    pub fn path_length(&self, steps: usize) -> f64 {
        let mut len = 0.0;
        let mut prev = self.start.position;
        for i in 1..=steps {
            let p = self.state_at(self.duration * i as f64 / steps as f64).position;
            len += (p - prev).norm();
            prev = p;
        }
        len
    }
}

/// Samples of the closed-form arc for a constant command.
pub fn propagate(start: VehicleState, command: Command, duration: f64, sample_dt: f64) -> Vec<(f64, VehicleState)> {
    MotionPrimitive::constant(start, command, duration, sample_dt).samples
}

/// Forward speed bound for voxel size `alpha`.
///
/// Solves `V·Δt_l + V²/(2A_x) = z_eq − (r_robot + r_coll)` for `V`, then
/// subtracts `δv`. `z_eq = min(z_max, (α/2)·N_x)` is the distance the map can
/// certify ahead of the vehicle.
pub fn max_speed(alpha: f64, cfg: &PlannerConfig) -> f64 {
    let z_eq = cfg.z_max.min(0.5 * alpha * cfg.counts.nx as f64);
    let room = z_eq - cfg.safety_radius();
    if room <= 0.0 {
        return 0.0;
    }
    let a = cfg.limits.a_x;
    let dtl = cfg.latency();
    // Rationalized root; avoids cancellation when the room is small.
    let v = 2.0 * room / (dtl + (dtl * dtl + 2.0 * room / a).sqrt());
    (v - cfg.limits.dv).max(0.0)
}

/// Nearest point of a `levels`-point uniform grid on [−max, max]; ties go toward zero.
pub fn snap_to_grid(value: f64, max: f64, levels: usize) -> f64 {
    if max <= 0.0 || levels < 2 {
        return 0.0;
    }
    let half = ((levels - 1) / 2) as f64;
    let step = max / half;
    let q = (value / step).abs();
    let floor = q.floor();
    let n = if q - floor > 0.5 { floor + 1.0 } else { floor };
    let snapped = n.min(half) * step;
    snapped.min(max).copysign(value)
}

/// Grid-snapped command for raw axes under the given limits.
pub fn command_for(raw: &JoystickInput, limits: &SpeedLimits, levels: usize) -> Command {
    let [f, v, y] = raw.axes;
    let c = Command {
        v_x: snap_to_grid(f * limits.v_x, limits.v_x, levels),
        v_z: snap_to_grid(v * limits.v_z, limits.v_z, levels),
        omega: snap_to_grid(y * limits.omega, limits.omega, levels),
    };
    // Map −0.0 to 0.0 so telemetry prints cleanly.
    Command { v_x: c.v_x + 0.0, v_z: c.v_z + 0.0, omega: c.omega + 0.0 }
}

/// Selected primitive for the operator input, ramping from the state's current speed.
pub fn map_joystick(state: &VehicleState, raw: &JoystickInput, limits: &SpeedLimits, cfg: &PlannerConfig) -> MotionPrimitive {
    let command = command_for(raw, limits, cfg.joystick_levels);
    MotionPrimitive::build(
        *state,
        command,
        cfg.primitive_duration,
        cfg.sample_dt,
        PrimitiveKind::Selected,
        Ramp::toward(state.linear_velocity.x, command.v_x, limits.a_x),
        Ramp::toward(state.linear_velocity.z, command.v_z, limits.a_x),
    )
}

/// Decelerates to rest at `A_x` from the selected primitive's state at `planning_dt`,
/// holding the yaw rate until the vehicle stops.
pub fn stopping_action(selected: &MotionPrimitive, planning_dt: f64, limits: &SpeedLimits) -> MotionPrimitive {
    let mut start = selected.state_at(planning_dt);
    let speed = Vector3::new(start.linear_velocity.x, 0.0, start.linear_velocity.z).norm();
    if speed == 0.0 {
        start.linear_velocity = Vector3::zeros();
        start.yaw_rate = 0.0;
        return MotionPrimitive::build(
            start,
            Command::default(),
            0.0,
            selected.sample_dt,
            PrimitiveKind::Stopping,
            Ramp::constant(0.0),
            Ramp::constant(0.0),
        );
    }
    let duration = speed / limits.a_x;
    let command = Command { v_x: 0.0, v_z: 0.0, omega: start.yaw_rate };
    MotionPrimitive::build(
        start,
        command,
        duration,
        selected.sample_dt,
        PrimitiveKind::Stopping,
        Ramp::to_rest_over(start.linear_velocity.x, duration),
        Ramp::to_rest_over(start.linear_velocity.z, duration),
    )
}
