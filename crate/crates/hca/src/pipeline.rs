//! The 10 Hz sense–plan–act loop over a simulated world.
//!
//! Round `k` starts at `t_k = k·Δt_p`. Depth images captured at multiples of
//! Δt_s up to `t_k` are in the keyframe buffer. The planner works from the
//! state the vehicle will have at `t_k + Δt_p`, and a new selected primitive
//! takes over at that time. The simulation then advances to `t_{k+1}` in
//! small substeps, checking ground-truth clearance at each.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PlannerConfig;
use crate::error::{ConfigError, MapError};
use crate::hca_planner::{fixed_round, hca_round, GridBackend, Outcome, PlanResult};
use crate::motion_primitives::{JoystickInput, MotionPrimitive, VehicleState};
use crate::occupancy_map::{Keyframe, KeyframeBuffer};
use crate::sim_world::{ground_truth_clearance, render_depth, Executing, Scenario, SimState};

const TIME_EPS: f64 = 1e-9;

/// How the voxel size is chosen each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ResolutionMode {
    Adaptive { alpha_min: f64, alpha_max: f64 },
    Fixed { alpha: f64 },
}

impl ResolutionMode {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ResolutionMode::Adaptive { alpha_min, alpha_max } => (alpha_min, alpha_max),
            ResolutionMode::Fixed { alpha } => (alpha, alpha),
        }
    }
}

/// One telemetry record, taken at the start of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub time_s: f64,
    pub position: [f64; 3],
    pub yaw: f64,
    pub speed_mps: f64,
    pub voxel_size_m: f64,
    pub levels_tried: usize,
    pub outcome: String,
    pub plan_time_s: f64,
    pub map_builds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutput {
    pub telemetry: TelemetryRow,
    /// Vehicle states at each substep of the round, ending at the next round's start.
    pub segment: Vec<(f64, VehicleState)>,
    pub min_clearance: f64,
    pub collided: bool,
    pub goal_reached: bool,
}

/// Planner-side state carried between rounds.
#[derive(Debug, Clone)]
pub struct PlannerState {
    pub alpha_prev: f64,
    pub buffer: KeyframeBuffer,
    /// Selected primitive waiting for its start time.
    pub pending: Option<Executing>,
    /// Stopping primitive of the last successful round.
    pub last_stopping: Option<Executing>,
    pub backend: GridBackend,
}

/// A running simulation plus its planner.
#[derive(Debug, Clone)]
pub struct Session {
    pub scenario: Scenario,
    pub cfg: PlannerConfig,
    pub mode: ResolutionMode,
    pub sim: SimState,
    pub planner: PlannerState,
    pub round: u64,
    pub collided: bool,
    next_capture: u64,
    noise_rng: ChaCha8Rng,
}

impl Session {
    /// Sets up the run and takes the first depth capture at t = 0.
    pub fn new(scenario: Scenario, cfg: &PlannerConfig, mode: ResolutionMode) -> Result<Self, ConfigError> {
        let (lo, hi) = mode.bounds();
        let cfg = PlannerConfig { alpha_min: lo, alpha_max: hi, ..cfg.clone() };
        cfg.validate()?;
        let noise_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5eed_de97);
        let mut session = Self {
            sim: SimState::new(scenario.start),
            planner: PlannerState {
                alpha_prev: hi,
                buffer: KeyframeBuffer::new(cfg.beta),
                pending: None,
                last_stopping: None,
                backend: GridBackend::new(),
            },
            scenario,
            cfg,
            mode,
            round: 0,
            collided: false,
            next_capture: 0,
            noise_rng,
        };
        session.capture_until(0.0);
        Ok(session)
    }

    pub fn time(&self) -> f64 {
        self.sim.time
    }

    fn capture_until(&mut self, t: f64) {
        loop {
            let tc = self.next_capture as f64 * self.cfg.dt_sense;
            if tc > t + TIME_EPS {
                break;
            }
            let state = self.sim.state_at(tc);
            let depth = render_depth(&self.scenario.world, &state.pose(), &self.scenario.camera, Some(&mut self.noise_rng));
            self.planner.buffer.push(Keyframe { state, depth: depth.into(), timestamp: tc });
            self.next_capture += 1;
        }
    }

    fn plan(&mut self, predicted: &VehicleState, input: &JoystickInput) -> Result<PlanResult, MapError> {
        let p = &mut self.planner;
        match self.mode {
            ResolutionMode::Adaptive { .. } => hca_round(predicted, input, p.alpha_prev, &p.buffer, &self.cfg, &mut p.backend),
            ResolutionMode::Fixed { alpha } => fixed_round(predicted, input, alpha, &p.buffer, &self.cfg, &mut p.backend),
        }
    }

    /// One planning period: plan, command, advance Δt_p.
    pub fn run_round(&mut self, input: &JoystickInput) -> Result<RoundOutput, MapError> {
        let dt = self.cfg.dt_plan;
        let now = self.round as f64 * dt;
        if self.planner.pending.as_ref().is_some_and(|p| p.start_time <= now + TIME_EPS) {
            self.sim.executing = self.planner.pending.take();
        }
        let start_state = self.sim.vehicle;
        let predicted = self.sim.state_at(now + dt);
        let result = self.plan(&predicted, input)?;
        self.planner.alpha_prev = result.voxel_size_out;
        match &result.outcome {
            Outcome::Planned { selected, stopping } => {
                self.planner.pending = Some(Executing { primitive: selected.clone(), start_time: now + dt });
                self.planner.last_stopping = Some(Executing { primitive: stopping.clone(), start_time: now + 2.0 * dt });
            }
            Outcome::Fallback => self.fall_back(now),
        }
        let telemetry = TelemetryRow {
            time_s: now,
            position: start_state.position.into(),
            yaw: start_state.yaw,
            speed_mps: start_state.speed(),
            voxel_size_m: result.voxel_size_out,
            levels_tried: result.levels_tried,
            outcome: result.outcome.label().to_string(),
            plan_time_s: result.round_duration,
            map_builds: result.map_builds,
        };
        let (segment, min_clearance) = self.advance(now, dt);
        self.round += 1;
        let goal_reached = !self.collided && self.scenario.goal_reached(&self.sim.vehicle.position);
        Ok(RoundOutput { telemetry, segment, min_clearance, collided: self.collided, goal_reached })
    }

    fn fall_back(&mut self, now: f64) {
        let p = &mut self.planner;
        p.pending = None;
        match &p.last_stopping {
            Some(stop) if stop.start_time > now + TIME_EPS => p.pending = Some(stop.clone()),
            Some(stop) => {
                let running = self.sim.executing.as_ref().is_some_and(|e| e.start_time == stop.start_time
                    && e.primitive.kind == stop.primitive.kind);
                if !running {
                    self.sim.executing = Some(stop.clone());
                }
            }
            None => {
                let hover = MotionPrimitive::hover(self.sim.vehicle, self.cfg.sample_dt);
                self.sim.executing = Some(Executing { primitive: hover, start_time: now });
            }
        }
    }

    fn advance(&mut self, now: f64, dt: f64) -> (Vec<(f64, VehicleState)>, f64) {
        let substeps = (dt / self.cfg.sample_dt).round().max(1.0) as usize;
        let h = dt / substeps as f64;
        let mut segment = Vec::with_capacity(substeps);
        let mut min_clearance = f64::INFINITY;
        for j in 1..=substeps {
            let t = if j == substeps { (self.round + 1) as f64 * dt } else { now + j as f64 * h };
            self.capture_until(t);
            self.sim.vehicle = self.sim.state_at(t);
            self.sim.time = t;
            let c = ground_truth_clearance(&self.scenario.world, &self.sim.vehicle.position);
            min_clearance = min_clearance.min(c);
            segment.push((t, self.sim.vehicle));
            if c < self.cfg.r_robot {
                self.collided = true;
                break;
            }
        }
        (segment, min_clearance)
    }

    pub fn start_clearance(&self) -> f64 {
        ground_truth_clearance(&self.scenario.world, &self.sim.vehicle.position)
    }

    pub fn position(&self) -> Vector3<f64> {
        self.sim.vehicle.position
    }
}

/// Runs one round of the pipeline for `session` with the operator's current input.
pub fn run_pipeline_round(session: &mut Session, input: &JoystickInput) -> Result<RoundOutput, MapError> {
    session.run_round(input)
}
