//! Ground-truth world, depth rendering, perfect-tracking kinematics and the
//! three scenario families.

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::geometry::{Aabb, PlanarPose};
use crate::motion_primitives::{MotionPrimitive, VehicleState};
use crate::occupancy_map::{DepthImage, Intrinsics};

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub name: String,
    pub obstacles: Vec<Aabb>,
}

impl World {
    /// First hit parameter along `origin + t·dir` with `t > 0`, if any.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut best: Option<f64> = None;
        for b in &self.obstacles {
            if let Some((t0, t1)) = b.ray_interval(origin, dir) {
                let t = if t0 > 0.0 { t0 } else if t1 > 0.0 { 0.0 } else { continue };
                if best.is_none_or(|bt| t < bt) {
                    best = Some(t);
                }
            }
        }
        best
    }
}

/// Exact distance from `p` to the nearest obstacle, 0 inside one.
pub fn ground_truth_clearance(world: &World, p: &Vector3<f64>) -> f64 {
    world.obstacles.iter().map(|b| b.distance(p)).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
    /// Standard deviation of additive depth noise; 0 renders noise-free.
    #[serde(default)]
    pub noise_std: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { hfov_deg: 87.0, vfov_deg: 58.0, width: 160, height: 90, max_range: 10.0, noise_std: 0.0 }
    }
}

impl CameraModel {
    pub fn intrinsics(&self) -> Intrinsics {
        let fx = 0.5 * self.width as f64 / (0.5 * self.hfov_deg.to_radians()).tan();
        let fy = 0.5 * self.height as f64 / (0.5 * self.vfov_deg.to_radians()).tan();
        Intrinsics { fx, fy, cx: 0.5 * self.width as f64, cy: 0.5 * self.height as f64 }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fov_ok = |f: f64| f > 0.0 && f < 180.0;
        if !fov_ok(self.hfov_deg) || !fov_ok(self.vfov_deg) {
            return Err(ScenarioError::Invalid("camera field of view must be in (0, 180) degrees".into()));
        }
        if self.width == 0 || self.height == 0 || !(self.max_range > 0.0) || !(self.noise_std >= 0.0) {
            return Err(ScenarioError::Invalid("camera resolution, range and noise must be positive".into()));
        }
        Ok(())
    }
}

/// Renders a forward-facing z-depth image from `pose`.
///
/// Pixels whose nearest hit is beyond `max_range` (Euclidean, along the ray)
/// are `+∞`. With `noise_std > 0` and an RNG, hits get Gaussian noise and are
/// kept inside `(0, max_range]`.
pub fn render_depth(world: &World, pose: &PlanarPose, camera: &CameraModel, rng: Option<&mut ChaCha8Rng>) -> DepthImage {
    let k = camera.intrinsics();
    let mut img = DepthImage::filled(camera.width, camera.height, k, camera.max_range, f64::INFINITY);
    for v in 0..camera.height {
        for u in 0..camera.width {
            let body = img.ray_dir(u, v);
            let dir = pose.dir_to_world(&body);
            if let Some(t) = world.raycast(&pose.position, &dir) {
                if t * body.norm() <= camera.max_range {
                    img.depths[v * camera.width + u] = t;
                }
            }
        }
    }
    if let Some(rng) = rng {
        if camera.noise_std > 0.0 {
            let normal = Normal::new(0.0, camera.noise_std).expect("validated noise std");
            for (i, d) in img.depths.iter_mut().enumerate() {
                if d.is_finite() {
                    let body_norm = img_ray_norm(&k, i, camera.width);
                    let limit = camera.max_range / body_norm;
                    *d = (*d + normal.sample(rng)).clamp(1e-3, limit);
                }
            }
        }
    }
    img
}

fn img_ray_norm(k: &Intrinsics, idx: usize, width: usize) -> f64 {
    let (u, v) = (idx % width, idx / width);
    Vector3::new(1.0, ((u as f64 + 0.5) - k.cx) / k.fx, ((v as f64 + 0.5) - k.cy) / k.fy).norm()
}

/// Primitive being tracked, with the world time at which it started.
#[derive(Debug, Clone, PartialEq)]
pub struct Executing {
    pub primitive: MotionPrimitive,
    pub start_time: f64,
}

impl Executing {
    pub fn state_at(&self, time: f64) -> VehicleState {
        self.primitive.state_at(time - self.start_time)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub vehicle: VehicleState,
    pub time: f64,
    pub executing: Option<Executing>,
}

impl SimState {
    pub fn new(vehicle: VehicleState) -> Self {
        Self { vehicle, time: 0.0, executing: None }
    }

    /// State of the tracked trajectory at `time`; the current state when idle.
    pub fn state_at(&self, time: f64) -> VehicleState {
        match &self.executing {
            Some(e) => e.state_at(time),
            None => self.vehicle,
        }
    }
}

/// Advances time by `dt` with perfect tracking; an exhausted primitive holds its end pose.
pub fn step(sim: &SimState, dt: f64) -> SimState {
    let time = sim.time + dt;
    SimState { vehicle: sim.state_at(time), time, executing: sim.executing.clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: World,
    pub start: VehicleState,
    pub camera: CameraModel,
    pub seed: u64,
    /// The run completes once the vehicle's x coordinate reaches this value.
    pub goal_x: f64,
}

impl Scenario {
    pub fn goal_reached(&self, p: &Vector3<f64>) -> bool {
        p.x >= self.goal_x
    }
}

pub const SCENARIO_NAMES: [&str; 3] = ["window", "door", "clutter_cave"];

/// Aperture edge length for the window and door.
pub const APERTURE: f64 = 0.9;

pub fn make_scenario(name: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    let (obstacles, start, goal_x) = match name {
        "window" => (window_boxes(), Vector3::zeros(), 12.2),
        "door" => (door_boxes(), Vector3::new(0.0, 0.0, 1.0), 14.2),
        "clutter_cave" => (cave_boxes(seed), Vector3::zeros(), 41.0),
        other => return Err(ScenarioError::UnknownName(other.to_string())),
    };
    Ok(Scenario {
        world: World { name: name.to_string(), obstacles },
        start: VehicleState::at_rest(start, 0.0),
        camera: CameraModel::default(),
        seed,
        goal_x,
    })
}

fn span(lo: [f64; 3], hi: [f64; 3]) -> Aabb {
    Aabb::new(Vector3::from(lo), Vector3::from(hi))
}

/// Wall slab `x ∈ [x0, x1]` over `y ∈ [y0, y1]`, `z ∈ [z0, z1]` with a
/// rectangular hole, as four boxes.
fn wall_with_hole(x: (f64, f64), y: (f64, f64), z: (f64, f64), hole_y: (f64, f64), hole_z: (f64, f64)) -> Vec<Aabb> {
    let mut out = vec![
        span([x.0, y.0, z.0], [x.1, hole_y.0, z.1]),
        span([x.0, hole_y.1, z.0], [x.1, y.1, z.1]),
        span([x.0, hole_y.0, hole_z.1], [x.1, hole_y.1, z.1]),
    ];
    if hole_z.0 > z.0 {
        out.push(span([x.0, hole_y.0, z.0], [x.1, hole_y.1, hole_z.0]));
    }
    out
}

fn window_boxes() -> Vec<Aabb> {
    let h = 0.5 * APERTURE;
    wall_with_hole((10.0, 10.2), (-8.0, 8.0), (-5.0, 5.0), (-h, h), (-h, h))
}

fn door_boxes() -> Vec<Aabb> {
    let h = 0.5 * APERTURE;
    let mut boxes = wall_with_hole((12.0, 12.2), (-6.0, 6.0), (0.0, 4.0), (-h, h), (0.0, 2.0));
    boxes.push(span([-3.0, -6.0, -0.2], [22.0, 6.0, 0.0]));
    boxes.push(span([20.0, -6.0, 0.0], [20.2, 6.0, 4.0]));
    boxes
}

fn cave_boxes(seed: u64) -> Vec<Aabb> {
    let mut boxes = vec![
        span([-2.2, -4.2, -1.7], [46.2, 4.2, -1.5]),
        span([-2.2, -4.2, 1.5], [46.2, 4.2, 1.7]),
        span([-2.2, 4.0, -1.5], [46.2, 4.2, 1.5]),
        span([-2.2, -4.2, -1.5], [46.2, -4.0, 1.5]),
        span([-2.2, -4.0, -1.5], [-2.0, 4.0, 1.5]),
    ];
    // Region 2: pillars on both sides of a clear central lane.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 20.5;
    let mut side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    while x <= 33.5 {
        let y = side * rng.random_range(0.9..=3.5);
        boxes.push(Aabb::from_center_size(Vector3::new(x, y, 0.0), Vector3::new(0.4, 0.4, 3.0)));
        x += rng.random_range(0.6..=1.4);
        side = -side;
    }
    // Region 3: narrow entrance into a low passage.
    let h = 0.5 * APERTURE;
    boxes.extend(wall_with_hole((38.0, 38.3), (-4.0, 4.0), (-1.5, 1.5), (-h, h), (-h, h)));
    boxes.push(span([38.3, -4.0, -1.5], [46.0, -1.2, 1.5]));
    boxes.push(span([38.3, 1.2, -1.5], [46.0, 4.0, 1.5]));
    boxes.push(span([38.3, -1.2, 1.0], [46.0, 1.2, 1.5]));
    boxes.push(span([38.3, -1.2, -1.5], [46.0, 1.2, -1.0]));
    boxes.push(span([46.0, -4.0, -1.5], [46.2, 4.0, 1.5]));
    boxes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub size: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSpec {
    pub position: [f64; 3],
    pub yaw: f64,
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    pub boxes: Vec<BoxSpec>,
    pub start: StartSpec,
    pub camera: CameraModel,
    pub seed: u64,
    pub goal_x: f64,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        Self {
            name: s.world.name.clone(),
            boxes: s
                .world
                .obstacles
                .iter()
                .map(|b| BoxSpec { center: b.center().into(), size: b.size().into() })
                .collect(),
            start: StartSpec { position: s.start.position.into(), yaw: s.start.yaw },
            camera: s.camera,
            seed: s.seed,
            goal_x: s.goal_x,
        }
    }
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        self.camera.validate()?;
        let mut obstacles = Vec::with_capacity(self.boxes.len());
        for b in &self.boxes {
            if b.size.iter().any(|s| !(*s > 0.0)) || b.center.iter().any(|c| !c.is_finite()) {
                return Err(ScenarioError::Invalid(format!("box {:?} must have positive size", b)));
            }
            obstacles.push(Aabb::from_center_size(Vector3::from(b.center), Vector3::from(b.size)));
        }
        Ok(Scenario {
            world: World { name: self.name, obstacles },
            start: VehicleState::at_rest(Vector3::from(self.start.position), self.start.yaw),
            camera: self.camera,
            seed: self.seed,
            goal_x: self.goal_x,
        })
    }
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: shown.clone(), source })?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|source| ScenarioError::Parse { path: shown, source })?;
    file.into_scenario()
}

/// A built-in name, or otherwise a path to a scenario JSON file.
pub fn resolve_scenario(name_or_path: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    if SCENARIO_NAMES.contains(&name_or_path) {
        make_scenario(name_or_path, seed)
    } else if Path::new(name_or_path).exists() {
        load_scenario_file(Path::new(name_or_path))
    } else {
        Err(ScenarioError::UnknownName(name_or_path.to_string()))
    }
}
