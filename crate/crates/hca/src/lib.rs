//! Adaptive-resolution local planning for multirotor teleoperation.
//!
//! Each 10 Hz round rebuilds a body-frame occupancy map from the two most
//! recent depth keyframes, computes a distance field over it and checks the
//! operator's motion primitive plus its stopping action. The voxel size is
//! adapted per round, which trades map extent (and therefore the safe forward
//! speed) against the ability to resolve narrow openings.

pub mod config;
pub mod distance_field;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hca_planner;
pub mod motion_primitives;
pub mod occupancy_map;
pub mod pipeline;
pub mod server;
pub mod sim_world;

pub use config::{PlannerConfig, SensorModel, SpeedLimits};
pub use error::{ConfigError, HarnessError, MapError, ScenarioError};
