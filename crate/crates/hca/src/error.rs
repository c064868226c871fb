use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be positive and finite, got {1}")]
    NotPositive(&'static str, f64),
    #[error("alpha_min ({min}) exceeds alpha_max ({max})")]
    AlphaRange { min: f64, max: f64 },
    #[error("voxel counts must each be at least 2, got ({0}, {1}, {2})")]
    Counts(usize, usize, usize),
    #[error("{0}")]
    Invalid(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("voxel size {alpha} outside [{min}, {max}]")]
    VoxelSize { alpha: f64, min: f64, max: f64 },
    #[error("keyframe buffer is empty")]
    EmptyBuffer,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}' (expected window, door or clutter_cave)")]
    UnknownName(String),
    #[error("scenario file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario file {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trace: {0}")]
    Trace(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
