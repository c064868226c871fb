//! Scripted runs: joystick traces in, telemetry and summary metrics out.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PlannerConfig;
use crate::error::HarnessError;
use crate::motion_primitives::JoystickInput;
use crate::pipeline::{ResolutionMode, Session, TelemetryRow};
use crate::sim_world::Scenario;

pub const TELEMETRY_HEADER: [&str; 9] =
    ["time_s", "x_m", "y_m", "z_m", "speed_mps", "voxel_size_m", "levels_tried", "outcome", "plan_time_s"];

/// Operator axes over time, held constant between entries.
#[derive(Debug, Clone, PartialEq)]
pub struct JoystickTrace {
    pub entries: Vec<(f64, JoystickInput)>,
}

#[derive(Debug, Deserialize)]
struct TraceRecord {
    time_s: f64,
    ax_forward: f64,
    ax_vertical: f64,
    ax_yaw: f64,
}

impl JoystickTrace {
    pub fn new(entries: Vec<(f64, [f64; 3])>) -> Result<Self, HarnessError> {
        if entries.is_empty() {
            return Err(HarnessError::Trace("trace has no entries".into()));
        }
        let mut out = Vec::with_capacity(entries.len());
        for (i, (t, axes)) in entries.into_iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(HarnessError::Trace(format!("row {}: time {t} is not a nonnegative number", i + 1)));
            }
            if let Some((prev, _)) = out.last() {
                if t <= *prev {
                    return Err(HarnessError::Trace(format!("row {}: times must be strictly increasing", i + 1)));
                }
            }
            if axes.iter().any(|a| !(-1.0..=1.0).contains(a)) {
                return Err(HarnessError::Trace(format!("row {}: axes must lie in [-1, 1]", i + 1)));
            }
            out.push((t, JoystickInput::from_axes(axes)));
        }
        Ok(Self { entries: out })
    }

    /// Same input from t = 0 until `duration`.
    pub fn constant(axes: [f64; 3], duration: f64) -> Self {
        let input = JoystickInput::from_axes(axes);
        Self { entries: vec![(0.0, input), (duration.max(f64::MIN_POSITIVE), input)] }
    }

    pub fn from_csv_str(text: &str) -> Result<Self, HarnessError> {
        Self::from_reader(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = fs::File::open(path)?;
        Self::from_reader(file)
    }

    fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, HarnessError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let r: TraceRecord = rec?;
            rows.push((r.time_s, [r.ax_forward, r.ax_vertical, r.ax_yaw]));
        }
        Self::new(rows)
    }

    pub fn duration(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.0)
    }

    /// Zero-order hold; zero input before the first entry.
    pub fn sample(&self, t: f64) -> JoystickInput {
        let idx = self.entries.partition_point(|(te, _)| *te <= t);
        if idx == 0 {
            JoystickInput::default()
        } else {
            self.entries[idx - 1].1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// When false, plan times are reported as 0 so that reruns are byte-identical.
    pub record_plan_time: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { record_plan_time: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: ResolutionMode,
    pub total_time_s: f64,
    pub avg_speed_mps: f64,
    pub max_speed_mps: f64,
    pub min_ground_truth_clearance_m: f64,
    pub completed: bool,
    pub collided: bool,
    pub rounds: usize,
    pub fallback_rounds: usize,
    pub distance_m: f64,
    pub min_voxel_size_m: f64,
    pub max_voxel_size_m: f64,
    pub mean_plan_time_s: f64,
    pub p99_plan_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<TelemetryRow>,
    pub summary: RunSummary,
}

/// Runs the full loop until the trace ends, the goal is reached or the
/// vehicle hits an obstacle.
pub fn run(
    scenario: &Scenario,
    mode: ResolutionMode,
    trace: &JoystickTrace,
    cfg: &PlannerConfig,
    opts: RunOptions,
) -> Result<RunReport, HarnessError> {
    let mut session = Session::new(scenario.clone(), cfg, mode)?;
    let mut rows = Vec::new();
    let mut min_clearance = session.start_clearance();
    let mut distance = 0.0;
    let mut max_speed: f64 = 0.0;
    let mut completed = false;
    while session.time() < trace.duration() - 1e-9 {
        let input = trace.sample(session.time());
        let mut prev = session.position();
        let out = session.run_round(&input)?;
        for (_, s) in &out.segment {
            distance += (s.position - prev).norm();
            prev = s.position;
            max_speed = max_speed.max(s.speed());
        }
        min_clearance = min_clearance.min(out.min_clearance);
        let mut row = out.telemetry;
        if !opts.record_plan_time {
            row.plan_time_s = 0.0;
        }
        log::debug!(
            "t={:.2} x={:.2} v={:.2} alpha={:.2} {}",
            row.time_s,
            row.position[0],
            row.speed_mps,
            row.voxel_size_m,
            row.outcome
        );
        rows.push(row);
        if out.collided {
            log::warn!("ground-truth collision at t={:.2}", session.time());
            break;
        }
        if out.goal_reached {
            completed = true;
            break;
        }
    }
    let total_time = session.time();
    let plan_times: Vec<f64> = rows.iter().map(|r| r.plan_time_s).collect();
    let (mean_plan, p99_plan) = plan_time_stats(&plan_times);
    let summary = RunSummary {
        scenario: scenario.world.name.clone(),
        mode,
        total_time_s: total_time,
        avg_speed_mps: if total_time > 0.0 { distance / total_time } else { 0.0 },
        max_speed_mps: max_speed,
        min_ground_truth_clearance_m: min_clearance,
        completed,
        collided: session.collided,
        rounds: rows.len(),
        fallback_rounds: rows.iter().filter(|r| r.outcome == "fallback").count(),
        distance_m: distance,
        min_voxel_size_m: rows.iter().map(|r| r.voxel_size_m).fold(f64::INFINITY, f64::min),
        max_voxel_size_m: rows.iter().map(|r| r.voxel_size_m).fold(0.0, f64::max),
        mean_plan_time_s: mean_plan,
        p99_plan_time_s: p99_plan,
    };
    log::info!(
        "{}: completed={} collided={} rounds={} time={:.1}s max_speed={:.2}",
        summary.scenario,
        summary.completed,
        summary.collided,
        summary.rounds,
        summary.total_time_s,
        summary.max_speed_mps
    );
    Ok(RunReport { rows, summary })
}

/// Mean and nearest-rank 99th percentile.
pub fn plan_time_stats(times: &[f64]) -> (f64, f64) {
    if times.is_empty() {
        return (0.0, 0.0);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    (mean, sorted[rank - 1])
}

/// Telemetry as CSV text with fixed precision.
pub fn telemetry_csv(rows: &[TelemetryRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TELEMETRY_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:.3}", r.time_s),
            format!("{:.6}", r.position[0]),
            format!("{:.6}", r.position[1]),
            format!("{:.6}", r.position[2]),
            format!("{:.6}", r.speed_mps),
            format!("{:.4}", r.voxel_size_m),
            r.levels_tried.to_string(),
            r.outcome.clone(),
            format!("{:.6}", r.plan_time_s),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `telemetry.csv` and `summary.json` into `out_dir`, creating it if needed.
pub fn write_report(report: &RunReport, out_dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("telemetry.csv"), telemetry_csv(&report.rows)?)?;
    let mut json = serde_json::to_string_pretty(&report.summary)?;
    json.push('\n');
    fs::write(out_dir.join("summary.json"), json)?;
    Ok(())
}
