//! Live WebSocket session for the operator UI.
//!
//! Each connection gets its own simulation. The server first sends the
//! scenario geometry, then runs one planning round every Δt_p and streams a
//! `state` message per round and a horizontal `map_slice` every other round.
//! Operator `input` messages land in a latest-value mailbox that the round
//! reads once; input older than 200 ms reads as zero.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use crate::config::PlannerConfig;
use crate::motion_primitives::JoystickInput;
use crate::occupancy_map::{LocalMap, VoxelClass};
use crate::pipeline::{ResolutionMode, RoundOutput, Session};
use crate::sim_world::{BoxSpec, Scenario, ScenarioFile};

pub const DEFAULT_PORT: u16 = 8642;
pub const DEAD_MAN: Duration = Duration::from_millis(200);

/// WebSocket close code for a payload that does not parse as an input message.
pub const CLOSE_INVALID_PAYLOAD: u16 = 1007;
/// Close code for a protocol violation such as a non-increasing `seq`.
pub const CLOSE_POLICY: u16 = 1008;
/// Close code for binary frames.
pub const CLOSE_UNSUPPORTED: u16 = 1003;
/// Close code when the simulation fails internally.
pub const CLOSE_INTERNAL: u16 = 1011;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BboxMsg {
    pub center: [f64; 3],
    pub yaw: f64,
    pub size: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireMessage {
    Input {
        axes: [f64; 3],
        seq: u64,
    },
    State {
        time_s: f64,
        pos: [f64; 3],
        yaw: f64,
        speed_mps: f64,
        voxel_size_m: f64,
        bbox: BboxMsg,
        outcome: String,
        plan_time_s: f64,
        /// Sequence number of the input used in this round.
        seq: Option<u64>,
    },
    MapSlice {
        z_index: usize,
        voxel_size_m: f64,
        nx: usize,
        ny: usize,
        /// World position and yaw of the map center.
        origin: [f64; 3],
        yaw: f64,
        /// Run-length encoded classes over the slice, x fastest: ["F" | "O" | "U", count].
        classes: Vec<(String, usize)>,
    },
    Scenario {
        name: String,
        boxes: Vec<BoxSpec>,
        goal_x: f64,
    },
}

/// Latest-value input slot with a dead-man timeout.
#[derive(Debug, Clone, Default)]
pub struct Mailbox {
    input: JoystickInput,
    seq: Option<u64>,
    at: Option<Instant>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MailboxError {
    StaleSeq { last: u64, got: u64 },
}

impl Mailbox {
    /// Stores axes (clamped to [−1, 1]); `seq` must exceed the previous one.
    pub fn post(&mut self, axes: [f64; 3], seq: u64, now: Instant) -> Result<(), MailboxError> {
        if let Some(last) = self.seq {
            if seq <= last {
                return Err(MailboxError::StaleSeq { last, got: seq });
            }
        }
        self.input = JoystickInput::from_axes(axes);
        self.seq = Some(seq);
        self.at = Some(now);
        Ok(())
    }

    /// Current input, zeroed once it is older than `timeout`, and the last seq seen.
    pub fn read(&self, now: Instant, timeout: Duration) -> (JoystickInput, Option<u64>) {
        let fresh = self.at.is_some_and(|at| now.saturating_duration_since(at) <= timeout);
        (if fresh { self.input } else { JoystickInput::default() }, self.seq)
    }
}

/// Parses a client frame; only `input` messages are accepted.
pub fn parse_input(text: &str) -> Result<([f64; 3], u64), String> {
    match serde_json::from_str::<WireMessage>(text) {
        Ok(WireMessage::Input { axes, seq }) => Ok((axes, seq)),
        Ok(_) => Err("clients may only send input messages".into()),
        Err(e) => Err(format!("malformed message: {e}")),
    }
}

pub fn scenario_message(scenario: &Scenario) -> WireMessage {
    let file = ScenarioFile::from(scenario);
    WireMessage::Scenario { name: file.name, boxes: file.boxes, goal_x: file.goal_x }
}

pub fn state_message(session: &Session, out: &RoundOutput, seq: Option<u64>) -> WireMessage {
    let v = session.sim.vehicle;
    let n = session.cfg.counts;
    let alpha = out.telemetry.voxel_size_m;
    let outcome = if out.collided { "collided".to_string() } else { out.telemetry.outcome.clone() };
    WireMessage::State {
        time_s: session.time(),
        pos: v.position.into(),
        yaw: v.yaw,
        speed_mps: v.speed(),
        voxel_size_m: alpha,
        bbox: BboxMsg {
            center: v.position.into(),
            yaw: v.yaw,
            size: [alpha * n.nx as f64, alpha * n.ny as f64, alpha * n.nz as f64],
        },
        outcome,
        plan_time_s: out.telemetry.plan_time_s,
        seq,
    }
}

/// Horizontal slice through the map center (the vehicle's height).
pub fn map_slice_message(map: &LocalMap) -> WireMessage {
    let n = map.counts;
    let z_index = n.nz / 2;
    let mut classes: Vec<(String, usize)> = Vec::new();
    for iy in 0..n.ny {
        for ix in 0..n.nx {
            let label = match map.classify(n.flat([ix, iy, z_index])) {
                VoxelClass::Free => "F",
                VoxelClass::Occupied => "O",
                VoxelClass::Unknown => "U",
            };
            match classes.last_mut() {
                Some((l, count)) if l == label => *count += 1,
                _ => classes.push((label.to_string(), 1)),
            }
        }
    }
    WireMessage::MapSlice {
        z_index,
        voxel_size_m: map.voxel_size,
        nx: n.nx,
        ny: n.ny,
        origin: map.origin_state.position.into(),
        yaw: map.origin_state.yaw,
        classes,
    }
}

struct AppState {
    scenario: Scenario,
    cfg: PlannerConfig,
}

pub fn router(scenario: Scenario, cfg: PlannerConfig) -> Router {
    Router::new()
        .route("/", get(ws_handler))
        .route("/ws", get(ws_handler))
        .with_state(Arc::new(AppState { scenario, cfg }))
}

/// Serves on an already bound listener until the task is dropped.
pub async fn serve_on(listener: TcpListener, scenario: Scenario, cfg: PlannerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(scenario, cfg)).await
}

pub async fn serve(port: u16, scenario: Scenario, cfg: PlannerConfig) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = TcpListener::bind(addr).await?;
    log::info!("live server on ws://{}", listener.local_addr()?);
    serve_on(listener, scenario, cfg).await
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| handle_socket(socket, app))
}

fn text(msg: &WireMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("wire messages serialize").into())
}

fn close(code: u16, reason: &str) -> Message {
    Message::Close(Some(CloseFrame { code, reason: reason.chars().take(120).collect::<String>().into() }))
}

async fn handle_socket(socket: WebSocket, app: Arc<AppState>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::channel::<Message>(64);
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            let last = matches!(msg, Message::Close(_));
            if sink.send(msg).await.is_err() || last {
                break;
            }
        }
    });
    if tx.send(text(&scenario_message(&app.scenario))).await.is_err() {
        return;
    }
    let mailbox = Arc::new(Mutex::new(Mailbox::default()));
    let sim = tokio::spawn(sim_loop(app.clone(), mailbox.clone(), tx.clone()));
    while let Some(frame) = stream.next().await {
        match frame {
            Ok(Message::Text(t)) => {
                let parsed = parse_input(t.as_str());
                let result = parsed.map_err(|e| (CLOSE_INVALID_PAYLOAD, e)).and_then(|(axes, seq)| {
                    let mut mb = mailbox.lock().expect("mailbox lock");
                    mb.post(axes, seq, Instant::now()).map_err(|e| (CLOSE_POLICY, format!("{e:?}")))
                });
                if let Err((code, reason)) = result {
                    log::warn!("closing connection: {reason}");
                    let _ = tx.send(close(code, &reason)).await;
                    break;
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = tx.send(close(CLOSE_UNSUPPORTED, "binary frames are not supported")).await;
                break;
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }
    sim.abort();
    let _ = sim.await;
    drop(tx);
    let _ = tokio::time::timeout(Duration::from_secs(1), writer).await;
}

async fn sim_loop(app: Arc<AppState>, mailbox: Arc<Mutex<Mailbox>>, tx: mpsc::Sender<Message>) {
    let mode = ResolutionMode::Adaptive { alpha_min: app.cfg.alpha_min, alpha_max: app.cfg.alpha_max };
    let mut session = match Session::new(app.scenario.clone(), &app.cfg, mode) {
        Ok(s) => s,
        Err(e) => {
            let _ = tx.send(close(CLOSE_INTERNAL, &e.to_string())).await;
            return;
        }
    };
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(app.cfg.dt_plan));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        ticker.tick().await;
        if session.collided {
            continue;
        }
        let (input, seq) = mailbox.lock().expect("mailbox lock").read(Instant::now(), DEAD_MAN);
        let joined = tokio::task::spawn_blocking(move || {
            let out = session.run_round(&input);
            (session, out)
        })
        .await;
        let Ok((s, out)) = joined else {
            return;
        };
        session = s;
        let out = match out {
            Ok(out) => out,
            Err(e) => {
                let _ = tx.send(close(CLOSE_INTERNAL, &e.to_string())).await;
                return;
            }
        };
        // Telemetry is best effort: a slow client drops frames instead of stalling the loop.
        let _ = tx.try_send(text(&state_message(&session, &out, seq)));
        if session.round.is_multiple_of(2) {
            if let Some(map) = &session.planner.backend.map {
                let _ = tx.try_send(text(&map_slice_message(map)));
            }
        }
    }
}
