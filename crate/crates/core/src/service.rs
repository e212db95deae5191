//! Live operation over WebSocket.
//!
//! One engine thread owns the [`Simulation`] and steps it every `tick_ms`
//! of wall-clock time. Client connections run on a tokio runtime and talk
//! to the engine only through queues: utterances and control messages go
//! in over a channel, serialized server messages come back over a
//! broadcast channel so every client sees the same byte stream.
//!
//! # Protocol (v1)
//!
//! Every message is one JSON text frame carrying `"v": 1`.
//!
//! Client to server:
//!
//! ```json
//! {"type":"utterance","v":1,"text":"light on","client_id":"alice"}
//! {"type":"control","v":1,"action":"pause","client_id":"alice"}
//! ```
//!
//! `action` is `pause`, `resume` or `reset`. Reset rebuilds the simulation
//! from the scenario, seed included.
//!
//! Server to client:
//!
//! ```json
//! {"type":"hello","v":1,"payload":{"epoch":0,"tick_ms":10,"arena":{...},...}}
//! {"type":"snapshot","v":1,"payload":{"tick":12,"kind":"Snapshot","pose":{...},...}}
//! {"type":"event","v":1,"payload":{"tick":12,"kind":"CommandMatched",...}}
//! {"type":"error","v":1,"payload":{"message":"..."}}
//! ```
//!
//! `hello` is sent on connect and broadcast again after every reset, with
//! `epoch` incremented; ticks restart from 0 in the new epoch. Snapshot and
//! event payloads are trace events exactly as they appear in trace files.

use std::net::SocketAddr;
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, oneshot, watch};

use crate::grammar::Command;
use crate::link::Frame;
use crate::scenario::{Scenario, ScenarioError, Simulation};
use crate::trace::{EventKind, TraceEvent};
use crate::world::{Arena, RobotBody};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlAction {
    Pause,
    Resume,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Utterance {
        v: u32,
        text: String,
        client_id: String,
    },
    Control {
        v: u32,
        action: ControlAction,
        client_id: String,
    },
}

impl ClientMessage {
    pub fn utterance(text: impl Into<String>, client_id: impl Into<String>) -> Self {
        ClientMessage::Utterance {
            v: PROTOCOL_VERSION,
            text: text.into(),
            client_id: client_id.into(),
        }
    }

    pub fn control(action: ControlAction, client_id: impl Into<String>) -> Self {
        ClientMessage::Control {
            v: PROTOCOL_VERSION,
            action,
            client_id: client_id.into(),
        }
    }

    /// Parses and checks one client text frame.
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
        let v = match &msg {
            ClientMessage::Utterance { v, .. } | ClientMessage::Control { v, .. } => *v,
        };
        if v != PROTOCOL_VERSION {
            return Err(format!(
                "unsupported protocol version {v}, expected {PROTOCOL_VERSION}"
            ));
        }
        if let ClientMessage::Utterance { text, .. } = &msg {
            Frame::new(text.as_bytes()).map_err(|e| format!("utterance rejected: {e}"))?;
        }
        Ok(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub epoch: u64,
    pub tick_ms: u64,
    pub arena: Arena,
    pub body: RobotBody,
    pub sensor_max_range_cm: f64,
    pub fuzzy_threshold: f64,
    /// Canonical phrases in table order.
    pub commands: Vec<(Command, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello { v: u32, payload: Hello },
    Snapshot { v: u32, payload: TraceEvent },
    Event { v: u32, payload: TraceEvent },
    Error { v: u32, payload: ErrorPayload },
}

impl ServerMessage {
    pub fn from_event(event: TraceEvent) -> Self {
        let v = PROTOCOL_VERSION;
        match event.kind {
            EventKind::Snapshot(_) => ServerMessage::Snapshot { v, payload: event },
            _ => ServerMessage::Event { v, payload: event },
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error {
            v: PROTOCOL_VERSION,
            payload: ErrorPayload {
                message: message.into(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// The simulation side of a live session, without any pacing or I/O.
///
/// Feeding it the same messages at the same ticks yields the same events
/// as a batch run whose script holds those utterances.
#[derive(Debug)]
pub struct LiveSession {
    scenario: Scenario,
    sim: Simulation,
    paused: bool,
    epoch: u64,
    tick_ms: u64,
}

impl LiveSession {
    pub fn new(scenario: Scenario, tick_ms: u64) -> Result<Self, ScenarioError> {
        let sim = Self::fresh(&scenario)?;
        Ok(LiveSession {
            scenario,
            sim,
            paused: false,
            epoch: 0,
            tick_ms,
        })
    }

    fn fresh(scenario: &Scenario) -> Result<Simulation, ScenarioError> {
        let mut sim = Simulation::new(scenario)?;
        sim.set_snapshot_every(1);
        Ok(sim)
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn hello(&self) -> ServerMessage {
        let table = self.scenario.command_table().expect("validated scenario");
        ServerMessage::Hello {
            v: PROTOCOL_VERSION,
            payload: Hello {
                epoch: self.epoch,
                tick_ms: self.tick_ms,
                arena: self.scenario.arena.clone(),
                body: self.scenario.body.clone(),
                sensor_max_range_cm: self.scenario.sensor.max_range_cm,
                fuzzy_threshold: self.scenario.firmware.fuzzy_threshold,
                commands: table.entries().map(|(c, p)| (c, p.to_owned())).collect(),
            },
        }
    }

    /// Applies a client message. Returns a message to broadcast, if any.
    pub fn apply(&mut self, msg: ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::Utterance { text, client_id, .. } => {
                if let Err(e) = self.sim.inject(&text, Some(client_id)) {
                    return Some(ServerMessage::error(format!("utterance rejected: {e}")));
                }
                None
            }
            ClientMessage::Control { action, .. } => match action {
                ControlAction::Pause => {
                    self.paused = true;
                    None
                }
                ControlAction::Resume => {
                    self.paused = false;
                    None
                }
                ControlAction::Reset => {
                    self.sim = Self::fresh(&self.scenario).expect("scenario validated at start");
                    self.epoch += 1;
                    Some(self.hello())
                }
            },
        }
    }

    /// Runs one tick unless paused.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        if self.paused {
            return Vec::new();
        }
        self.sim
            .step()
            .into_iter()
            .map(ServerMessage::from_event)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub host: String,
    /// 0 picks a free port.
    pub port: u16,
    pub tick_ms: u64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            host: "127.0.0.1".into(),
            port: 8080,
            tick_ms: 10,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: {source}")]
    PortUnavailable {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("tick_ms must be at least 1")]
    InvalidTick,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

enum EngineMsg {
    Client(ClientMessage),
    Shutdown,
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::Sender<EngineMsg>,
    outbound: broadcast::Sender<Arc<str>>,
    hello: watch::Receiver<Arc<str>>,
}

fn run_engine(
    mut session: LiveSession,
    inbound: mpsc::Receiver<EngineMsg>,
    outbound: broadcast::Sender<Arc<str>>,
    hello: watch::Sender<Arc<str>>,
) {
    let period = Duration::from_millis(session.tick_ms);
    let mut deadline = Instant::now() + period;
    let publish = |msg: ServerMessage| {
        // no subscribers is fine
        let _ = outbound.send(Arc::from(msg.to_json()));
    };
    loop {
        loop {
            match inbound.try_recv() {
                Ok(EngineMsg::Client(msg)) => {
                    if let Some(reply) = session.apply(msg) {
                        if let ServerMessage::Hello { .. } = reply {
                            hello.send_replace(Arc::from(reply.to_json()));
                        }
                        publish(reply);
                    }
                }
                Ok(EngineMsg::Shutdown) | Err(mpsc::TryRecvError::Disconnected) => return,
                Err(mpsc::TryRecvError::Empty) => break,
            }
        }
        for msg in session.tick() {
            publish(msg);
        }
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
            deadline += period;
        } else {
            // fell behind; do not try to catch up in a burst
            deadline = now + period;
        }
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client_session(socket, state))
}

async fn index() -> &'static str {
    "voicebot teleoperation service: connect a WebSocket to /ws (protocol v1)\n"
}

async fn client_session(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let mut updates = state.outbound.subscribe();
    let hello = state.hello.borrow().clone();
    if sink.send(Message::Text(hello.as_ref().into())).await.is_err() {
        return;
    }
    let (reply_tx, mut replies) = tokio::sync::mpsc::unbounded_channel::<String>();

    let writer = async move {
        loop {
            let text: Arc<str> = tokio::select! {
                update = updates.recv() => match update {
                    Ok(text) => text,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                reply = replies.recv() => match reply {
                    Some(text) => Arc::from(text),
                    None => break,
                },
            };
            if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                break;
            }
        }
    };

    let reader = async move {
        while let Some(Ok(msg)) = stream.next().await {
            let reply = match msg {
                Message::Text(text) => match ClientMessage::parse(text.as_str()) {
                    Ok(msg) => {
                        if state.inbound.send(EngineMsg::Client(msg)).is_err() {
                            break;
                        }
                        continue;
                    }
                    Err(e) => ServerMessage::error(e),
                },
                Message::Binary(_) => ServerMessage::error("binary frames are not supported"),
                Message::Close(_) => break,
                _ => continue,
            };
            if reply_tx.send(reply.to_json()).is_err() {
                break;
            }
        }
    };

    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
}

/// A running service. Dropping it without [`shutdown`](Self::shutdown)
/// leaves the server running until the runtime stops.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    engine: Option<thread::JoinHandle<()>>,
    inbound: mpsc::Sender<EngineMsg>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    /// Waits until the server stops on its own.
    pub async fn wait(mut self) -> Result<(), ServiceError> {
        let server = &mut self.server;
        let res = server.await.map_err(std::io::Error::other)?;
        self.stop_engine();
        Ok(res?)
    }

    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let server = &mut self.server;
        let res = server.await.map_err(std::io::Error::other)?;
        self.stop_engine();
        Ok(res?)
    }

    fn stop_engine(&mut self) {
        let _ = self.inbound.send(EngineMsg::Shutdown);
        if let Some(engine) = self.engine.take() {
            let _ = engine.join();
        }
    }
}

/// Binds the listener and starts the engine thread and server task.
pub async fn start(scenario: Scenario, opts: &ServeOptions) -> Result<ServiceHandle, ServiceError> {
    if opts.tick_ms == 0 {
        return Err(ServiceError::InvalidTick);
    }
    let session = LiveSession::new(scenario, opts.tick_ms)?;
    let addr = format!("{}:{}", opts.host, opts.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::PortUnavailable { addr, source })?;
    let local = listener.local_addr()?;

    let (in_tx, in_rx) = mpsc::channel();
    let (out_tx, _) = broadcast::channel(4096);
    let (hello_tx, hello_rx) = watch::channel(Arc::from(session.hello().to_json()));
    let engine = {
        let out_tx = out_tx.clone();
        thread::Builder::new()
            .name("voicebot-engine".into())
            .spawn(move || run_engine(session, in_rx, out_tx, hello_tx))?
    };

    let state = AppState {
        inbound: in_tx.clone(),
        outbound: out_tx,
        hello: hello_rx,
    };
    let app = Router::new()
        .route("/", get(index))
        .route("/ws", get(ws_handler))
        .with_state(state);
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });
    Ok(ServiceHandle {
        addr: local,
        stop: Some(stop_tx),
        server,
        engine: Some(engine),
        inbound: in_tx,
    })
}

/// Runs the service until interrupted with Ctrl-C.
pub fn serve(scenario: Scenario, opts: &ServeOptions) -> Result<(), ServiceError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let handle = start(scenario, opts).await?;
        eprintln!("serving on {}", handle.ws_url());
        tokio::signal::ctrl_c().await?;
        handle.shutdown().await
    })
}
