//! Scenario files, the deterministic simulation loop and trace replay.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! seed = 7
//! duration = 400          # ticks of 10 ms
//! snapshot_every = 10     # optional, default 10
//!
//! [arena]
//! bounds = { min = [-1.0, -1.0], max = [3.0, 1.0] }
//! controller = [-0.5, 0.0]
//! obstacles = [{ a = [1.0, -0.5], b = [1.0, 0.5] }]
//!
//! [start]
//! x = 0.0
//! y = 0.0
//! heading = 0.0
//!
//! [[script]]
//! tick = 0
//! text = "forward"
//! ```
//!
//! Optional tables: `[body]`, `[firmware]` (with `[firmware.pins]`),
//! `[link]`, `[sensor]`, `[hbridge]`, and `[[command]]` entries in the same
//! format as `config/commands.toml` to replace the default phrases.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuators::{bridge_output, HBridgeSpec};
use crate::firmware::{
    dispatch, is_blocked, Firmware, FirmwareConfig, FirmwareState, Motion, PinBank, PinMap,
};
use crate::grammar::{Command, CommandTable};
use crate::link::{Frame, Link, LinkConfig, LinkError, SendReceipt};
use crate::trace::{EventKind, RejectReason, Snapshot, Trace, TraceEvent, TraceHeader};
use crate::world::{
    overlaps, resolve_collision, step_kinematics, Arena, Pose, RobotBody, SensorConfig, Ultrasonic,
};
use crate::{Tick, TICK_SECONDS};

const DEFAULT_SNAPSHOT_EVERY: Tick = 10;

/// Mixed into the scenario seed for the sensor noise stream.
const SENSOR_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub tick: Tick,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandEntry {
    pub kind: Command,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub duration: Tick,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: Tick,
    pub arena: Arena,
    pub start: Pose,
    #[serde(default)]
    pub body: RobotBody,
    #[serde(default)]
    pub firmware: FirmwareConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub hbridge: HBridgeSpec,
    #[serde(default, rename = "command", skip_serializing_if = "Vec::is_empty")]
    pub commands: Vec<CommandEntry>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
}

fn default_snapshot_every() -> Tick {
    DEFAULT_SNAPSHOT_EVERY
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("failed to read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

impl Scenario {
    /// A scenario in an arena with no obstacles and an empty script.
    pub fn empty(arena: Arena, start: Pose, duration: Tick) -> Self {
        Scenario {
            seed: 0,
            duration,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            arena,
            start,
            body: RobotBody::default(),
            firmware: FirmwareConfig::default(),
            link: LinkConfig::default(),
            sensor: SensorConfig::default(),
            hbridge: HBridgeSpec::default(),
            commands: Vec::new(),
            script: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always representable")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn command_table(&self) -> Result<CommandTable, ScenarioError> {
        if self.commands.is_empty() {
            return Ok(CommandTable::default());
        }
        CommandTable::new(self.commands.iter().map(|e| (e.kind, e.phrase.clone())).collect())
            .map_err(|e| invalid("command", e))
    }

    fn link_config(&self) -> LinkConfig {
        LinkConfig {
            seed: self.seed,
            ..self.link.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.snapshot_every == 0 {
            return Err(invalid("snapshot_every", "must be at least 1"));
        }
        self.arena.validate().map_err(|e| invalid("arena", e))?;
        self.body.validate().map_err(|e| invalid("body", e))?;
        self.sensor.validate().map_err(|e| invalid("sensor", e))?;
        self.firmware.validate().map_err(|e| invalid("firmware", e))?;
        self.link_config().validate().map_err(|e| invalid("link", e))?;
        if !(self.hbridge.max_wheel_speed > 0.0 && self.hbridge.max_wheel_speed.is_finite()) {
            return Err(invalid("hbridge.max_wheel_speed", "must be positive"));
        }
        self.command_table()?;
        let start = self.start;
        if ![start.x, start.y, start.heading].iter().all(|v| v.is_finite()) {
            return Err(invalid("start", "pose must be finite"));
        }
        if overlaps(start.position(), &self.arena, &self.body) {
            return Err(invalid("start", "robot overlaps an obstacle or the arena edge"));
        }
        for (i, w) in self.script.windows(2).enumerate() {
            if w[1].tick < w[0].tick {
                return Err(invalid(
                    format!("script[{}].tick", i + 1),
                    "script ticks must be ascending",
                ));
            }
        }
        for (i, entry) in self.script.iter().enumerate() {
            if entry.tick > self.duration {
                return Err(invalid(
                    format!("script[{i}].tick"),
                    format!("tick {} is past duration {}", entry.tick, self.duration),
                ));
            }
            if let Err(e) = Frame::new(entry.text.as_bytes()) {
                return Err(invalid(format!("script[{i}].text"), e));
            }
        }
        Ok(())
    }
}

/// One robot in one arena, advanced a tick at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    arena: Arena,
    body: RobotBody,
    hbridge: HBridgeSpec,
    snapshot_every: Tick,
    firmware: Firmware,
    link: Link,
    sensor: Ultrasonic,
    pose: Pose,
    now: Tick,
    pending: Vec<(String, Option<String>)>,
    header: TraceHeader,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let mut firmware = Firmware::new(scenario.firmware.clone(), scenario.command_table()?)
            .map_err(|e| invalid("firmware", e))?;
        let mut sensor = Ultrasonic::new(scenario.sensor.clone(), scenario.seed ^ SENSOR_SEED_SALT);
        let pose = scenario.start;
        firmware.boot(&mut || sensor.measure(&pose, &scenario.arena));
        let link = Link::new(scenario.link_config()).map_err(|e| invalid("link", e))?;
        let header = TraceHeader::new(scenario.seed, scenario.firmware.clone(), firmware.state().clone());
        Ok(Simulation {
            arena: scenario.arena.clone(),
            body: scenario.body.clone(),
            hbridge: scenario.hbridge.clone(),
            snapshot_every: scenario.snapshot_every,
            firmware,
            link,
            sensor,
            pose,
            now: 0,
            pending: Vec::new(),
            header,
        })
    }

    pub fn set_snapshot_every(&mut self, every: Tick) {
        self.snapshot_every = every.max(1);
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    /// The tick the next [`step`](Self::step) will run.
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn body(&self) -> &RobotBody {
        &self.body
    }

    pub fn firmware_state(&self) -> &FirmwareState {
        self.firmware.state()
    }

    pub fn pins(&self) -> &PinBank {
        self.firmware.pins()
    }

    /// Queues `text` to be sent from the controller at the start of the next
    /// tick. Fails for payloads the link would refuse.
    pub fn inject(&mut self, text: &str, origin: Option<String>) -> Result<(), LinkError> {
        Frame::new(text.as_bytes())?;
        self.pending.push((text.to_owned(), origin));
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let s = self.firmware.state();
        Snapshot {
            pose: self.pose,
            motion: s.motion,
            light: s.light,
            horn: s.horn,
            avoidance: s.avoidance,
            last_distance_cm: s.last_distance_cm,
            separation_m: self.link.separation(),
        }
    }

    /// Runs one tick and returns its events in processing order.
    pub fn step(&mut self) -> Vec<TraceEvent> {
        let now = self.now;
        let mut events = Vec::new();
        self.link
            .set_separation(self.pose.position().distance(self.arena.controller));

        for (text, origin) in std::mem::take(&mut self.pending) {
            let receipt = self
                .link
                .send_from(text.as_bytes(), origin.clone(), now)
                .expect("payload validated on inject");
            let kind = match receipt {
                SendReceipt::Delivered { deliver_at } => EventKind::FrameSent {
                    text,
                    origin,
                    deliver_at,
                },
                SendReceipt::Dropped(reason) => EventKind::FrameDropped {
                    text,
                    origin,
                    reason,
                    separation_m: self.link.separation(),
                },
            };
            events.push(TraceEvent::new(now, kind));
        }

        let (pose, arena, sensor) = (self.pose, &self.arena, &mut self.sensor);
        events.extend(
            self.firmware
                .tick(&mut self.link, &mut || sensor.measure(&pose, arena), now),
        );

        let pins = self.firmware.pins();
        let map: &PinMap = &self.firmware.config().pins;
        let v_left = bridge_output(
            pins.digital(map.in1),
            pins.digital(map.in2),
            pins.duty(map.enable_left),
            &self.hbridge,
        );
        let v_right = bridge_output(
            pins.digital(map.in3),
            pins.digital(map.in4),
            pins.duty(map.enable_right),
            &self.hbridge,
        );
        if v_left != 0.0 || v_right != 0.0 {
            let candidate = step_kinematics(self.pose, v_left, v_right, &self.body, TICK_SECONDS);
            let resolved = resolve_collision(self.pose, candidate, &self.arena, &self.body);
            if resolved.collided {
                events.push(TraceEvent::new(
                    now,
                    EventKind::Collision { attempted: candidate },
                ));
            }
            self.pose = resolved.pose;
        }

        if now.is_multiple_of(self.snapshot_every) {
            events.push(TraceEvent::new(now, EventKind::Snapshot(self.snapshot())));
        }
        self.now += 1;
        events
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: Trace,
    pub final_state: FirmwareState,
    pub final_pose: Pose,
}

/// Runs `scenario.duration` ticks, injecting scripted utterances at their
/// ticks. Output depends only on the scenario (including its seed).
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome, ScenarioError> {
    let mut sim = Simulation::new(scenario)?;
    let mut script = scenario.script.iter().peekable();
    let mut events = Vec::new();
    for tick in 0..scenario.duration {
        while let Some(entry) = script.next_if(|e| e.tick == tick) {
            sim.inject(&entry.text, entry.client_id.clone())
                .map_err(|e| invalid("script", e))?;
        }
        events.extend(sim.step());
    }
    Ok(RunOutcome {
        trace: Trace {
            header: sim.header().clone(),
            events,
        },
        final_state: sim.firmware_state().clone(),
        final_pose: sim.pose(),
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("corrupt trace at tick {tick}: {reason}")]
    CorruptTrace { tick: Tick, reason: String },
}

/// Rebuilds the final firmware state from a trace.
///
/// Matched commands go back through [`dispatch`]; avoidance phases and echo
/// readings are taken from their events. Motion changes, avoidance
/// rejections and snapshots are cross-checked against the rebuilt state.
pub fn replay(trace: &Trace) -> Result<FirmwareState, ReplayError> {
    let mut state = trace.header.initial.clone();
    let one_shot = trace.header.firmware.safety_one_shot;
    let mut last_tick = 0;
    for event in &trace.events {
        let tick = event.tick;
        let corrupt = |reason: String| ReplayError::CorruptTrace { tick, reason };
        if tick < last_tick {
            return Err(corrupt(format!("tick goes backwards from {last_tick}")));
        }
        last_tick = tick;
        match &event.kind {
            EventKind::CommandMatched { command, .. } => {
                state = dispatch(&state, *command);
            }
            EventKind::CommandRejected {
                reason: RejectReason::AvoidanceActive,
                command,
                ..
            } => {
                let blocked = command.is_some_and(|c| is_blocked(&state, c));
                if !blocked {
                    return Err(corrupt("command rejected while no avoidance was running".into()));
                }
            }
            EventKind::AvoidancePhase { phase } => {
                state.avoidance = *phase;
                state.motion = phase.motion().unwrap_or(Motion::Idle);
                if !phase.is_active() && one_shot {
                    state.safety_armed = false;
                }
            }
            EventKind::MotionChanged { to, .. } => {
                if state.motion != *to {
                    return Err(corrupt(format!(
                        "motion change to {to:?} but replay has {:?}",
                        state.motion
                    )));
                }
            }
            EventKind::EchoMeasured { distance_cm, .. } => {
                state.last_distance_cm = *distance_cm;
            }
            EventKind::Snapshot(s) => {
                let seen = (s.motion, s.light, s.horn, s.avoidance, s.last_distance_cm);
                let have = (
                    state.motion,
                    state.light,
                    state.horn,
                    state.avoidance,
                    state.last_distance_cm,
                );
                if seen != have {
                    return Err(corrupt(format!(
                        "snapshot {seen:?} disagrees with replay {have:?}"
                    )));
                }
            }
            _ => {}
        }
    }
    Ok(state)
}
