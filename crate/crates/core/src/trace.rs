//! Trace records and their line-oriented serialization.
//!
//! A trace file is JSON Lines. The first line is a [`TraceHeader`]; every
//! following line is one [`TraceEvent`] with its `tick` and a `kind` tag
//! followed by kind-specific fields, in the order the simulation produced
//! them. Within a tick that order is link, dispatch, sensor, avoidance,
//! pins, physics, snapshot.
//!
//! ```text
//! {"format":"voicebot-trace","v":1,"seed":7,"firmware":{...},"initial":{...}}
//! {"tick":0,"kind":"FrameSent","text":"forward","origin":null,"deliver_at":1}
//! {"tick":1,"kind":"CommandMatched","text":"forward","origin":null,"command":"Forward","score":1.0,"method":"Exact"}
//! {"tick":1,"kind":"MotionChanged","from":"Idle","to":"Forward"}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuators::Level;
use crate::firmware::{Avoidance, FirmwareConfig, FirmwareState, Motion, PinRole};
use crate::grammar::{Command, MatchMethod};
use crate::link::DropReason;
use crate::world::Pose;
use crate::Tick;

pub const TRACE_FORMAT: &str = "voicebot-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    NoMatch,
    /// A motion command arrived while the avoidance routine was running.
    AvoidanceActive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub pose: Pose,
    pub motion: Motion,
    pub light: bool,
    pub horn: bool,
    pub avoidance: Avoidance,
    pub last_distance_cm: f64,
    pub separation_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    FrameSent {
        text: String,
        origin: Option<String>,
        deliver_at: Tick,
    },
    FrameDropped {
        text: String,
        origin: Option<String>,
        reason: DropReason,
        separation_m: f64,
    },
    CommandMatched {
        text: String,
        origin: Option<String>,
        command: Command,
        score: f64,
        method: MatchMethod,
    },
    CommandRejected {
        text: String,
        origin: Option<String>,
        reason: RejectReason,
        command: Option<Command>,
        score: f64,
    },
    MotionChanged {
        from: Motion,
        to: Motion,
    },
    AvoidancePhase {
        phase: Avoidance,
    },
    PinWrite {
        pin: u8,
        role: PinRole,
        /// 0/1 for digital pins, duty 0..=255 for PWM pins.
        value: u8,
    },
    EchoMeasured {
        duration_us: f64,
        distance_cm: f64,
        saturated: bool,
    },
    Collision {
        attempted: Pose,
    },
    Snapshot(Snapshot),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::FrameSent { .. } => "FrameSent",
            EventKind::FrameDropped { .. } => "FrameDropped",
            EventKind::CommandMatched { .. } => "CommandMatched",
            EventKind::CommandRejected { .. } => "CommandRejected",
            EventKind::MotionChanged { .. } => "MotionChanged",
            EventKind::AvoidancePhase { .. } => "AvoidancePhase",
            EventKind::PinWrite { .. } => "PinWrite",
            EventKind::EchoMeasured { .. } => "EchoMeasured",
            EventKind::Collision { .. } => "Collision",
            EventKind::Snapshot(_) => "Snapshot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: Tick,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl TraceEvent {
    pub fn new(tick: Tick, kind: EventKind) -> Self {
        TraceEvent { tick, kind }
    }

    pub fn pin_write(tick: Tick, pin: u8, role: PinRole, value: u8) -> Self {
        Self::new(tick, EventKind::PinWrite { pin, role, value })
    }

    pub fn level(level: Level) -> u8 {
        u8::from(level == Level::High)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub v: u32,
    pub seed: u64,
    pub firmware: FirmwareConfig,
    /// Firmware state after boot, before the first tick.
    pub initial: FirmwareState,
}

impl TraceHeader {
    pub fn new(seed: u64, firmware: FirmwareConfig, initial: FirmwareState) -> Self {
        TraceHeader {
            format: TRACE_FORMAT.to_owned(),
            v: TRACE_VERSION,
            seed,
            firmware,
            initial,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    MissingHeader,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported trace format {format:?} v{v}")]
    UnsupportedVersion { format: String, v: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, TraceError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
            Ok(l) => !l.trim().is_empty(),
            Err(_) => true,
        });
        let malformed = |line: usize, e: serde_json::Error| TraceError::Malformed {
            line: line + 1,
            message: e.to_string(),
        };
        let (n, first) = lines.next().ok_or(TraceError::MissingHeader)?;
        let header: TraceHeader = serde_json::from_str(&first?).map_err(|e| malformed(n, e))?;
        if header.format != TRACE_FORMAT || header.v != TRACE_VERSION {
            return Err(TraceError::UnsupportedVersion {
                format: header.format,
                v: header.v,
            });
        }
        let mut events = Vec::new();
        for (n, line) in lines {
            events.push(serde_json::from_str(&line?).map_err(|e| malformed(n, e))?);
        }
        Ok(Trace { header, events })
    }

    pub fn parse(text: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (Tick, &Snapshot)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Snapshot(s) => Some((e.tick, s)),
            _ => None,
        })
    }
}
