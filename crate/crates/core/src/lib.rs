//! Deterministic simulator and teleoperation stack for a voice-commanded
//! differential-drive robot.
//!
//! The pieces, from the operator inward:
//!
//! - [`grammar`]: normalizes utterances and matches them to [`Command`]s,
//!   exactly or by bigram cosine similarity.
//! - [`link`]: the newline-framed serial Bluetooth channel with range gating
//!   and seeded loss.
//! - [`firmware`]: the control loop: dispatch, ultrasonic safety routine,
//!   pin writes.
//! - [`actuators`]: H-bridge and relay models turning pins into wheel speeds
//!   and load states.
//! - [`world`]: kinematics, arena geometry, ultrasonic ray casting.
//! - [`scenario`]: scenario files, the simulation loop, replay.
//! - [`trace`]: trace events and their JSON Lines format.
//! - [`service`]: a WebSocket server for live operation.
//!
//! Time advances in ticks of [`TICK_SECONDS`].

pub mod actuators;
pub mod firmware;
pub mod grammar;
pub mod link;
pub mod scenario;
pub mod service;
pub mod trace;
pub mod world;

/// Simulation clock unit.
pub type Tick = u64;

/// Simulated seconds per tick.
pub const TICK_SECONDS: f64 = 0.01;

pub use firmware::{Firmware, FirmwareConfig, FirmwareState};
pub use grammar::{Command, CommandTable, MatchResult};
pub use scenario::{replay, run_scenario, RunOutcome, Scenario, Simulation};
pub use trace::{Trace, TraceEvent};
