//! Tick-driven re-creation of the robot's microcontroller sketch.
//!
//! Each [`Firmware::tick`] runs the main loop body once, in a fixed order:
//!
//! 1. drain the serial link, normalize and match each frame, dispatch;
//! 2. trigger the ultrasonic sensor and store the distance;
//! 3. if driving forward inside the safety distance, start avoidance;
//! 4. advance a running avoidance routine by one tick;
//! 5. write the motor and relay pins.
//!
//! The avoidance routine is halt (one tick), reverse for
//! `backward_duration` ticks, pivot left for `turn_duration` ticks, then
//! idle. Motion commands received meanwhile are dropped; light and horn
//! commands still apply.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuators::Level;
use crate::grammar::{normalize, Command, CommandTable, MatchMethod, Matcher, DEFAULT_FUZZY_THRESHOLD};
use crate::link::Link;
use crate::trace::{EventKind, RejectReason, TraceEvent};
use crate::world::EchoMeasurement;
use crate::Tick;

/// Digital I/O pins on the board.
pub const DIGITAL_PINS: u8 = 14;
/// Pins able to emit PWM.
pub const PWM_PINS: [u8; 6] = [3, 5, 6, 9, 10, 11];
/// Hardware serial RX/TX, wired to the Bluetooth module.
pub const SERIAL_PINS: [u8; 2] = [0, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Motion {
    Idle,
    Forward,
    Backward,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Avoidance {
    Inactive,
    Halting,
    /// Ticks of reversing left, including the current one.
    Backing(u32),
    /// Ticks of turning left, including the current one.
    Turning(u32),
}

impl Avoidance {
    pub fn is_active(self) -> bool {
        self != Avoidance::Inactive
    }

    /// Motion the routine imposes while in this phase.
    pub fn motion(self) -> Option<Motion> {
        match self {
            Avoidance::Inactive => None,
            Avoidance::Halting => Some(Motion::Idle),
            Avoidance::Backing(_) => Some(Motion::Backward),
            Avoidance::Turning(_) => Some(Motion::Left),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PinRole {
    In1,
    In2,
    In3,
    In4,
    EnableLeft,
    EnableRight,
    LightRelay,
    HornRelay,
    Trigger,
    Echo,
}

/// Pin assignment for every named role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinMap {
    pub in1: u8,
    pub in2: u8,
    pub in3: u8,
    pub in4: u8,
    pub enable_left: u8,
    pub enable_right: u8,
    pub light_relay: u8,
    pub horn_relay: u8,
    pub trigger: u8,
    pub echo: u8,
}

impl Default for PinMap {
    fn default() -> Self {
        PinMap {
            in1: 2,
            in2: 4,
            in3: 8,
            in4: 12,
            enable_left: 5,
            enable_right: 10,
            light_relay: 11,
            horn_relay: 13,
            trigger: 7,
            echo: 6,
        }
    }
}

impl PinMap {
    pub fn roles(&self) -> [(PinRole, u8); 10] {
        [
            (PinRole::In1, self.in1),
            (PinRole::In2, self.in2),
            (PinRole::In3, self.in3),
            (PinRole::In4, self.in4),
            (PinRole::EnableLeft, self.enable_left),
            (PinRole::EnableRight, self.enable_right),
            (PinRole::LightRelay, self.light_relay),
            (PinRole::HornRelay, self.horn_relay),
            (PinRole::Trigger, self.trigger),
            (PinRole::Echo, self.echo),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let roles = self.roles();
        for (i, &(role, pin)) in roles.iter().enumerate() {
            if pin >= DIGITAL_PINS {
                return Err(ConfigError::PinOutOfRange { role, pin });
            }
            if SERIAL_PINS.contains(&pin) {
                return Err(ConfigError::SerialPin { role, pin });
            }
            if let Some(&(other, _)) = roles[..i].iter().find(|(_, p)| *p == pin) {
                return Err(ConfigError::SharedPin {
                    pin,
                    a: other,
                    b: role,
                });
            }
        }
        for (role, pin) in [
            (PinRole::EnableLeft, self.enable_left),
            (PinRole::EnableRight, self.enable_right),
        ] {
            if !PWM_PINS.contains(&pin) {
                return Err(ConfigError::NotPwm { role, pin });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{role:?} assigned to pin {pin}, board has pins 0..{DIGITAL_PINS}")]
    PinOutOfRange { role: PinRole, pin: u8 },
    #[error("{role:?} assigned to pin {pin}, reserved for the serial link")]
    SerialPin { role: PinRole, pin: u8 },
    #[error("pin {pin} assigned to both {a:?} and {b:?}")]
    SharedPin { pin: u8, a: PinRole, b: PinRole },
    #[error("{role:?} needs a PWM-capable pin, got {pin}")]
    NotPwm { role: PinRole, pin: u8 },
    #[error("{0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmwareConfig {
    pub safety_distance_cm: f64,
    pub backward_duration: u32,
    pub turn_duration: u32,
    pub fuzzy_enabled: bool,
    pub fuzzy_threshold: f64,
    /// Disarm the safety check after the first completed avoidance run.
    pub safety_one_shot: bool,
    pub pins: PinMap,
}

impl Default for FirmwareConfig {
    fn default() -> Self {
        FirmwareConfig {
            safety_distance_cm: 10.0,
            backward_duration: 50,
            turn_duration: 50,
            fuzzy_enabled: false,
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            safety_one_shot: false,
            pins: PinMap::default(),
        }
    }
}

impl FirmwareConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.safety_distance_cm > 0.0 && self.safety_distance_cm.is_finite()) {
            return Err(ConfigError::Invalid("safety_distance_cm must be positive"));
        }
        if self.backward_duration == 0 || self.turn_duration == 0 {
            return Err(ConfigError::Invalid("avoidance durations must be positive"));
        }
        if !(0.0..=1.0).contains(&self.fuzzy_threshold) {
            return Err(ConfigError::Invalid("fuzzy_threshold must be in [0, 1]"));
        }
        self.pins.validate()
    }

    pub fn matcher(&self) -> Matcher {
        if self.fuzzy_enabled {
            Matcher::Fuzzy {
                threshold: self.fuzzy_threshold,
            }
        } else {
            Matcher::Exact
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmwareState {
    pub motion: Motion,
    pub light: bool,
    pub horn: bool,
    pub avoidance: Avoidance,
    pub last_distance_cm: f64,
    /// Cleared only in one-shot safety mode.
    pub safety_armed: bool,
}

impl Default for FirmwareState {
    fn default() -> Self {
        FirmwareState {
            motion: Motion::Idle,
            light: false,
            horn: false,
            avoidance: Avoidance::Inactive,
            last_distance_cm: 0.0,
            safety_armed: true,
        }
    }
}

/// True when `cmd` would be dropped in `state`.
pub fn is_blocked(state: &FirmwareState, cmd: Command) -> bool {
    cmd.is_motion() && state.avoidance.is_active()
}

/// Applies one command. Motion commands are ignored while avoidance runs.
pub fn dispatch(state: &FirmwareState, cmd: Command) -> FirmwareState {
    let mut next = state.clone();
    if is_blocked(state, cmd) {
        return next;
    }
    match cmd {
        Command::Forward => next.motion = Motion::Forward,
        Command::Backward => next.motion = Motion::Backward,
        Command::Left => next.motion = Motion::Left,
        Command::Right => next.motion = Motion::Right,
        Command::Stop => next.motion = Motion::Idle,
        Command::LightOn => next.light = true,
        Command::LightOff => next.light = false,
        Command::HornOn => next.horn = true,
        Command::HornOff => next.horn = false,
    }
    next
}

/// Advances a running avoidance routine by one tick. Returns the phase it
/// moves into, or `None` when inactive.
pub fn next_phase(phase: Avoidance, cfg: &FirmwareConfig) -> Option<Avoidance> {
    Some(match phase {
        Avoidance::Inactive => return None,
        Avoidance::Halting => Avoidance::Backing(cfg.backward_duration),
        Avoidance::Backing(n) if n > 1 => Avoidance::Backing(n - 1),
        Avoidance::Backing(_) => Avoidance::Turning(cfg.turn_duration),
        Avoidance::Turning(n) if n > 1 => Avoidance::Turning(n - 1),
        Avoidance::Turning(_) => Avoidance::Inactive,
    })
}

/// Output pin levels and duties.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PinBank {
    digital: BTreeMap<u8, Level>,
    pwm: BTreeMap<u8, u8>,
}

impl PinBank {
    pub fn digital(&self, pin: u8) -> Level {
        self.digital.get(&pin).copied().unwrap_or(Level::Low)
    }

    pub fn duty(&self, pin: u8) -> u8 {
        self.pwm.get(&pin).copied().unwrap_or(0)
    }

    /// Returns whether the level changed.
    pub fn write_digital(&mut self, pin: u8, level: Level) -> bool {
        self.digital.insert(pin, level).unwrap_or(Level::Low) != level
    }

    pub fn write_pwm(&mut self, pin: u8, duty: u8) -> bool {
        self.pwm.insert(pin, duty).unwrap_or(0) != duty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Drive {
    Fwd,
    Rev,
    Off,
}

impl Drive {
    fn levels(self) -> (Level, Level) {
        match self {
            Drive::Fwd => (Level::High, Level::Low),
            Drive::Rev => (Level::Low, Level::High),
            Drive::Off => (Level::Low, Level::Low),
        }
    }
}

fn drive_for(motion: Motion) -> (Drive, Drive) {
    match motion {
        Motion::Idle => (Drive::Off, Drive::Off),
        Motion::Forward => (Drive::Fwd, Drive::Fwd),
        Motion::Backward => (Drive::Rev, Drive::Rev),
        Motion::Left => (Drive::Rev, Drive::Fwd),
        Motion::Right => (Drive::Fwd, Drive::Rev),
    }
}

/// Writes motor and relay pins for `state`, returning `(role, pin, value)`
/// for every pin that changed.
pub fn apply_pins(state: &FirmwareState, map: &PinMap, pins: &mut PinBank) -> Vec<(PinRole, u8, u8)> {
    let (left, right) = drive_for(state.motion);
    let (in1, in2) = left.levels();
    let (in3, in4) = right.levels();
    let duty = |d: Drive| if d == Drive::Off { 0 } else { 255 };
    let digital = [
        (PinRole::In1, map.in1, in1),
        (PinRole::In2, map.in2, in2),
        (PinRole::In3, map.in3, in3),
        (PinRole::In4, map.in4, in4),
    ];
    let relays = [
        (PinRole::LightRelay, map.light_relay, Level::from(state.light)),
        (PinRole::HornRelay, map.horn_relay, Level::from(state.horn)),
    ];
    let mut changed = Vec::new();
    for (role, pin, level) in digital {
        if pins.write_digital(pin, level) {
            changed.push((role, pin, TraceEvent::level(level)));
        }
    }
    for (role, pin, d) in [
        (PinRole::EnableLeft, map.enable_left, duty(left)),
        (PinRole::EnableRight, map.enable_right, duty(right)),
    ] {
        if pins.write_pwm(pin, d) {
            changed.push((role, pin, d));
        }
    }
    for (role, pin, level) in relays {
        if pins.write_digital(pin, level) {
            changed.push((role, pin, TraceEvent::level(level)));
        }
    }
    changed
}

/// Source of ultrasonic readings for the firmware.
pub trait SensorPort {
    fn ping(&mut self) -> EchoMeasurement;
}

impl<F: FnMut() -> EchoMeasurement> SensorPort for F {
    fn ping(&mut self) -> EchoMeasurement {
        self()
    }
}

/// The control loop with its configuration, command table, state and pins.
#[derive(Debug, Clone)]
pub struct Firmware {
    cfg: FirmwareConfig,
    table: CommandTable,
    state: FirmwareState,
    pins: PinBank,
    last_tick: Option<Tick>,
}

impl Firmware {
    pub fn new(cfg: FirmwareConfig, table: CommandTable) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Firmware {
            cfg,
            table,
            state: FirmwareState::default(),
            pins: PinBank::default(),
            last_tick: None,
        })
    }

    /// Setup pass: takes the first distance reading without tracing it.
    pub fn boot(&mut self, sensor: &mut dyn SensorPort) {
        self.state.last_distance_cm = sensor.ping().distance_cm;
    }

    pub fn config(&self) -> &FirmwareConfig {
        &self.cfg
    }

    pub fn state(&self) -> &FirmwareState {
        &self.state
    }

    pub fn pins(&self) -> &PinBank {
        &self.pins
    }

    pub fn tick(&mut self, link: &mut Link, sensor: &mut dyn SensorPort, now: Tick) -> Vec<TraceEvent> {
        assert!(
            self.last_tick.is_none_or(|t| now > t),
            "firmware ticks must strictly increase (got {now} after {:?})",
            self.last_tick
        );
        self.last_tick = Some(now);
        let mut events = Vec::new();
        let mut emit = |kind| events.push(TraceEvent::new(now, kind));

        for delivery in link.poll(now) {
            let text = delivery.frame.text();
            let origin = delivery.origin;
            let canonical = normalize(delivery.frame.payload());
            let result = self.cfg.matcher().run(&canonical, &self.table);
            let Some(cmd) = result.command else {
                emit(EventKind::CommandRejected {
                    text,
                    origin,
                    reason: RejectReason::NoMatch,
                    command: None,
                    score: result.score,
                });
                continue;
            };
            emit(EventKind::CommandMatched {
                text: text.clone(),
                origin: origin.clone(),
                command: cmd,
                score: result.score,
                method: result.method,
            });
            debug_assert_ne!(result.method, MatchMethod::NoMatch);
            if is_blocked(&self.state, cmd) {
                emit(EventKind::CommandRejected {
                    text,
                    origin,
                    reason: RejectReason::AvoidanceActive,
                    command: Some(cmd),
                    score: result.score,
                });
                continue;
            }
            let next = dispatch(&self.state, cmd);
            if next.motion != self.state.motion {
                emit(EventKind::MotionChanged {
                    from: self.state.motion,
                    to: next.motion,
                });
            }
            self.state = next;
        }

        let echo = sensor.ping();
        if echo.distance_cm != self.state.last_distance_cm {
            emit(EventKind::EchoMeasured {
                duration_us: echo.duration_us,
                distance_cm: echo.distance_cm,
                saturated: echo.saturated,
            });
            self.state.last_distance_cm = echo.distance_cm;
        }

        let phase = if self.state.safety_armed
            && self.state.motion == Motion::Forward
            && !self.state.avoidance.is_active()
            && self.state.last_distance_cm <= self.cfg.safety_distance_cm
        {
            Some(Avoidance::Halting)
        } else {
            next_phase(self.state.avoidance, &self.cfg)
        };
        if let Some(phase) = phase {
            self.state.avoidance = phase;
            emit(EventKind::AvoidancePhase { phase });
            let motion = phase.motion().unwrap_or(Motion::Idle);
            if motion != self.state.motion {
                emit(EventKind::MotionChanged {
                    from: self.state.motion,
                    to: motion,
                });
                self.state.motion = motion;
            }
            if phase == Avoidance::Inactive && self.cfg.safety_one_shot {
                self.state.safety_armed = false;
            }
        }

        for (role, pin, value) in apply_pins(&self.state, &self.cfg.pins, &mut self.pins) {
            emit(EventKind::PinWrite { pin, role, value });
        }
        events
    }
}
