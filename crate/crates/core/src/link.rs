//! Emulated serial Bluetooth channel between the operator's controller and
//! the robot.
//!
//! Frames are newline-terminated UTF-8 text. A frame is either discarded at
//! send time (out of range, or random loss) or queued and handed out by
//! [`Link::poll`] once its latency has elapsed. Delivery order always equals
//! send order.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::MAX_UTTERANCE_BYTES;
use crate::Tick;

pub const TERMINATOR: u8 = b'\n';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Meters; separations up to and including this value are in range.
    pub max_range: f64,
    pub latency: Tick,
    pub drop_probability: f64,
    /// Loss generator seed; scenarios derive it from their own seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            max_range: 50.0,
            latency: 1,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(LinkError::InvalidConfig("max_range must be positive"));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(LinkError::InvalidConfig("drop_probability must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("payload is {0} bytes, limit is {MAX_UTTERANCE_BYTES}")]
    PayloadTooLong(usize),
    #[error("payload contains the frame terminator")]
    PayloadContainsTerminator,
    #[error("invalid link config: {0}")]
    InvalidConfig(&'static str),
}

/// One utterance on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    payload: Vec<u8>,
}

impl Frame {
    pub fn new(payload: impl Into<Vec<u8>>) -> Result<Self, LinkError> {
        let payload = payload.into();
        if payload.len() > MAX_UTTERANCE_BYTES {
            return Err(LinkError::PayloadTooLong(payload.len()));
        }
        if payload.contains(&TERMINATOR) {
            return Err(LinkError::PayloadContainsTerminator);
        }
        Ok(Frame { payload })
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.payload).into_owned()
    }

    /// Payload followed by a single newline.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 1);
        out.extend_from_slice(&self.payload);
        out.push(TERMINATOR);
        out
    }
}

/// Splits a raw byte stream back into frames.
///
/// Lines longer than the payload limit are discarded up to their terminator
/// and reported as errors.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    // length of an overlong line being skipped
    discarding: Option<usize>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Vec<Result<Frame, LinkError>> {
        let mut out = Vec::new();
        for &b in bytes {
            if b == TERMINATOR {
                out.push(match self.discarding.take() {
                    Some(len) => Err(LinkError::PayloadTooLong(len)),
                    None => Frame::new(std::mem::take(&mut self.buf)),
                });
            } else if let Some(len) = &mut self.discarding {
                *len += 1;
            } else if self.buf.len() == MAX_UTTERANCE_BYTES {
                self.discarding = Some(self.buf.len() + 1);
                self.buf.clear();
            } else {
                self.buf.push(b);
            }
        }
        out
    }

    /// Bytes received since the last terminator.
    pub fn pending(&self) -> usize {
        self.discarding.unwrap_or(self.buf.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    OutOfRange,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendReceipt {
    Delivered { deliver_at: Tick },
    Dropped(DropReason),
}

/// A frame handed to the robot, with the sender tag it was sent under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub frame: Frame,
    pub origin: Option<String>,
    pub sent_at: Tick,
}

#[derive(Debug, Clone)]
struct InFlight {
    delivery: Delivery,
    deliver_at: Tick,
}

/// Channel state: in-flight queue, loss generator and endpoint separation.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: LinkConfig,
    queue: VecDeque<InFlight>,
    rng: ChaCha8Rng,
    separation: f64,
}

impl Link {
    pub fn new(cfg: LinkConfig) -> Result<Self, LinkError> {
        cfg.validate()?;
        Ok(Link {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            queue: VecDeque::new(),
            separation: 0.0,
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    /// Distance in meters between controller and robot.
    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn set_separation(&mut self, meters: f64) {
        self.separation = meters;
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn send(&mut self, payload: &[u8], now: Tick) -> Result<SendReceipt, LinkError> {
        self.send_from(payload, None, now)
    }

    pub fn send_from(
        &mut self,
        payload: &[u8],
        origin: Option<String>,
        now: Tick,
    ) -> Result<SendReceipt, LinkError> {
        let frame = Frame::new(payload)?;
        if self.separation > self.cfg.max_range {
            return Ok(SendReceipt::Dropped(DropReason::OutOfRange));
        }
        if self.cfg.drop_probability > 0.0 && self.rng.random_bool(self.cfg.drop_probability) {
            return Ok(SendReceipt::Dropped(DropReason::Loss));
        }
        let deliver_at = now + self.cfg.latency;
        self.queue.push_back(InFlight {
            delivery: Delivery {
                frame,
                origin,
                sent_at: now,
            },
            deliver_at,
        });
        Ok(SendReceipt::Delivered { deliver_at })
    }

    /// Removes and returns, in send order, every frame due by `now`.
    pub fn poll(&mut self, now: Tick) -> Vec<Delivery> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|f| f.deliver_at <= now) {
            out.push(self.queue.pop_front().unwrap().delivery);
        }
        out
    }
}
