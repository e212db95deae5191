//! Dual H-bridge and relay driver models.
//!
//! Both are stateless translations from pin levels to physical outputs: the
//! motors respond instantly to duty changes and relays never latch.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

impl From<bool> for Level {
    fn from(b: bool) -> Self {
        if b {
            Level::High
        } else {
            Level::Low
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HBridgeSpec {
    /// Wheel angular velocity in rad/s at duty 255.
    pub max_wheel_speed: f64,
    // Electrical ratings; informational only.
    pub min_supply_volts: f64,
    pub max_supply_volts: f64,
    pub max_current_ma: f64,
}

impl Default for HBridgeSpec {
    fn default() -> Self {
        HBridgeSpec {
            max_wheel_speed: 8.0,
            min_supply_volts: 5.0,
            max_supply_volts: 36.0,
            max_current_ma: 600.0,
        }
    }
}

/// Signed wheel angular velocity for one bridge channel.
///
/// `(High, Low)` drives forward, `(Low, High)` reverse; equal inputs stop the
/// wheel whether the bridge would brake or coast.
pub fn bridge_output(in_a: Level, in_b: Level, duty: u8, spec: &HBridgeSpec) -> f64 {
    let magnitude = f64::from(duty) / 255.0 * spec.max_wheel_speed;
    match (in_a, in_b) {
        (Level::High, Level::Low) => magnitude,
        (Level::Low, Level::High) => -magnitude,
        _ => 0.0,
    }
}

pub fn relay_output(pin: Level) -> bool {
    pin == Level::High
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadKind {
    Light,
    Horn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayLoad {
    pub kind: LoadKind,
    pub energized: bool,
}

impl RelayLoad {
    pub fn from_pin(kind: LoadKind, pin: Level) -> Self {
        RelayLoad {
            kind,
            energized: relay_output(pin),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Level::*;

    /// Duty sweep table: duty, expected fraction of max speed.
    const DUTY_TABLE: [(u8, f64); 6] = [
        (0, 0.0),
        (1, 1.0 / 255.0),
        (64, 64.0 / 255.0),
        (128, 128.0 / 255.0),
        (200, 200.0 / 255.0),
        (255, 1.0),
    ];

    #[test]
    fn bridge_examples() {
        let spec = HBridgeSpec::default();
        assert_eq!(bridge_output(High, Low, 255, &spec), 8.0);
        assert_eq!(bridge_output(Low, High, 255, &spec), -8.0);
        assert!((bridge_output(High, Low, 128, &spec) - 128.0 / 255.0 * 8.0).abs() < 1e-12);
        assert_eq!(bridge_output(High, High, 255, &spec), 0.0);
        assert_eq!(bridge_output(Low, Low, 255, &spec), 0.0);
        for (duty, frac) in DUTY_TABLE {
            let got = bridge_output(High, Low, duty, &spec);
            assert!((got - frac * spec.max_wheel_speed).abs() < 1e-12, "duty {duty}");
        }
    }

    #[test]
    fn relay_truth_table() {
        assert!(relay_output(High));
        assert!(!relay_output(Low));
        let trace: Vec<bool> = [High, Low, High].into_iter().map(relay_output).collect();
        assert_eq!(trace, [true, false, true]);
        assert!(RelayLoad::from_pin(LoadKind::Horn, High).energized);
    }

    fn level() -> impl Strategy<Value = Level> {
        any::<bool>().prop_map(Level::from)
    }

    proptest! {
        #[test]
        fn swapping_inputs_negates(a in level(), b in level(), duty in any::<u8>(), max in 0.1f64..100.0) {
            let spec = HBridgeSpec { max_wheel_speed: max, ..Default::default() };
            prop_assert_eq!(bridge_output(a, b, duty, &spec), -bridge_output(b, a, duty, &spec));
        }

        #[test]
        fn monotone_in_duty(d1 in any::<u8>(), d2 in any::<u8>()) {
            let spec = HBridgeSpec::default();
            let (lo, hi) = (d1.min(d2), d1.max(d2));
            prop_assert!(bridge_output(High, Low, lo, &spec) <= bridge_output(High, Low, hi, &spec));
        }

        #[test]
        fn zero_duty_is_zero(a in level(), b in level()) {
            prop_assert_eq!(bridge_output(a, b, 0, &HBridgeSpec::default()).abs(), 0.0);
        }
    }
}
