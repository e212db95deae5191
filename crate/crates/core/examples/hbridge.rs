//! Pin levels and PWM duty to wheel speeds and relay loads.

use voicebot::actuators::{bridge_output, HBridgeSpec, Level, LoadKind, RelayLoad};
use voicebot::firmware::{apply_pins, dispatch, FirmwareState, PinBank, PinMap};
use voicebot::grammar::Command;

fn main() {
    let spec = HBridgeSpec::default();
    println!("duty  forward rad/s  reverse rad/s");
    for duty in [0u8, 64, 128, 200, 255] {
        println!(
            "{duty:>4}  {:>13.3}  {:>13.3}",
            bridge_output(Level::High, Level::Low, duty, &spec),
            bridge_output(Level::Low, Level::High, duty, &spec),
        );
    }

    // Drive the firmware's pin logic directly and read the outputs back.
    let map = PinMap::default();
    let mut pins = PinBank::default();
    let mut state = FirmwareState::default();
    for cmd in [Command::Left, Command::LightOn, Command::HornOn] {
        state = dispatch(&state, cmd);
        let writes = apply_pins(&state, &map, &mut pins);
        let left = bridge_output(
            pins.digital(map.in1),
            pins.digital(map.in2),
            pins.duty(map.enable_left),
            &spec,
        );
        let right = bridge_output(
            pins.digital(map.in3),
            pins.digital(map.in4),
            pins.duty(map.enable_right),
            &spec,
        );
        let light = RelayLoad::from_pin(LoadKind::Light, pins.digital(map.light_relay));
        let horn = RelayLoad::from_pin(LoadKind::Horn, pins.digital(map.horn_relay));
        println!(
            "after {cmd:<11} {} pin writes, wheels {left:+.1}/{right:+.1} rad/s, light {}, horn {}",
            writes.len(),
            light.energized,
            horn.energized
        );
    }
}
