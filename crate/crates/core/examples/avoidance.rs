//! The firmware loop on its own, fed a scripted sensor: a "forward" command,
//! an obstacle closing in, and the halt / back up / turn left routine.

use voicebot::firmware::{Firmware, FirmwareConfig, Motion};
use voicebot::grammar::CommandTable;
use voicebot::link::{Link, LinkConfig};
use voicebot::trace::EventKind;
use voicebot::world::EchoMeasurement;

fn main() {
    let cfg = FirmwareConfig {
        backward_duration: 3,
        turn_duration: 2,
        ..FirmwareConfig::default()
    };
    let mut fw = Firmware::new(cfg, CommandTable::default()).unwrap();
    let mut link = Link::new(LinkConfig::default()).unwrap();

    let mut distance = 30.0;
    let mut sensor = || EchoMeasurement::from_distance(distance, 400.0);
    fw.boot(&mut sensor);
    link.send(b"forward", 0).unwrap();

    for now in 0..12 {
        let mut sensor = || EchoMeasurement::from_distance(distance, 400.0);
        for e in fw.tick(&mut link, &mut sensor, now) {
            match e.kind {
                EventKind::PinWrite { .. } => {}
                kind => println!("t={now:>2} {}", serde_json::to_string(&kind).unwrap()),
            }
        }
        println!(
            "t={now:>2}   -> {:?}, {:?}",
            fw.state().motion,
            fw.state().avoidance
        );
        distance += match fw.state().motion {
            Motion::Forward => -5.0,
            Motion::Backward => 4.0,
            _ => 0.0,
        };
    }
}
