//! Echo timing against a wall and differential-drive motion in an arena.

use voicebot::world::{
    distance_to_duration_us, step_kinematics, ultrasonic_cast, Arena, Bounds, Point, Pose, RobotBody,
    SensorConfig, Ultrasonic,
};

fn main() {
    let arena = Arena {
        bounds: Bounds {
            min: Point::new(-1.0, -1.0),
            max: Point::new(2.0, 1.0),
        },
        obstacles: vec![voicebot::world::Segment::new(
            Point::new(0.5, -0.5),
            Point::new(0.5, 0.5),
        )],
        controller: Point::new(-0.5, 0.0),
    };
    let ideal = SensorConfig::default();
    for x in [0.0, 0.2, 0.4] {
        let echo = ultrasonic_cast(&Pose::new(x, 0.0, 0.0), &arena, &ideal);
        println!(
            "at x={x:.1}: {:.1} cm, echo {:.1} us",
            echo.distance_cm, echo.duration_us
        );
    }
    println!(
        "a wall 10 cm away echoes after {:.2} us",
        distance_to_duration_us(10.0)
    );

    let mut noisy = Ultrasonic::new(
        SensorConfig {
            noise_std_cm: 1.0,
            beam_half_angle: 0.13,
            ..ideal
        },
        7,
    );
    let readings: Vec<String> = (0..5)
        .map(|_| {
            format!(
                "{:.2}",
                noisy.measure(&Pose::new(0.0, 0.0, 0.0), &arena).distance_cm
            )
        })
        .collect();
    println!("noisy readings at x=0: {}", readings.join(", "));

    // One wheel driving, the other stopped: the robot traces a circle.
    let body = RobotBody::default();
    let mut pose = Pose::new(0.0, 0.0, 0.0);
    for tick in 1..=400 {
        pose = step_kinematics(pose, 0.0, 8.0, &body, voicebot::TICK_SECONDS);
        if tick % 100 == 0 {
            println!(
                "t={:.1} s: ({:.4}, {:.4}) heading {:.4}",
                tick as f64 / 100.0,
                pose.x,
                pose.y,
                pose.heading
            );
        }
    }
}
