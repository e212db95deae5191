//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail.

mod common;

use std::collections::VecDeque;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voicebot::firmware::{Avoidance, Motion};
use voicebot::grammar::{
    match_exact, match_fuzzy, normalize, similarity, Command, CommandTable, MatchMethod,
};
use voicebot::link::{Link, LinkConfig, SendReceipt};
use voicebot::scenario::{replay, run_scenario, Scenario, ScriptEntry};
use voicebot::trace::{EventKind, Trace, TraceEvent};
use voicebot::world::{
    distance_to_duration_us, duration_to_distance_cm, overlaps, step_kinematics, ultrasonic_cast, Arena,
    Bounds, Point, Pose, RobotBody, Segment, SensorConfig,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("safety_distance", safety_distance),
        ("avoidance_choreography", avoidance_choreography),
        ("command_table", command_table),
        ("fuzzy_equals_exact_at_1", fuzzy_equals_exact),
        ("echo_round_trip", echo_round_trip),
        ("kinematics", kinematics),
        ("link_range_gate_and_fifo", link_range_and_fifo),
        ("determinism_and_replay", determinism_and_replay),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn wall_scenario(distance: f64) -> Scenario {
    let arena = Arena {
        bounds: Bounds {
            min: Point::new(-1.0, -1.5),
            max: Point::new(distance + 1.0, 1.5),
        },
        obstacles: vec![Segment::new(
            Point::new(distance, -1.0),
            Point::new(distance, 1.0),
        )],
        controller: Point::new(-0.5, 0.0),
    };
    let mut s = Scenario::empty(arena, Pose::new(0.0, 0.0, 0.0), 1700);
    s.snapshot_every = 1;
    s.script.push(ScriptEntry {
        tick: 0,
        text: "forward".into(),
        client_id: None,
    });
    s
}

fn safety_distance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    let mut distances = vec![0.2, 3.5];
    distances.extend((0..198).map(|_| rng.random_range(0.2..=3.5)));

    let started = Instant::now();
    let mut closest_forward = f64::INFINITY;
    for (i, &d) in distances.iter().enumerate() {
        let out = run_scenario(&wall_scenario(d).with_seed(i as u64)).map_err(|e| e.to_string())?;
        for (tick, s) in out.trace.snapshots() {
            if s.motion == Motion::Forward {
                ensure(s.last_distance_cm > 10.0, || {
                    format!(
                        "start {d:.3} m: tick {tick} ended Forward at {} cm",
                        s.last_distance_cm
                    )
                })?;
                closest_forward = closest_forward.min(s.last_distance_cm);
            }
        }
        let kinds: Vec<_> = out.trace.events.iter().map(|e| &e.kind).collect();
        ensure(
            kinds.iter().any(|k| {
                matches!(
                    k,
                    EventKind::AvoidancePhase {
                        phase: Avoidance::Halting
                    }
                )
            }),
            || format!("start {d:.3} m: the robot never reached the wall"),
        )?;
        ensure(
            !kinds.iter().any(|k| matches!(k, EventKind::Collision { .. })),
            || format!("start {d:.3} m: collided with the wall"),
        )?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:.2?}"))?;
    Ok(format!(
        "200 starts, closest reading while Forward {closest_forward:.3} cm, {elapsed:.2?}"
    ))
}

fn avoidance_choreography() -> Verdict {
    let scenario = common::load("wall_ahead");
    let out = run_scenario(&scenario).map_err(|e| e.to_string())?;
    let is_phase =
        |e: &TraceEvent, p: Avoidance| matches!(e.kind, EventKind::AvoidancePhase { phase } if phase == p);
    let start = out
        .trace
        .events
        .iter()
        .position(|e| is_phase(e, Avoidance::Halting))
        .ok_or("no avoidance triggered")?;
    let end = start
        + out.trace.events[start..]
            .iter()
            .position(|e| is_phase(e, Avoidance::Inactive))
            .ok_or("avoidance never finished")?;
    let (first_tick, last_tick) = (out.trace.events[start].tick, out.trace.events[end].tick);
    let window: Vec<&TraceEvent> = out
        .trace
        .events
        .iter()
        .filter(|e| (first_tick..=last_tick).contains(&e.tick))
        .filter(|e| {
            matches!(
                e.kind,
                EventKind::AvoidancePhase { .. }
                    | EventKind::MotionChanged { .. }
                    | EventKind::PinWrite { .. }
            )
        })
        .collect();

    let (back, turn) = (
        scenario.firmware.backward_duration,
        scenario.firmware.turn_duration,
    );
    let mut expected = vec![Avoidance::Halting];
    expected.extend((1..=back).rev().map(Avoidance::Backing));
    expected.extend((1..=turn).rev().map(Avoidance::Turning));
    expected.push(Avoidance::Inactive);
    let phases: Vec<(u64, Avoidance)> = window
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::AvoidancePhase { phase } => Some((e.tick, phase)),
            _ => None,
        })
        .collect();
    ensure(phases.iter().map(|p| p.1).eq(expected.iter().copied()), || {
        format!(
            "phase sequence was {:?}",
            phases.iter().map(|p| p.1).collect::<Vec<_>>()
        )
    })?;
    ensure(phases.windows(2).all(|w| w[1].0 == w[0].0 + 1), || {
        "phases are not on consecutive ticks".into()
    })?;
    let motions: Vec<(Motion, Motion)> = window
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::MotionChanged { from, to } => Some((from, to)),
            _ => None,
        })
        .collect();
    let expected_motions = [
        (Motion::Forward, Motion::Idle),
        (Motion::Idle, Motion::Backward),
        (Motion::Backward, Motion::Left),
        (Motion::Left, Motion::Idle),
    ];
    ensure(motions == expected_motions, || {
        format!("motion changes were {motions:?}")
    })?;

    let jsonl: String = window
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    common::check_golden("tests/golden/avoidance_choreography.jsonl", &jsonl)?;
    Ok(format!(
        "Halting, Backing x{back}, Turning x{turn}, Idle over ticks {}..={}; golden matches",
        phases[0].0,
        phases.last().unwrap().0
    ))
}

fn command_table() -> Verdict {
    let shipped =
        CommandTable::load(common::crate_dir().join("config/commands.toml")).map_err(|e| e.to_string())?;
    for table in [CommandTable::default(), shipped] {
        for cmd in Command::ALL {
            let phrase = table.phrase(cmd);
            ensure(match_exact(phrase, &table) == Some(cmd), || {
                format!("{phrase:?} did not match {cmd}")
            })?;
            let loud = format!("  {}!! ", phrase.to_uppercase());
            ensure(match_exact(&normalize(&loud), &table) == Some(cmd), || {
                format!("{loud:?} did not normalize onto {cmd}")
            })?;
        }
    }
    let phrases: Vec<&str> = Command::ALL.iter().map(|c| c.default_phrase()).collect();
    let mut worst = (0.0, "", "");
    for (i, a) in phrases.iter().enumerate() {
        for b in &phrases[i + 1..] {
            let s = similarity(a, b);
            if s > worst.0 {
                worst = (s, a, b);
            }
        }
    }
    ensure(worst.0 < 0.75, || {
        format!("{:?} vs {:?} scores {:.4}", worst.1, worst.2, worst.0)
    })?;
    Ok(format!(
        "9 phrases match; closest pair {:?}/{:?} at {:.4}",
        worst.1, worst.2, worst.0
    ))
}

fn random_utterance(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789!?.,-'\t";
    let phrase = Command::ALL[rng.random_range(0..9)].default_phrase();
    match rng.random_range(0..5) {
        0 => phrase.to_string(),
        1 => {
            // case and padding noise around a canonical phrase
            let mut s: String = phrase
                .chars()
                .map(|c| {
                    if rng.random_bool(0.3) {
                        c.to_ascii_uppercase()
                    } else {
                        c
                    }
                })
                .collect();
            if rng.random_bool(0.5) {
                s = format!(" {s}.");
            }
            s
        }
        2 => {
            let mut b = phrase.as_bytes().to_vec();
            let i = rng.random_range(0..b.len());
            match rng.random_range(0..3) {
                0 => {
                    b.remove(i);
                }
                1 => b.insert(i, ALPHABET[rng.random_range(0..26)]),
                _ => b[i] = ALPHABET[rng.random_range(0..26)],
            }
            String::from_utf8(b).unwrap()
        }
        3 => format!(
            "{phrase} {}",
            Command::ALL[rng.random_range(0..9)].default_phrase()
        ),
        _ => {
            let n = rng.random_range(0..24);
            (0..n)
                .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
                .collect()
        }
    }
}

fn fuzzy_equals_exact() -> Verdict {
    let table = CommandTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut hits = 0;
    for _ in 0..10_000 {
        let raw = random_utterance(&mut rng);
        for u in [raw.clone(), normalize(&raw)] {
            let exact = match_exact(&u, &table);
            let fuzzy = match_fuzzy(&u, &table, 1.0);
            ensure(fuzzy.command == exact, || {
                format!("{u:?}: fuzzy {:?} vs exact {exact:?}", fuzzy.command)
            })?;
            let method = if exact.is_some() {
                MatchMethod::Exact
            } else {
                MatchMethod::NoMatch
            };
            ensure(fuzzy.method == method, || {
                format!("{u:?}: method {:?}", fuzzy.method)
            })?;
            hits += usize::from(exact.is_some());
        }
    }
    Ok(format!(
        "10000 utterances (raw and normalized), {hits} exact hits, no disagreement"
    ))
}

fn echo_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(343);
    let mut distances = vec![2.0, 400.0];
    distances.extend((0..998).map(|_| rng.random_range(2.0..=400.0)));
    let mut worst: f64 = 0.0;
    for d in distances {
        let back = duration_to_distance_cm(distance_to_duration_us(d));
        worst = worst.max((back - d).abs() / d);
    }
    ensure(worst < 1e-9, || format!("worst relative error {worst:e}"))?;

    let arena = Arena {
        bounds: Bounds {
            min: Point::new(-1.0, -1.0),
            max: Point::new(1.0, 1.0),
        },
        obstacles: vec![Segment::new(Point::new(0.10, -0.5), Point::new(0.10, 0.5))],
        controller: Point::new(0.0, 0.0),
    };
    let echo = ultrasonic_cast(&Pose::new(0.0, 0.0, 0.0), &arena, &SensorConfig::default());
    let oracle = 2.0 * 0.10 / 343.0 * 1e6;
    ensure((echo.duration_us - 583.1).abs() <= 0.5, || {
        format!("wall at 0.10 m gave {} us", echo.duration_us)
    })?;
    ensure((echo.duration_us - oracle).abs() < 1e-9, || {
        format!("{} us differs from 2d/c = {oracle}", echo.duration_us)
    })?;
    Ok(format!(
        "1000 distances, worst relative error {worst:.1e}; 0.10 m wall -> {:.3} us",
        echo.duration_us
    ))
}

/// Classic RK4 on the unicycle ODE, used as an independent oracle.
fn rk4_unicycle(mut state: [f64; 3], v: f64, omega: f64, t_end: f64, h: f64) -> [f64; 3] {
    let f = |s: [f64; 3]| [v * s[2].cos(), v * s[2].sin(), omega];
    let steps = (t_end / h).round() as usize;
    for _ in 0..steps {
        let k1 = f(state);
        let k2 = f(std::array::from_fn(|i| state[i] + h / 2.0 * k1[i]));
        let k3 = f(std::array::from_fn(|i| state[i] + h / 2.0 * k2[i]));
        let k4 = f(std::array::from_fn(|i| state[i] + h * k3[i]));
        state = std::array::from_fn(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    state
}

fn kinematics() -> Verdict {
    let body = RobotBody::default();
    let dt = voicebot::TICK_SECONDS;
    let mut rng = ChaCha8Rng::seed_from_u64(12);

    let mut heading_drift: f64 = 0.0;
    let mut position_drift: f64 = 0.0;
    for _ in 0..50 {
        let start = Pose::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let w = rng.random_range(-8.0..8.0);
        let (mut straight, mut spin) = (start, start);
        for _ in 0..1000 {
            straight = step_kinematics(straight, w, w, &body, dt);
            spin = step_kinematics(spin, -w, w, &body, dt);
            heading_drift = heading_drift.max((straight.heading - start.heading).abs());
            position_drift = position_drift.max(spin.position().distance(start.position()));
        }
    }
    ensure(heading_drift <= 1e-12, || {
        format!("heading drifted {heading_drift:e}")
    })?;
    ensure(position_drift <= 1e-12, || {
        format!("position drifted {position_drift:e}")
    })?;

    let w = 8.0;
    let mut pose = Pose::new(0.0, 0.0, 0.0);
    for _ in 0..1000 {
        pose = step_kinematics(pose, 0.0, w, &body, dt);
    }
    let v = body.wheel_radius * w / 2.0;
    let omega = body.wheel_radius * w / body.wheel_base;
    let [ox, oy, _] = rk4_unicycle([0.0, 0.0, 0.0], v, omega, 10.0, 1e-4);
    let arc_err = Point::new(ox, oy).distance(pose.position());
    ensure(arc_err < 1e-6, || format!("one-wheel arc off by {arc_err:e} m"))?;
    Ok(format!(
        "heading drift {heading_drift:.1e}, spin drift {position_drift:.1e}, arc vs RK4 {arc_err:.1e} m"
    ))
}

fn link_range_and_fifo() -> Verdict {
    let mut delivered_up_to = None;
    for d in 0..=80 {
        let mut link = Link::new(LinkConfig::default()).map_err(|e| e.to_string())?;
        link.set_separation(d as f64);
        let receipt = link.send(b"forward", 0).map_err(|e| e.to_string())?;
        let got = link.poll(link.config().latency);
        let delivered = matches!(receipt, SendReceipt::Delivered { .. }) && got.len() == 1;
        ensure(delivered == (d <= 50), || {
            format!("separation {d} m: delivered = {delivered}")
        })?;
        if delivered {
            delivered_up_to = Some(d);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xf1f0);
    let mut frames = 0;
    for round in 0..40 {
        let cfg = LinkConfig {
            latency: rng.random_range(0..6),
            drop_probability: if round % 2 == 0 { 0.0 } else { 0.3 },
            seed: round,
            ..LinkConfig::default()
        };
        let latency = cfg.latency;
        let mut link = Link::new(cfg).map_err(|e| e.to_string())?;
        link.set_separation(rng.random_range(0.0..50.0));
        let mut oracle = VecDeque::new();
        let mut seq = 0u32;
        for now in 0..300u64 {
            if now < 250 {
                for _ in 0..rng.random_range(0..6) {
                    let payload = format!("msg {seq}");
                    seq += 1;
                    if let SendReceipt::Delivered { .. } = link.send(payload.as_bytes(), now).unwrap() {
                        oracle.push_back((payload, now));
                    }
                }
            }
            for d in link.poll(now) {
                let (payload, sent) = oracle
                    .pop_front()
                    .ok_or("link delivered a frame the oracle lacks")?;
                ensure(d.frame.text() == payload, || {
                    format!("round {round}: got {:?}, expected {payload:?}", d.frame.text())
                })?;
                ensure(d.sent_at == sent && now == sent + latency, || {
                    format!("round {round}: {payload:?} sent {sent} arrived {now}")
                })?;
                frames += 1;
            }
        }
        ensure(oracle.is_empty(), || {
            format!("round {round}: {} frames never arrived", oracle.len())
        })?;
    }
    Ok(format!(
        "delivered for 0..={} m only; {frames} frames in FIFO order over 40 bursty runs",
        delivered_up_to.unwrap_or(0)
    ))
}

fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    const TEXTS: &[&str] = &[
        "forward",
        "backward",
        "left",
        "right",
        "stop",
        "light on",
        "light off",
        "horn please",
        "horn stop",
        "go forward",
        "Lights ON!",
        "turn left",
        "hron please",
        "xylophone",
        "",
        "stop stop",
    ];
    loop {
        let w = rng.random_range(2.0..6.0);
        let h = rng.random_range(2.0..6.0);
        let bounds = Bounds {
            min: Point::new(0.0, 0.0),
            max: Point::new(w, h),
        };
        let in_bounds = |rng: &mut ChaCha8Rng| Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
        let obstacles = (0..rng.random_range(0..5))
            .map(|_| Segment::new(in_bounds(rng), in_bounds(rng)))
            .collect();
        let arena = Arena {
            bounds,
            obstacles,
            controller: in_bounds(rng),
        };
        let start = in_bounds(rng);
        if overlaps(start, &arena, &RobotBody::default()) {
            continue;
        }
        let duration = rng.random_range(100..800);
        let mut s = Scenario::empty(
            arena,
            Pose::new(start.x, start.y, rng.random_range(-3.0..3.0)),
            duration,
        );
        s.seed = rng.random();
        s.snapshot_every = rng.random_range(1..30);
        s.firmware.backward_duration = rng.random_range(1..60);
        s.firmware.turn_duration = rng.random_range(1..60);
        s.firmware.safety_distance_cm = rng.random_range(5.0..40.0);
        s.firmware.fuzzy_enabled = rng.random_bool(0.5);
        s.firmware.fuzzy_threshold = rng.random_range(0.5..1.0);
        s.firmware.safety_one_shot = rng.random_bool(0.3);
        s.link.latency = rng.random_range(0..5);
        s.link.drop_probability = if rng.random_bool(0.5) {
            rng.random_range(0.0..0.5)
        } else {
            0.0
        };
        s.link.max_range = rng.random_range(1.0..60.0);
        s.sensor.noise_std_cm = if rng.random_bool(0.5) {
            rng.random_range(0.0..3.0)
        } else {
            0.0
        };
        s.sensor.beam_half_angle = if rng.random_bool(0.3) {
            rng.random_range(0.0..0.3)
        } else {
            0.0
        };
        let mut ticks: Vec<u64> = (0..rng.random_range(0..20))
            .map(|_| rng.random_range(0..duration))
            .collect();
        ticks.sort_unstable();
        s.script = ticks
            .into_iter()
            .map(|tick| ScriptEntry {
                tick,
                text: TEXTS[rng.random_range(0..TEXTS.len())].into(),
                client_id: rng
                    .random_bool(0.5)
                    .then(|| format!("op{}", rng.random_range(0..3))),
            })
            .collect();
        if s.validate().is_ok() {
            return s;
        }
    }
}

fn determinism_and_replay() -> Verdict {
    let dir = std::env::temp_dir().join(format!("voicebot-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let shipped = common::shipped_scenarios();
    for (name, path) in &shipped {
        let scenario = Scenario::load(path).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for run in 0..2 {
            let out = run_scenario(&scenario).map_err(|e| e.to_string())?;
            let file = dir.join(format!("{name}.{run}.jsonl"));
            out.trace
                .write_jsonl(std::fs::File::create(&file).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            files.push(std::fs::read(&file).map_err(|e| e.to_string())?);
        }
        ensure(files[0] == files[1], || {
            format!("{name}: traces differ between runs")
        })?;
    }
    std::fs::remove_dir_all(&dir).ok();

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut events = 0;
    for i in 0..100 {
        let scenario = random_scenario(&mut rng);
        let out = run_scenario(&scenario).map_err(|e| e.to_string())?;
        let reread = Trace::parse(&out.trace.to_jsonl()).map_err(|e| e.to_string())?;
        let state = replay(&reread).map_err(|e| format!("scenario {i}: {e}"))?;
        ensure(state == out.final_state, || {
            format!(
                "scenario {i}: replay gave {state:?}, run ended {:?}",
                out.final_state
            )
        })?;
        events += out.trace.events.len();
    }
    Ok(format!(
        "{} shipped scenarios byte-identical; 100 random scenarios ({events} events) replay exactly",
        shipped.len()
    ))
}
