//! Runs a scenario file, writes its trace, and replays the trace to the same
//! final firmware state.
//!
//! ```text
//! cargo run --example run_scenario -- crates/core/scenarios/obstacle_course.toml
//! ```

use voicebot::scenario::{replay, run_scenario, Scenario};
use voicebot::trace::Trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/wall_ahead.toml").into());
    let scenario = Scenario::load(&path)?;
    let out = run_scenario(&scenario)?;

    let mut counts = std::collections::BTreeMap::new();
    for e in &out.trace.events {
        *counts.entry(e.kind.name()).or_insert(0) += 1;
    }
    println!(
        "{path}: {} ticks, {} events",
        scenario.duration,
        out.trace.events.len()
    );
    for (kind, n) in counts {
        println!("  {kind:<16} {n}");
    }

    let text = out.trace.to_jsonl();
    let replayed = replay(&Trace::parse(&text)?)?;
    assert_eq!(replayed, out.final_state);
    println!(
        "final pose ({:.3}, {:.3}); replay agrees: {:?}",
        out.final_pose.x, out.final_pose.y, replayed
    );
    Ok(())
}
