//! Starts the live service on a free port and drives it like a headless
//! console: say "forward", then "light on", and watch the snapshots.

use futures::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use voicebot::scenario::Scenario;
use voicebot::service::{start, ClientMessage, ServeOptions, ServerMessage};
use voicebot::trace::EventKind;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/wall_ahead.toml"))?;
    scenario.script.clear();
    let handle = start(
        scenario,
        &ServeOptions {
            port: 0,
            ..Default::default()
        },
    )
    .await?;
    println!("serving on {}", handle.ws_url());

    let (mut ws, _) = tokio_tungstenite::connect_async(handle.ws_url()).await?;
    let mut said_light = false;
    ws.send(Message::text(serde_json::to_string(&ClientMessage::utterance(
        "forward", "headless",
    ))?))
    .await?;

    while let Some(msg) = ws.next().await {
        let Message::Text(text) = msg? else { continue };
        match serde_json::from_str::<ServerMessage>(text.as_str())? {
            ServerMessage::Hello { payload, .. } => println!("hello, epoch {}", payload.epoch),
            ServerMessage::Event { payload, .. } => match &payload.kind {
                EventKind::CommandMatched { text, command, .. } => {
                    println!("t={} heard {text:?} as {command}", payload.tick)
                }
                EventKind::MotionChanged { from, to } => println!("t={} {from:?} -> {to:?}", payload.tick),
                _ => {}
            },
            ServerMessage::Snapshot { payload, .. } => {
                let EventKind::Snapshot(s) = &payload.kind else {
                    continue;
                };
                if payload.tick % 25 == 0 {
                    println!(
                        "t={} {:?} light={} at x={:.3}",
                        payload.tick, s.motion, s.light, s.pose.x
                    );
                }
                if payload.tick >= 20 && !said_light {
                    said_light = true;
                    ws.send(Message::text(serde_json::to_string(&ClientMessage::utterance(
                        "light on", "headless",
                    ))?))
                    .await?;
                }
                if s.light && payload.tick >= 300 {
                    break;
                }
            }
            ServerMessage::Error { payload, .. } => println!("error: {}", payload.message),
        }
    }
    handle.shutdown().await?;
    Ok(())
}
