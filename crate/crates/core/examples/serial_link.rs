//! Framing commands onto a byte stream and sending them over the simulated
//! radio link.

use voicebot::link::{Frame, FrameDecoder, Link, LinkConfig, SendReceipt};

fn main() {
    // The wire format is newline-terminated frames; chunks can split anywhere.
    let mut wire = Vec::new();
    for text in ["forward", "light on", "stop"] {
        wire.extend(Frame::new(text).unwrap().to_wire());
    }
    let mut decoder = FrameDecoder::new();
    for chunk in wire.chunks(5) {
        for frame in decoder.feed(chunk) {
            println!("decoded {:?}", frame.unwrap().text());
        }
    }

    let mut link = Link::new(LinkConfig {
        latency: 3,
        drop_probability: 0.25,
        seed: 42,
        ..LinkConfig::default()
    })
    .unwrap();

    for (now, separation) in [(0, 10.0), (1, 49.0), (2, 50.0), (3, 51.0), (4, 20.0), (5, 20.0)] {
        link.set_separation(separation);
        let receipt = link
            .send_from(format!("msg {now}").as_bytes(), Some("console".into()), now)
            .unwrap();
        match receipt {
            SendReceipt::Delivered { deliver_at } => {
                println!("t={now} at {separation} m: due at t={deliver_at}")
            }
            SendReceipt::Dropped(why) => println!("t={now} at {separation} m: dropped ({why:?})"),
        }
    }
    for now in 0..10 {
        for d in link.poll(now) {
            println!("t={now}: delivered {:?} sent at t={}", d.frame.text(), d.sent_at);
        }
    }
}
