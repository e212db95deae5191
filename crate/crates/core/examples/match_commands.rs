//! Matching spoken text against the command table, exactly and fuzzily.
//!
//! ```text
//! cargo run --example match_commands -- "Go forward!" "lights on"
//! ```

use voicebot::grammar::{
    match_exact, match_fuzzy, normalize, similarity, CommandTable, DEFAULT_FUZZY_THRESHOLD,
};

fn main() {
    let table = CommandTable::default();
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = ["Forward", "go forward", "lights on", "horn pls", "xylophone"]
            .map(String::from)
            .to_vec();
    }

    println!(
        "{:<14} {:<14} {:<10} fuzzy @ 0.75",
        "input", "normalized", "exact"
    );
    for raw in &inputs {
        let text = normalize(raw);
        let exact = match_exact(&text, &table).map_or("-".to_string(), |c| c.to_string());
        let fuzzy = match_fuzzy(&text, &table, DEFAULT_FUZZY_THRESHOLD);
        let verdict = match fuzzy.command {
            Some(c) => format!("{c} ({:?}, {:.3})", fuzzy.method, fuzzy.score),
            None => format!("no match (best {:.3})", fuzzy.score),
        };
        println!("{raw:<14} {text:<14} {exact:<10} {verdict}");
    }

    println!(
        "\nsimilarity(\"go forward\", \"forward\") = {:.6}",
        similarity("go forward", "forward")
    );
    println!(
        "similarity(\"light on\", \"light off\") = {:.6}",
        similarity("light on", "light off")
    );
}
