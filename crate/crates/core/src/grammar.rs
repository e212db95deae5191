//! Utterance normalization and command matching.
//!
//! Incoming text is first reduced to a canonical form by [`normalize`], then
//! looked up in a [`CommandTable`] either byte-for-byte ([`match_exact`]) or
//! by character-bigram cosine similarity ([`match_fuzzy`]).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default acceptance threshold for fuzzy matching.
pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.75;

/// Utterances longer than this are rejected by the serial link.
pub const MAX_UTTERANCE_BYTES: usize = 256;

/// A canonical robot instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Command {
    Forward,
    Backward,
    Left,
    Right,
    Stop,
    LightOn,
    LightOff,
    HornOn,
    HornOff,
}

impl Command {
    /// All commands in default table order.
    pub const ALL: [Command; 9] = [
        Command::Forward,
        Command::Backward,
        Command::Left,
        Command::Right,
        Command::Stop,
        Command::LightOn,
        Command::LightOff,
        Command::HornOn,
        Command::HornOff,
    ];

    pub fn default_phrase(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Backward => "backward",
            Command::Left => "left",
            Command::Right => "right",
            Command::Stop => "stop",
            Command::LightOn => "light on",
            Command::LightOff => "light off",
            Command::HornOn => "horn please",
            Command::HornOff => "horn stop",
        }
    }

    /// True for commands that change the drive motion.
    pub fn is_motion(self) -> bool {
        matches!(
            self,
            Command::Forward | Command::Backward | Command::Left | Command::Right | Command::Stop
        )
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Raw text as received by the firmware, stamped with the tick it arrived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub raw_text: String,
    pub received_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMethod {
    Exact,
    Fuzzy,
    NoMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub command: Option<Command>,
    pub score: f64,
    pub method: MatchMethod,
}

impl MatchResult {
    fn exact(command: Command) -> Self {
        MatchResult {
            command: Some(command),
            score: 1.0,
            method: MatchMethod::Exact,
        }
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("command {0} appears more than once")]
    DuplicateCommand(Command),
    #[error("command {0} has no phrase")]
    MissingCommand(Command),
    #[error("phrase {0:?} is bound to more than one command")]
    DuplicatePhrase(String),
    #[error("phrase {phrase:?} is not in canonical form (expected {expected:?})")]
    NotCanonical { phrase: String, expected: String },
    #[error("failed to read command table: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse command table: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Ordered mapping from commands to their canonical phrases.
///
/// Order matters: fuzzy-match ties go to the earliest entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTable {
    entries: Vec<(Command, String)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    command: Vec<TableEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    kind: Command,
    phrase: String,
}

impl Default for CommandTable {
    fn default() -> Self {
        CommandTable {
            entries: Command::ALL
                .iter()
                .map(|&c| (c, c.default_phrase().to_owned()))
                .collect(),
        }
    }
}

impl CommandTable {
    /// Builds a table, checking that every command appears exactly once
    /// with a distinct, already-normalized, nonempty phrase.
    pub fn new(entries: Vec<(Command, String)>) -> Result<Self, TableError> {
        for (i, (cmd, phrase)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(c, _)| c == cmd) {
                return Err(TableError::DuplicateCommand(*cmd));
            }
            if entries[..i].iter().any(|(_, p)| p == phrase) {
                return Err(TableError::DuplicatePhrase(phrase.clone()));
            }
            let expected = normalize(phrase);
            if expected != *phrase || expected.is_empty() {
                return Err(TableError::NotCanonical {
                    phrase: phrase.clone(),
                    expected,
                });
            }
        }
        if let Some(missing) = Command::ALL
            .iter()
            .find(|c| !entries.iter().any(|(e, _)| e == *c))
        {
            return Err(TableError::MissingCommand(*missing));
        }
        Ok(CommandTable { entries })
    }

    /// Parses the `[[command]] kind = "..." phrase = "..."` format.
    pub fn from_toml_str(text: &str) -> Result<Self, TableError> {
        let file: TableFile = toml::from_str(text)?;
        Self::new(file.command.into_iter().map(|e| (e.kind, e.phrase)).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> impl Iterator<Item = (Command, &str)> {
        self.entries.iter().map(|(c, p)| (*c, p.as_str()))
    }

    pub fn phrase(&self, command: Command) -> &str {
        self.entries()
            .find(|(c, _)| *c == command)
            .map(|(_, p)| p)
            .expect("table holds every command")
    }
}

/// Reduces arbitrary bytes to canonical form: ASCII lowercase, letters,
/// digits and single spaces only, no leading or trailing space.
pub fn normalize(text: impl AsRef<[u8]>) -> String {
    let mut out = String::new();
    let mut pending_space = false;
    for &b in text.as_ref() {
        if b.is_ascii_whitespace() {
            pending_space = true;
        } else if b.is_ascii_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(b.to_ascii_lowercase() as char);
        }
    }
    out
}

pub fn match_exact(utterance: &str, table: &CommandTable) -> Option<Command> {
    table
        .entries()
        .find(|(_, phrase)| *phrase == utterance)
        .map(|(cmd, _)| cmd)
}

fn bigrams(s: &str) -> BTreeMap<[u8; 2], u64> {
    let mut padded = Vec::with_capacity(s.len() + 2);
    padded.push(b' ');
    padded.extend_from_slice(s.as_bytes());
    padded.push(b' ');
    let mut counts = BTreeMap::new();
    for w in padded.windows(2) {
        *counts.entry([w[0], w[1]]).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity of the character-bigram count vectors of the
/// space-padded inputs.
///
/// Returns exactly 1.0 only for equal nonempty strings, and 0.0 when either
/// side is empty.
pub fn similarity(a: &str, b: &str) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let (va, vb) = (bigrams(a), bigrams(b));
    let dot: u64 = va.iter().filter_map(|(k, x)| vb.get(k).map(|y| x * y)).sum();
    let na: u64 = va.values().map(|x| x * x).sum();
    let nb: u64 = vb.values().map(|x| x * x).sum();
    let cos = dot as f64 / ((na * nb) as f64).sqrt();
    // distinct strings can share a bigram multiset
    cos.min(f64::from_bits(1.0f64.to_bits() - 1))
}

/// Scores `utterance` against every phrase and accepts the best one if it
/// reaches `threshold`. Ties go to the earlier table entry.
pub fn match_fuzzy(utterance: &str, table: &CommandTable, threshold: f64) -> MatchResult {
    debug_assert!((0.0..=1.0).contains(&threshold));
    let mut best: Option<(Command, f64)> = None;
    for (cmd, phrase) in table.entries() {
        let score = similarity(utterance, phrase);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((cmd, score));
        }
    }
    let (cmd, score) = best.expect("table is never empty");
    if score == 1.0 {
        MatchResult::exact(cmd)
    } else if score >= threshold {
        MatchResult {
            command: Some(cmd),
            score,
            method: MatchMethod::Fuzzy,
        }
    } else {
        MatchResult {
            command: None,
            score,
            method: MatchMethod::NoMatch,
        }
    }
}

/// How the firmware maps normalized text to commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matcher {
    Exact,
    Fuzzy { threshold: f64 },
}

impl Matcher {
    pub fn run(self, utterance: &str, table: &CommandTable) -> MatchResult {
        match self {
            Matcher::Exact => match match_exact(utterance, table) {
                Some(cmd) => MatchResult::exact(cmd),
                None => MatchResult {
                    command: None,
                    score: 0.0,
                    method: MatchMethod::NoMatch,
                },
            },
            Matcher::Fuzzy { threshold } => match_fuzzy(utterance, table, threshold),
        }
    }
}
