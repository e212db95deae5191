#![allow(dead_code)]

use std::path::{Path, PathBuf};

use voicebot::scenario::Scenario;

pub fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

/// Every scenario shipped in `scenarios/`, sorted by name.
pub fn shipped_scenarios() -> Vec<(String, PathBuf)> {
    let mut out: Vec<_> = std::fs::read_dir(crate_dir().join("scenarios"))
        .expect("scenarios dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), p))
        .collect();
    out.sort();
    out
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(crate_dir().join("scenarios").join(format!("{name}.toml"))).unwrap()
}

/// Compares `actual` with a stored file, or rewrites it when
/// `UPDATE_GOLDEN` is set. Returns whether they matched.
pub fn check_golden(rel: &str, actual: &str) -> Result<(), String> {
    let path = crate_dir().join(rel);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()));
    Err(format!(
        "{} differs at line {}:\n  expected: {}\n  actual:   {}",
        path.display(),
        line + 1,
        expected.lines().nth(line).unwrap_or("<eof>"),
        actual.lines().nth(line).unwrap_or("<eof>"),
    ))
}
