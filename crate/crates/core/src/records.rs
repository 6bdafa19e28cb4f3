//! Record-per-line (JSON Lines) helpers shared by every file format.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// A record that failed to decode, with its 1-based line number.
#[derive(Debug)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// Reads non-blank lines with their 1-based line numbers.
pub fn read_lines(path: &Path) -> io::Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((idx + 1, line));
    }
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(line_no: usize, text: &str) -> Result<T, LineError> {
    serde_json::from_str(text).map_err(|e| LineError {
        line: line_no,
        reason: e.to_string(),
    })
}

/// Serializes one record per line, newline-terminated.
pub fn encode_all<T: Serialize>(records: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for record in records {
        // Plain data structs with string keys cannot fail to serialize.
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_all<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> io::Result<()> {
    let mut file = File::create(path)?;
    file.write_all(encode_all(records).as_bytes())?;
    file.flush()
}
