//! Append-only JSONL session log.
//!
//! Every line is one [`LogEntry`]. A session's state is the fold of its
//! entries in order (see [`crate::session::SessionRecord::apply`]), so the
//! same file serves crash recovery, export and analysis input.

use std::io::{BufRead, Write};

use emobandit_core::{
    ActionId, CommandActionMapping, CommandId, EmotionVector, FrameSequence, InitMode, Label,
    Reward, RewardConfig,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Default cap on feedback rounds per live session.
pub const DEFAULT_MAX_ROUNDS: u32 = 30;

/// Action names given to three-action sessions created without names.
pub const STUDY_ACTIONS: [&str; 3] = ["hammer", "book", "bottle"];

fn default_max_rounds() -> u32 {
    DEFAULT_MAX_ROUNDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub reward: RewardConfig,
    pub init: InitMode,
    pub epsilon: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    /// Display names of the actions, in action order. Empty or exactly k entries.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub action_names: Vec<String>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            reward: RewardConfig::default(),
            init: InitMode::Neutral,
            epsilon: 0.0,
            max_rounds: DEFAULT_MAX_ROUNDS,
            action_names: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        user_id: String,
        k: usize,
        mapping: CommandActionMapping,
        config: SessionConfig,
    },
    CommandIssued {
        round: u32,
        command: CommandId,
        action: ActionId,
        /// Set by the simulator when the recognized command differs from the intended one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        intended_command: Option<CommandId>,
    },
    FeedbackSubmitted {
        round: u32,
        frames: FrameSequence,
        label: Label,
        mean: EmotionVector,
        reward: Reward,
        /// Action values of the updated bandit after this round.
        q_after: Vec<f64>,
    },
    StatusChanged {
        status: SessionStatus,
    },
}

impl SessionEvent {
    pub fn round(&self) -> Option<u32> {
        match self {
            SessionEvent::CommandIssued { round, .. } | SessionEvent::FeedbackSubmitted { round, .. } => {
                Some(*round)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub schema_version: u32,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
    #[serde(flatten)]
    pub event: SessionEvent,
}

impl LogEntry {
    pub fn new(seq: u64, timestamp_ms: Option<u64>, event: SessionEvent) -> Self {
        LogEntry { schema_version: SCHEMA_VERSION, seq, timestamp_ms, event }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log entries always serialize")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogReadError {
    #[error("line {line}: {source}")]
    Malformed { line: usize, source: serde_json::Error },
    #[error("line {line} is not in canonical form")]
    NonCanonical { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses a JSONL log. Blank lines are skipped.
///
/// With `strict`, each line must equal the re-serialization of what it parsed
/// to, so any edit that happens to parse to the same values is still caught.
pub fn parse_lines(text: &str, strict: bool) -> Result<Vec<LogEntry>, LogReadError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(line)
            .map_err(|source| LogReadError::Malformed { line: i + 1, source })?;
        if strict && entry.to_line() != line {
            return Err(LogReadError::NonCanonical { line: i + 1 });
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Reads a log written by this crate, dropping a torn final line (no trailing
/// newline and unparseable) left behind by a crash mid-append.
pub fn read_recoverable<R: BufRead>(mut reader: R) -> Result<Vec<LogEntry>, LogReadError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if !text.is_empty() && !text.ends_with('\n') {
        let cut = text.rfind('\n').map_or(0, |i| i + 1);
        if serde_json::from_str::<LogEntry>(&text[cut..]).is_err() {
            tracing::warn!("dropping torn final log line");
            text.truncate(cut);
        }
    }
    parse_lines(&text, true)
}

pub fn write_entries<W: Write>(mut w: W, entries: &[LogEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(w, "{}", e.to_line())?;
    }
    Ok(())
}

pub fn to_jsonl(entries: &[LogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn created() -> LogEntry {
        LogEntry::new(
            0,
            Some(1),
            SessionEvent::Created {
                session_id: "s".into(),
                user_id: "u".into(),
                k: 3,
                mapping: CommandActionMapping::from_numbers(&[2, 3, 1]).unwrap(),
                config: SessionConfig::default(),
            },
        )
    }

    #[test]
    fn entries_are_flat_tagged_objects() {
        let v: serde_json::Value = serde_json::from_str(&created().to_line()).unwrap();
        assert_eq!(v["type"], "created");
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert_eq!(v["mapping"], serde_json::json!([2, 3, 1]));
        assert_eq!(v["config"]["reward"]["scaling"]["happy"], 3.0);
        assert_eq!(v["config"]["reward"]["stride"], 12);
    }

    #[test]
    fn strict_parse_rejects_reformatted_lines() {
        let line = created().to_line();
        assert_eq!(parse_lines(&line, true).unwrap(), vec![created()]);
        let spaced = line.replacen(":", ": ", 1);
        assert!(parse_lines(&spaced, false).is_ok());
        assert!(matches!(parse_lines(&spaced, true), Err(LogReadError::NonCanonical { line: 1 })));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let mut text = to_jsonl(&[created()]);
        text.push_str("{\"schema_version\":1,\"se");
        let entries = read_recoverable(text.as_bytes()).unwrap();
        assert_eq!(entries.len(), 1);
    }
}
