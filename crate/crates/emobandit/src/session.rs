//! Interactive teaching session as a fold over its log.
//!
//! Live mutations are two-phase: a `prepare_*` call validates the request and
//! builds the next [`LogEntry`] without touching state, the caller persists it,
//! then [`SessionRecord::apply`] commits it. Replay runs the same `apply` over
//! a stored log, which recomputes every reward and action value and compares
//! them bit-for-bit with the stored ones.

use emobandit_core::bandit::BanditError;
use emobandit_core::{
    ActionId, ActionValueGaps, AgentState, CommandActionMapping, CommandId, EmotionError,
    EmotionVector, FrameSequence, Label, MappingStatus, Reward,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::log::{LogEntry, SessionConfig, SessionEvent, SessionStatus, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("invalid command-action mapping: {0}")]
    InvalidMapping(String),
    #[error("k must be at least 2 and match the mapping")]
    InvalidK,
    #[error("invalid session configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("command {0} is out of range")]
    InvalidCommand(u32),
    #[error("session is not active")]
    SessionNotActive,
    #[error("a round is waiting for feedback")]
    FeedbackPending,
    #[error("no round is waiting for feedback")]
    NoPendingRound,
    #[error("round limit of {0} reached")]
    RoundLimitReached(u32),
    #[error("every command must be issued at least once and no feedback may be pending")]
    IncompleteSession,
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("{0}")]
    NotAProbabilityVector(String),
    #[error("frame stride {given} differs from the session stride {session}")]
    StrideMismatch { given: usize, session: usize },
    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),
    #[error("event {seq}{}: {reason}", round.map(|r| format!(" (round {r})")).unwrap_or_default())]
    Divergence { seq: u64, round: Option<u32>, reason: String },
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::InvalidMapping(_) => "invalid_mapping",
            SessionError::InvalidK => "invalid_k",
            SessionError::InvalidConfig(_) => "invalid_config",
            SessionError::InvalidCommand(_) => "invalid_command",
            SessionError::SessionNotActive => "session_not_active",
            SessionError::FeedbackPending => "feedback_pending",
            SessionError::NoPendingRound => "no_pending_round",
            SessionError::RoundLimitReached(_) => "round_limit_reached",
            SessionError::IncompleteSession => "incomplete_session",
            SessionError::EmptySequence => "empty_sequence",
            SessionError::NotAProbabilityVector(_) => "not_a_probability_vector",
            SessionError::StrideMismatch { .. } => "stride_mismatch",
            SessionError::InvalidFeedback(_) => "invalid_feedback",
            SessionError::Divergence { .. } => "divergence",
        }
    }
}

impl From<EmotionError> for SessionError {
    fn from(e: EmotionError) -> Self {
        match e {
            EmotionError::EmptySequence => SessionError::EmptySequence,
            EmotionError::NotAProbabilityVector(msg) => {
                SessionError::NotAProbabilityVector(format!("not a probability vector: {msg}"))
            }
            other => SessionError::InvalidFeedback(other.to_string()),
        }
    }
}

/// A command awaiting feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingRound {
    pub round: u32,
    pub command: CommandId,
    pub action: ActionId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intended_command: Option<CommandId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub issued_at_ms: Option<u64>,
}

/// One completed command → action → feedback → update cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRound {
    pub round: u32,
    pub command: CommandId,
    pub action: ActionId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intended_command: Option<CommandId>,
    pub frames: FrameSequence,
    pub mean: EmotionVector,
    pub reward: Reward,
    pub label: Label,
    pub q_after: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub session_id: String,
    pub user_id: String,
    pub mapping: CommandActionMapping,
    pub config: SessionConfig,
    pub agent: AgentState,
    pub trace: Vec<FeedbackRound>,
    pub pending: Option<PendingRound>,
    pub status: SessionStatus,
    pub issue_counts: Vec<u32>,
    events: Vec<LogEntry>,
}

/// Read-only view served to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub user_id: String,
    pub k: usize,
    pub status: SessionStatus,
    pub mapping: CommandActionMapping,
    pub config: SessionConfig,
    pub agent: AgentState,
    pub learned: Vec<MappingStatus>,
    pub gaps: Vec<ActionValueGaps>,
    pub correct: usize,
    pub issue_counts: Vec<u32>,
    pub pending: Option<PendingRound>,
    pub trace: Vec<FeedbackRound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub user_id: String,
    pub k: usize,
    pub status: SessionStatus,
    pub rounds: usize,
    pub correct: usize,
}

fn validate_config(k: usize, config: &SessionConfig) -> Result<(), SessionError> {
    if config.reward.stride == 0 {
        return Err(SessionError::InvalidConfig("stride must be at least 1"));
    }
    if !(0.0..=1.0).contains(&config.epsilon) {
        return Err(SessionError::InvalidConfig("epsilon must lie in [0, 1]"));
    }
    if config.max_rounds == 0 {
        return Err(SessionError::InvalidConfig("max_rounds must be at least 1"));
    }
    if !config.action_names.is_empty() && config.action_names.len() != k {
        return Err(SessionError::InvalidConfig("action_names needs exactly k entries"));
    }
    Ok(())
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl SessionRecord {
    /// Builds the `Created` entry for a new session.
    pub fn prepare_create(
        session_id: &str,
        user_id: &str,
        k: usize,
        mapping: CommandActionMapping,
        config: SessionConfig,
        timestamp_ms: Option<u64>,
    ) -> Result<LogEntry, SessionError> {
        if k < 2 || mapping.k() != k {
            return Err(SessionError::InvalidK);
        }
        validate_config(k, &config)?;
        Ok(LogEntry::new(
            0,
            timestamp_ms,
            SessionEvent::Created {
                session_id: session_id.into(),
                user_id: user_id.into(),
                k,
                mapping,
                config,
            },
        ))
    }

    /// Starts a record from its `Created` entry.
    pub fn from_created(entry: LogEntry) -> Result<Self, SessionError> {
        let diverge = |reason: &str| SessionError::Divergence {
            seq: entry.seq,
            round: None,
            reason: reason.into(),
        };
        if entry.schema_version != SCHEMA_VERSION {
            return Err(diverge("unsupported schema version"));
        }
        if entry.seq != 0 {
            return Err(diverge("log must start at seq 0"));
        }
        let SessionEvent::Created { session_id, user_id, k, mapping, config } = &entry.event else {
            return Err(diverge("first event must be `created`"));
        };
        if *k < 2 || mapping.k() != *k {
            return Err(diverge("k does not match the mapping"));
        }
        validate_config(*k, config).map_err(|e| diverge(&e.to_string()))?;
        let agent = AgentState::new(*k, config.init)
            .map_err(|e| diverge(&e.to_string()))?
            .with_epsilon(config.epsilon);
        Ok(SessionRecord {
            session_id: session_id.clone(),
            user_id: user_id.clone(),
            mapping: mapping.clone(),
            config: config.clone(),
            agent,
            trace: Vec::new(),
            pending: None,
            status: SessionStatus::Active,
            issue_counts: vec![0; *k],
            events: vec![entry],
        })
    }

    /// Folds a complete log, verifying every entry.
    pub fn replay(entries: impl IntoIterator<Item = LogEntry>) -> Result<Self, SessionError> {
        let mut it = entries.into_iter();
        let first = it.next().ok_or(SessionError::Divergence {
            seq: 0,
            round: None,
            reason: "log is empty".into(),
        })?;
        let mut record = SessionRecord::from_created(first)?;
        for entry in it {
            record.apply(entry)?;
        }
        Ok(record)
    }

    pub fn k(&self) -> usize {
        self.mapping.k()
    }

    pub fn events(&self) -> &[LogEntry] {
        &self.events
    }

    fn next_seq(&self) -> u64 {
        self.events.len() as u64
    }

    fn check_command(&self, command: u32) -> Result<CommandId, SessionError> {
        CommandId::new(command)
            .filter(|c| c.index() < self.k())
            .ok_or(SessionError::InvalidCommand(command))
    }

    fn all_issued(&self) -> bool {
        self.issue_counts.iter().all(|&n| n >= 1)
    }

    /// Selects an action for `command` and builds the `CommandIssued` entry.
    pub fn prepare_command<R: Rng + ?Sized>(
        &self,
        command: u32,
        rng: &mut R,
        timestamp_ms: Option<u64>,
    ) -> Result<LogEntry, SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::SessionNotActive);
        }
        if self.pending.is_some() {
            return Err(SessionError::FeedbackPending);
        }
        if self.trace.len() as u32 >= self.config.max_rounds {
            return Err(SessionError::RoundLimitReached(self.config.max_rounds));
        }
        let command = self.check_command(command)?;
        let action = self
            .agent
            .select_action(command, rng)
            .map_err(|e| SessionError::InvalidFeedback(e.to_string()))?;
        Ok(LogEntry::new(
            self.next_seq(),
            timestamp_ms,
            SessionEvent::CommandIssued {
                round: self.trace.len() as u32,
                command,
                action,
                intended_command: None,
            },
        ))
    }

    /// Scores `frames` for the pending round and builds the `FeedbackSubmitted` entry.
    pub fn prepare_feedback(
        &self,
        frames: FrameSequence,
        label: Label,
        timestamp_ms: Option<u64>,
    ) -> Result<LogEntry, SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::SessionNotActive);
        }
        let pending = self.pending.ok_or(SessionError::NoPendingRound)?;
        let (mean, reward) = self.config.reward.evaluate(&frames)?;
        let mut agent = self.agent.clone();
        agent
            .update(pending.command, pending.action, reward)
            .map_err(|e| SessionError::InvalidFeedback(e.to_string()))?;
        let q_after = agent.bandits()[pending.command.index()].values().to_vec();
        Ok(LogEntry::new(
            self.next_seq(),
            timestamp_ms,
            SessionEvent::FeedbackSubmitted { round: pending.round, frames, label, mean, reward, q_after },
        ))
    }

    pub fn prepare_status(
        &self,
        status: SessionStatus,
        timestamp_ms: Option<u64>,
    ) -> Result<LogEntry, SessionError> {
        if self.status != SessionStatus::Active {
            return Err(SessionError::SessionNotActive);
        }
        match status {
            SessionStatus::Active => return Err(SessionError::InvalidConfig("cannot re-activate")),
            SessionStatus::Completed if !self.all_issued() || self.pending.is_some() => {
                return Err(SessionError::IncompleteSession)
            }
            _ => {}
        }
        Ok(LogEntry::new(self.next_seq(), timestamp_ms, SessionEvent::StatusChanged { status }))
    }

    /// Commits one entry, recomputing and checking everything derivable.
    pub fn apply(&mut self, entry: LogEntry) -> Result<(), SessionError> {
        let seq = entry.seq;
        let round = entry.event.round();
        let diverge = |reason: String| SessionError::Divergence { seq, round, reason };
        if entry.schema_version != SCHEMA_VERSION {
            return Err(diverge("unsupported schema version".into()));
        }
        if seq != self.next_seq() {
            return Err(diverge(format!("expected seq {}", self.next_seq())));
        }
        match &entry.event {
            SessionEvent::Created { .. } => return Err(diverge("duplicate `created` event".into())),
            SessionEvent::CommandIssued { round, command, action, intended_command } => {
                if self.status != SessionStatus::Active {
                    return Err(diverge("command issued on an inactive session".into()));
                }
                if self.pending.is_some() {
                    return Err(diverge("command issued while feedback was pending".into()));
                }
                if *round != self.trace.len() as u32 {
                    return Err(diverge(format!("expected round {}", self.trace.len())));
                }
                if self.trace.len() as u32 >= self.config.max_rounds {
                    return Err(diverge("round limit exceeded".into()));
                }
                let k = self.k();
                if command.index() >= k || action.index() >= k {
                    return Err(diverge("command or action out of range".into()));
                }
                if intended_command.is_some_and(|c| c.index() >= k) {
                    return Err(diverge("intended command out of range".into()));
                }
                let bandit = &self.agent.bandits()[command.index()];
                if bandit.epsilon() == 0.0 && !bandit.argmax_set().contains(action) {
                    return Err(diverge(format!("action {action} is not a greedy choice")));
                }
                self.issue_counts[command.index()] += 1;
                self.pending = Some(PendingRound {
                    round: *round,
                    command: *command,
                    action: *action,
                    intended_command: *intended_command,
                    issued_at_ms: entry.timestamp_ms,
                });
            }
            SessionEvent::FeedbackSubmitted { round, frames, label, mean, reward, q_after } => {
                let pending =
                    self.pending.ok_or_else(|| diverge("feedback without a pending round".into()))?;
                if *round != pending.round {
                    return Err(diverge(format!("expected round {}", pending.round)));
                }
                let (mean_check, reward_check) = self
                    .config
                    .reward
                    .evaluate(frames)
                    .map_err(|e| diverge(format!("frames: {e}")))?;
                if reward_check.0.to_bits() != reward.0.to_bits() {
                    return Err(diverge(format!(
                        "stored reward {} but frames give {}",
                        reward.0, reward_check.0
                    )));
                }
                if !same_bits(mean_check.as_array(), mean.as_array()) {
                    return Err(diverge("stored mean vector differs from recomputation".into()));
                }
                let mut agent = self.agent.clone();
                agent
                    .update(pending.command, pending.action, *reward)
                    .map_err(|e: BanditError| diverge(e.to_string()))?;
                let q_check = agent.bandits()[pending.command.index()].values();
                if !same_bits(q_check, q_after) {
                    return Err(diverge("stored action values differ from recomputation".into()));
                }
                self.agent = agent;
                self.pending = None;
                self.trace.push(FeedbackRound {
                    round: *round,
                    command: pending.command,
                    action: pending.action,
                    intended_command: pending.intended_command,
                    frames: frames.clone(),
                    mean: *mean,
                    reward: *reward,
                    label: *label,
                    q_after: q_after.clone(),
                    timestamp_ms: entry.timestamp_ms,
                });
            }
            SessionEvent::StatusChanged { status } => {
                if self.status != SessionStatus::Active {
                    return Err(diverge("status change on an inactive session".into()));
                }
                match status {
                    SessionStatus::Active => return Err(diverge("cannot re-activate".into())),
                    SessionStatus::Completed if !self.all_issued() || self.pending.is_some() => {
                        return Err(diverge("completed before every command was issued".into()))
                    }
                    _ => {}
                }
                self.status = *status;
            }
        }
        self.events.push(entry);
        Ok(())
    }

    pub fn learned(&self) -> Vec<MappingStatus> {
        self.agent.learned_mapping()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.session_id.clone(),
            user_id: self.user_id.clone(),
            k: self.k(),
            status: self.status,
            mapping: self.mapping.clone(),
            config: self.config.clone(),
            agent: self.agent.clone(),
            learned: self.learned(),
            gaps: self.agent.action_value_gaps(&self.mapping).expect("same k"),
            correct: self.agent.correct_count(&self.mapping),
            issue_counts: self.issue_counts.clone(),
            pending: self.pending,
            trace: self.trace.clone(),
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.session_id.clone(),
            user_id: self.user_id.clone(),
            k: self.k(),
            status: self.status,
            rounds: self.trace.len(),
            correct: self.agent.correct_count(&self.mapping),
        }
    }

    pub fn export(&self) -> String {
        crate::log::to_jsonl(&self.events)
    }
}
