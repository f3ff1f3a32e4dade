//! Session logs for simulated runs, in the same format the service writes.

use emobandit_core::experiment::run_traced;
use emobandit_core::{
    CommandActionMapping, ExperimentCondition, ExperimentError, FrameSequence, Label, SessionTrace,
};

use crate::log::{LogEntry, SessionConfig, SessionEvent, SessionStatus};
use crate::session::SessionRecord;

pub fn session_id(condition: &ExperimentCondition, run: usize) -> String {
    format!("{}-run{run}", condition.name)
}

/// Builds the log of one simulated session. The recognized command is logged
/// as `command` and the teacher's intent as `intended_command`.
pub fn trace_to_entries(
    session_id: &str,
    user_id: &str,
    condition: &ExperimentCondition,
    mapping: &CommandActionMapping,
    trace: &SessionTrace,
) -> Vec<LogEntry> {
    let config = SessionConfig {
        reward: condition.reward,
        init: condition.init,
        epsilon: condition.epsilon,
        max_rounds: (trace.trials.len() as u32).max(1),
        action_names: Vec::new(),
    };
    let mut entries = vec![LogEntry::new(
        0,
        None,
        SessionEvent::Created {
            session_id: session_id.into(),
            user_id: user_id.into(),
            k: condition.k,
            mapping: mapping.clone(),
            config,
        },
    )];
    let mut issued = vec![false; condition.k];
    for t in &trace.trials {
        issued[t.perceived.index()] = true;
        let seq = entries.len() as u64;
        entries.push(LogEntry::new(
            seq,
            None,
            SessionEvent::CommandIssued {
                round: t.trial,
                command: t.perceived,
                action: t.action,
                intended_command: Some(t.intended),
            },
        ));
        entries.push(LogEntry::new(
            seq + 1,
            None,
            SessionEvent::FeedbackSubmitted {
                round: t.trial,
                frames: FrameSequence::single(t.emotion),
                label: Label::from_satisfied(t.satisfied),
                mean: t.emotion,
                reward: t.reward,
                q_after: t.q_after.clone(),
            },
        ));
    }
    let status = if issued.iter().all(|&b| b) {
        SessionStatus::Completed
    } else {
        SessionStatus::Abandoned
    };
    let seq = entries.len() as u64;
    entries.push(LogEntry::new(seq, None, SessionEvent::StatusChanged { status }));
    entries
}

/// Runs one simulated session and returns its log.
pub fn simulate_log(
    condition: &ExperimentCondition,
    run: usize,
) -> Result<Vec<LogEntry>, ExperimentError> {
    let (summary, trace) = run_traced(condition, run)?;
    let id = session_id(condition, run);
    Ok(trace_to_entries(&id, &id, condition, &summary.mapping, &trace))
}

/// Replays a simulated log into a verified record.
pub fn simulate_record(condition: &ExperimentCondition, run: usize) -> SessionRecord {
    let entries = simulate_log(condition, run).expect("valid condition");
    SessionRecord::replay(entries).expect("simulated logs always verify")
}
