use emobandit::log::{parse_lines, to_jsonl, SessionEvent};
use emobandit::session::{SessionError, SessionRecord};
use emobandit::simlog::simulate_log;
use emobandit_core::ExperimentCondition;

fn log() -> Vec<emobandit::log::LogEntry> {
    let c = ExperimentCondition::new("C1", 0.8, 0.9, 0.85).with_seed(42);
    simulate_log(&c, 0).unwrap()
}

#[test]
fn exported_log_is_the_stored_log() {
    let entries = log();
    let record = SessionRecord::replay(entries.clone()).unwrap();
    assert_eq!(record.export(), to_jsonl(&entries));
    assert_eq!(parse_lines(&record.export(), true).unwrap(), entries);
}

#[test]
fn tampering_is_reported_with_position() {
    let mut entries = log();
    let idx = entries.iter().position(|e| matches!(e.event, SessionEvent::FeedbackSubmitted { round: 7, .. })).unwrap();
    if let SessionEvent::FeedbackSubmitted { q_after, .. } = &mut entries[idx].event {
        q_after[0] = f64::from_bits(q_after[0].to_bits() ^ 1);
    }
    match SessionRecord::replay(entries) {
        Err(SessionError::Divergence { seq, round, .. }) => {
            assert_eq!(seq, idx as u64);
            assert_eq!(round, Some(7));
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn structural_edits_are_rejected() {
    let entries = log();

    let mut dropped = entries.clone();
    dropped.remove(3);
    assert!(SessionRecord::replay(dropped).is_err());

    // Swap in a non-greedy action at the first round whose greedy choice is unique.
    let (i, other) = (1..entries.len())
        .find_map(|i| {
            let SessionEvent::CommandIssued { command, action, .. } = entries[i].event else { return None };
            let prefix = SessionRecord::replay(entries[..i].to_vec()).unwrap();
            let greedy = prefix.agent.bandits()[command.index()].argmax_set();
            (greedy.len() == 1).then(|| (i, emobandit_core::ActionId::from_index((action.index() + 1) % 3)))
        })
        .unwrap();
    let mut wrong_action = entries.clone();
    if let SessionEvent::CommandIssued { action, .. } = &mut wrong_action[i].event {
        *action = other;
    }
    assert!(matches!(SessionRecord::replay(wrong_action), Err(SessionError::Divergence { .. })));

    let truncated: Vec<_> = entries[..entries.len() - 1].to_vec();
    let record = SessionRecord::replay(truncated).unwrap();
    assert_eq!(record.status, emobandit::log::SessionStatus::Active);
}
