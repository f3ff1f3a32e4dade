//! Offline analysis of session logs and the files it produces.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use emobandit_core::analysis::{
    fit_separability_with, ks_two_sample, score_quantiles_per_user, success_buckets, KsResult,
    LabeledScore, LogisticOptions, SeparabilityMode, SeparabilityResult, SuccessBuckets,
    UserQuantiles,
};
use emobandit_core::{Emotion, EmotionVector, ExperimentResult, Label};
use serde::{Deserialize, Serialize};

use crate::log::{parse_lines, SessionStatus};
use crate::session::SessionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct LoadedSession {
    pub path: PathBuf,
    pub record: SessionRecord,
}

/// Strict-parses and replays one log file.
pub fn load_log(path: &Path) -> Result<SessionRecord, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let entries = parse_lines(&text, true).map_err(|e| e.to_string())?;
    SessionRecord::replay(entries).map_err(|e| e.to_string())
}

/// Loads every file matching `pattern`. A bad file is reported, not fatal.
pub fn load_logs(pattern: &str) -> Result<(Vec<LoadedSession>, Vec<LoadFailure>), glob::PatternError> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)?.filter_map(Result::ok).filter(|p| p.is_file()).collect();
    paths.sort();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for path in paths {
        match load_log(&path) {
            Ok(record) => ok.push(LoadedSession { path, record }),
            Err(error) => failed.push(LoadFailure { path: path.display().to_string(), error }),
        }
    }
    Ok((ok, failed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub include_abandoned: bool,
    pub separability: SeparabilityMode,
    pub logistic: LogisticOptions,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            include_abandoned: false,
            separability: SeparabilityMode::Training,
            logistic: LogisticOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSeparability {
    pub user_id: String,
    pub result: Option<SeparabilityResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sessions_analyzed: usize,
    pub sessions_excluded: usize,
    pub rounds: usize,
    pub failures: Vec<LoadFailure>,
    /// Keyed by k, since buckets only make sense among sessions of equal size.
    pub buckets: BTreeMap<usize, SuccessBuckets>,
    pub wrongly_learned_fraction: Option<f64>,
    pub ks: Option<KsResult>,
    pub separability: Option<SeparabilityResult>,
    pub per_user_separability: Vec<UserSeparability>,
    pub quantiles: BTreeMap<String, UserQuantiles>,
    /// Analyses that could not run, with the reason.
    pub skipped: Vec<String>,
}

fn scores(records: &[&SessionRecord]) -> Vec<(LabeledScore, EmotionVector)> {
    records
        .iter()
        .flat_map(|r| {
            r.trace.iter().map(|t| {
                (
                    LabeledScore {
                        reward: t.reward.0,
                        label: t.label,
                        user_id: r.user_id.clone(),
                        session_id: r.session_id.clone(),
                    },
                    t.mean,
                )
            })
        })
        .collect()
}

pub fn analyze(records: &[SessionRecord], failures: Vec<LoadFailure>, opts: &AnalysisOptions) -> Report {
    let used: Vec<&SessionRecord> = records
        .iter()
        .filter(|r| opts.include_abandoned || r.status != SessionStatus::Abandoned)
        .collect();
    let mut skipped = Vec::new();

    let mut by_k: BTreeMap<usize, Vec<_>> = BTreeMap::new();
    for r in &used {
        by_k.entry(r.k()).or_default().push((r.learned(), r.mapping.clone()));
    }
    let buckets = by_k
        .into_iter()
        .filter_map(|(k, s)| success_buckets(&s).ok().map(|b| (k, b)))
        .collect();

    let gaps: Vec<bool> = used
        .iter()
        .flat_map(|r| r.agent.action_value_gaps(&r.mapping).expect("same k"))
        .map(|g| g.wrongly_learned())
        .collect();
    let wrongly_learned_fraction =
        (!gaps.is_empty()).then(|| gaps.iter().filter(|&&w| w).count() as f64 / gaps.len() as f64);

    let all = scores(&used);
    let pos: Vec<f64> = all.iter().filter(|s| s.0.label.is_positive()).map(|s| s.0.reward).collect();
    let neg: Vec<f64> = all.iter().filter(|s| !s.0.label.is_positive()).map(|s| s.0.reward).collect();
    let ks = ks_two_sample(&pos, &neg).map_err(|e| skipped.push(format!("ks: {e}"))).ok();

    let fit = |items: &[&(LabeledScore, EmotionVector)]| {
        let vectors: Vec<EmotionVector> = items.iter().map(|s| s.1).collect();
        let labels: Vec<Label> = items.iter().map(|s| s.0.label).collect();
        fit_separability_with(&vectors, &labels, opts.separability, opts.logistic)
    };
    let refs: Vec<_> = all.iter().collect();
    let separability = fit(&refs).map_err(|e| skipped.push(format!("separability: {e}"))).ok();

    let mut by_user: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for s in &all {
        by_user.entry(s.0.user_id.as_str()).or_default().push(s);
    }
    let per_user_separability = by_user
        .into_iter()
        .map(|(user, items)| match fit(&items) {
            Ok(r) => UserSeparability { user_id: user.into(), result: Some(r), error: None },
            Err(e) => UserSeparability { user_id: user.into(), result: None, error: Some(e.to_string()) },
        })
        .collect();

    let labeled: Vec<LabeledScore> = all.iter().map(|s| s.0.clone()).collect();
    let quantiles = score_quantiles_per_user(&labeled)
        .map_err(|e| skipped.push(format!("quantiles: {e}")))
        .unwrap_or_default();

    Report {
        sessions_analyzed: used.len(),
        sessions_excluded: records.len() - used.len(),
        rounds: all.len(),
        failures,
        buckets,
        wrongly_learned_fraction,
        ks,
        separability,
        per_user_separability,
        quantiles,
        skipped,
    }
}

/// Writes `bytes` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

#[derive(Serialize)]
struct BucketRow {
    k: usize,
    correct: usize,
    sessions: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct QuantileRow<'a> {
    user_id: &'a str,
    label: Label,
    q25: f64,
    median: f64,
    q75: f64,
    count: usize,
}

#[derive(Serialize)]
struct GapRow<'a> {
    session_id: &'a str,
    user_id: &'a str,
    command: u32,
    desired: u32,
    learned: String,
    wrongly_learned: bool,
    /// `Q(desired) - Q(a)` for every action a, `;`-separated.
    gaps: String,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    session_id: &'a str,
    user_id: &'a str,
    round: u32,
    command: u32,
    action: u32,
    label: Label,
    reward: f64,
    angry: f64,
    disgust: f64,
    fear: f64,
    happy: f64,
    sad: f64,
    surprise: f64,
    neutral: f64,
}

/// Writes `report.json`, `buckets.csv`, `quantiles.csv`, `gaps.csv` and `scores.csv`.
pub fn write_bundle(out: &Path, report: &Report, records: &[SessionRecord]) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    write_atomic(out, "report.json", &json_bytes(report))?;

    let buckets = report.buckets.values().flat_map(|b| {
        (0..=b.k).map(move |m| BucketRow { k: b.k, correct: m, sessions: b.counts[m], fraction: b.fractions[m] })
    });
    write_atomic(out, "buckets.csv", &csv_bytes(buckets)?)?;

    let quantiles = report.quantiles.iter().flat_map(|(user, q)| {
        [(Label::Positive, q.positive), (Label::Negative, q.negative)].into_iter().filter_map(move |(label, q)| {
            q.map(|q| QuantileRow { user_id: user, label, q25: q.q25, median: q.median, q75: q.q75, count: q.count })
        })
    });
    write_atomic(out, "quantiles.csv", &csv_bytes(quantiles)?)?;

    let mut gap_rows = Vec::new();
    let mut score_rows = Vec::new();
    for r in records {
        let learned = r.learned();
        for g in r.agent.action_value_gaps(&r.mapping).expect("same k") {
            gap_rows.push(GapRow {
                session_id: &r.session_id,
                user_id: &r.user_id,
                command: g.command.get(),
                desired: g.desired.get(),
                learned: match learned[g.command.index()] {
                    emobandit_core::MappingStatus::Learned(a) => a.to_string(),
                    emobandit_core::MappingStatus::Unresolved => "unresolved".into(),
                },
                wrongly_learned: g.wrongly_learned(),
                gaps: g.gaps.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            });
        }
        for t in &r.trace {
            let m = t.mean;
            score_rows.push(ScoreRow {
                session_id: &r.session_id,
                user_id: &r.user_id,
                round: t.round,
                command: t.command.get(),
                action: t.action.get(),
                label: t.label,
                reward: t.reward.0,
                angry: m.get(Emotion::Angry),
                disgust: m.get(Emotion::Disgust),
                fear: m.get(Emotion::Fear),
                happy: m.get(Emotion::Happy),
                sad: m.get(Emotion::Sad),
                surprise: m.get(Emotion::Surprise),
                neutral: m.get(Emotion::Neutral),
            });
        }
    }
    write_atomic(out, "gaps.csv", &csv_bytes(gap_rows)?)?;
    write_atomic(out, "scores.csv", &csv_bytes(score_rows)?)?;
    Ok(())
}

#[derive(Serialize)]
struct ResultRow<'a> {
    condition: &'a str,
    p_success: f64,
    p_expressivity: f64,
    gesture_accuracy: f64,
    runs: usize,
    strict_accuracy: f64,
    mean_correct: f64,
    converged_runs: usize,
    mean_trials_to_convergence: Option<f64>,
    per_command_accuracy: String,
}

/// Writes `results.json` and `results.csv` for a simulation sweep.
pub fn write_results(out: &Path, results: &[ExperimentResult]) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    write_atomic(out, "results.json", &json_bytes(&results))?;
    let rows = results.iter().map(|r| ResultRow {
        condition: &r.condition.name,
        p_success: r.condition.p_success,
        p_expressivity: r.condition.p_expressivity,
        gesture_accuracy: r.condition.gesture_accuracy,
        runs: r.runs.len(),
        strict_accuracy: r.strict_accuracy,
        mean_correct: r.mean_correct,
        converged_runs: r.converged_runs,
        mean_trials_to_convergence: r.mean_trials_to_convergence,
        per_command_accuracy: r.per_command_accuracy.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
    });
    write_atomic(out, "results.csv", &csv_bytes(rows)?)
}
