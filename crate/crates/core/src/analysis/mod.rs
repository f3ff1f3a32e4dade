//! Evaluation of teaching sessions: how many mappings were learned, how well
//! rewards separate positive from negative ground truth, and per-user score
//! spreads.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bandit::{CommandActionMapping, MappingStatus};
use crate::Label;

mod ks;
mod logistic;

pub use ks::{kolmogorov_survival, ks_statistic, ks_two_sample, KsResult};
pub use logistic::{
    fit_separability, fit_separability_with, LogisticOptions, LogisticTrainer, SeparabilityMode,
    SeparabilityResult,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no input records")]
    EmptyInput,
    #[error("sample is empty")]
    EmptySample,
    #[error("only one label class present")]
    SingleClass,
    #[error("sessions disagree on the number of commands")]
    InconsistentK,
    #[error("{vectors} vectors but {labels} labels")]
    LengthMismatch { vectors: usize, labels: usize },
    #[error("non-finite score")]
    NonFinite,
}

/// Distribution of sessions over the number of correctly learned mappings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessBuckets {
    pub k: usize,
    pub sessions: usize,
    /// `counts[m]` sessions learned exactly `m` of `k` mappings.
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
}

impl SuccessBuckets {
    pub fn fraction(&self, correct: usize) -> f64 {
        self.fractions.get(correct).copied().unwrap_or(0.0)
    }
}

/// Buckets sessions by how many commands ended `Learned` with the desired action.
/// `Unresolved` commands count as wrong.
pub fn success_buckets(
    sessions: &[(Vec<MappingStatus>, CommandActionMapping)],
) -> Result<SuccessBuckets, AnalysisError> {
    let first = sessions.first().ok_or(AnalysisError::EmptyInput)?;
    let k = first.1.k();
    let mut counts = alloc::vec![0usize; k + 1];
    for (learned, truth) in sessions {
        if truth.k() != k || learned.len() != k {
            return Err(AnalysisError::InconsistentK);
        }
        let correct = learned.iter().zip(truth.actions()).filter(|(s, &a)| s.is(a)).count();
        counts[correct] += 1;
    }
    let n = sessions.len() as f64;
    let fractions = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(SuccessBuckets { k, sessions: sessions.len(), counts, fractions })
}

/// A reward together with the user's own rating of that round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub reward: f64,
    pub label: Label,
    pub user_id: String,
    pub session_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserQuantiles {
    pub positive: Option<Quantiles>,
    pub negative: Option<Quantiles>,
}

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
/// `sorted` must be non-empty and ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Quantiles {
        q25: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q75: quantile_sorted(&sorted, 0.75),
        count: sorted.len(),
    })
}

/// Median and quartiles of rewards per user, split by ground-truth label.
pub fn score_quantiles_per_user(
    scores: &[LabeledScore],
) -> Result<BTreeMap<String, UserQuantiles>, AnalysisError> {
    if scores.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if scores.iter().any(|s| !s.reward.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut grouped: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in scores {
        let entry = grouped.entry(s.user_id.as_str()).or_default();
        match s.label {
            Label::Positive => entry.0.push(s.reward),
            Label::Negative => entry.1.push(s.reward),
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(user, (pos, neg))| {
            (user.into(), UserQuantiles { positive: quantiles(&pos), negative: quantiles(&neg) })
        })
        .collect())
}
