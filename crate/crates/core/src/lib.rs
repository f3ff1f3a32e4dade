#![cfg_attr(not(test), no_std)]

//! Learning a personalized command-to-action mapping from facial-emotion feedback.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`emotion`]: emotion probability vectors, frame down-sampling and the
//!   valence reward (dot product with a scaling vector).
//! - [`bandit`]: one greedy multi-armed bandit per command, mapping extraction
//!   and the action-value gap metric.
//! - [`sim`]: a probabilistic simulated teacher (success rate, expressivity,
//!   gesture-recognition errors).
//! - [`experiment`]: seeded Monte-Carlo batches over simulated teachers.
//! - [`analysis`]: success buckets, two-sample KS test, logistic separability
//!   and per-user score quantiles.
//!
//! IO, persistence, the HTTP service and the CLI live in the `emobandit` crate.

extern crate alloc;

pub mod analysis;
pub mod bandit;
pub mod emotion;
pub mod experiment;
pub mod sim;

pub use bandit::{
    ActionId, ActionValueGaps, AgentState, BanditError, BanditState, CommandActionMapping,
    CommandId, InitMode, MappingStatus,
};
pub use emotion::{
    Emotion, EmotionError, EmotionVector, FrameSequence, NamedEmotions, Reward, RewardConfig, RewardStrategy,
    ScalingVector, ValenceClass,
};
pub use experiment::{ExperimentCondition, ExperimentError, ExperimentResult, RunSummary};
pub use sim::{CommandStrategy, SessionTrace, SimUserProfile, TrialRecord, ValencePools};

/// Ground-truth rating a user attaches to one round of feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn from_satisfied(satisfied: bool) -> Self {
        if satisfied {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}
