//! Per-command multi-armed bandits.
//!
//! Every command is its own directly observed context, so the agent holds one
//! independent k-armed bandit per command. Selection is greedy over the
//! sample-mean action values with uniform tie-breaking; an optional ε adds
//! uniform exploration.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::emotion::Reward;

/// Initial action value in optimistic mode.
pub const OPTIMISTIC_VALUE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BanditError {
    #[error("at least 2 arms are required, got {0}")]
    InvalidArmCount(usize),
    #[error("action {action} is out of range for {k} arms")]
    InvalidAction { action: u32, k: usize },
    #[error("command {command} is out of range for {k} commands")]
    InvalidCommand { command: u32, k: usize },
    #[error("mapping covers {found} commands but the agent has {expected}")]
    MappingMismatch { expected: usize, found: usize },
    #[error("invalid command-action mapping: {0}")]
    InvalidMapping(&'static str),
    #[error("inconsistent bandit state: {0}")]
    InvalidState(&'static str),
}

macro_rules! one_based_id {
    ($name:ident, $what:literal) => {
        #[doc = concat!("1-based ", $what, " index.")]
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "u32", into = "u32")]
        pub struct $name(u32);

        impl $name {
            /// From a 1-based number; `None` for 0.
            pub fn new(number: u32) -> Option<Self> {
                (number >= 1).then_some($name(number))
            }

            /// From a 0-based position.
            pub fn from_index(index: usize) -> Self {
                $name(index as u32 + 1)
            }

            /// 0-based position.
            pub fn index(self) -> usize {
                self.0 as usize - 1
            }

            /// 1-based number.
            pub fn get(self) -> u32 {
                self.0
            }
        }

        impl TryFrom<u32> for $name {
            type Error = BanditError;

            fn try_from(n: u32) -> Result<Self, Self::Error> {
                $name::new(n).ok_or(BanditError::InvalidMapping(concat!($what, " numbers start at 1")))
            }
        }

        impl From<$name> for u32 {
            fn from(id: $name) -> u32 {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

one_based_id!(CommandId, "command");
one_based_id!(ActionId, "action");

/// Bijection from commands to actions; entry `i` is the action for command `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ActionId>", into = "Vec<ActionId>")]
pub struct CommandActionMapping(Vec<ActionId>);

impl CommandActionMapping {
    pub fn new(actions: Vec<ActionId>) -> Result<Self, BanditError> {
        let k = actions.len();
        if k < 2 {
            return Err(BanditError::InvalidArmCount(k));
        }
        let mut seen = alloc::vec![false; k];
        for a in &actions {
            let i = a.index();
            if i >= k {
                return Err(BanditError::InvalidMapping("action out of range"));
            }
            if seen[i] {
                return Err(BanditError::InvalidMapping("action assigned to two commands"));
            }
            seen[i] = true;
        }
        Ok(CommandActionMapping(actions))
    }

    /// From 1-based action numbers.
    pub fn from_numbers(numbers: &[u32]) -> Result<Self, BanditError> {
        let actions = numbers
            .iter()
            .map(|&n| ActionId::try_from(n))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(actions)
    }

    pub fn identity(k: usize) -> Result<Self, BanditError> {
        Self::new((0..k).map(ActionId::from_index).collect())
    }

    /// A uniformly random bijection.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Self, BanditError> {
        let mut actions: Vec<ActionId> = (0..k).map(ActionId::from_index).collect();
        actions.shuffle(rng);
        Self::new(actions)
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn desired(&self, command: CommandId) -> ActionId {
        self.0[command.index()]
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.0
    }

    pub fn commands(&self) -> impl Iterator<Item = CommandId> {
        (0..self.0.len()).map(CommandId::from_index)
    }
}

impl TryFrom<Vec<ActionId>> for CommandActionMapping {
    type Error = BanditError;

    fn try_from(v: Vec<ActionId>) -> Result<Self, Self::Error> {
        CommandActionMapping::new(v)
    }
}

impl From<CommandActionMapping> for Vec<ActionId> {
    fn from(m: CommandActionMapping) -> Self {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// All action values start at 0.
    #[default]
    Neutral,
    /// All action values start at +5, counted as one pseudo-observation.
    Optimistic,
}

impl InitMode {
    pub fn initial_value(self) -> f64 {
        match self {
            InitMode::Neutral => 0.0,
            InitMode::Optimistic => OPTIMISTIC_VALUE,
        }
    }

    fn prior_weight(self) -> u64 {
        match self {
            InitMode::Neutral => 0,
            InitMode::Optimistic => 1,
        }
    }
}

#[derive(Deserialize)]
struct RawBanditState {
    q: Vec<f64>,
    n: Vec<u64>,
    t: u64,
    epsilon: f64,
    init: InitMode,
}

/// Value estimates and counts of one k-armed bandit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBanditState")]
pub struct BanditState {
    q: Vec<f64>,
    n: Vec<u64>,
    t: u64,
    epsilon: f64,
    init: InitMode,
}

impl TryFrom<RawBanditState> for BanditState {
    type Error = BanditError;

    fn try_from(raw: RawBanditState) -> Result<Self, Self::Error> {
        if raw.q.len() < 2 {
            return Err(BanditError::InvalidArmCount(raw.q.len()));
        }
        if raw.q.len() != raw.n.len() {
            return Err(BanditError::InvalidState("q and n lengths differ"));
        }
        if raw.n.iter().sum::<u64>() != raw.t {
            return Err(BanditError::InvalidState("selection counts do not sum to t"));
        }
        if !(0.0..=1.0).contains(&raw.epsilon) {
            return Err(BanditError::InvalidState("epsilon outside [0, 1]"));
        }
        Ok(BanditState { q: raw.q, n: raw.n, t: raw.t, epsilon: raw.epsilon, init: raw.init })
    }
}

// One uniform draw mapped onto 0..len.
fn pick_index<R: Rng + ?Sized>(rng: &mut R, len: usize) -> usize {
    let u: f64 = rng.random();
    ((u * len as f64) as usize).min(len - 1)
}

impl BanditState {
    pub fn new(k: usize, init: InitMode) -> Result<Self, BanditError> {
        if k < 2 {
            return Err(BanditError::InvalidArmCount(k));
        }
        Ok(BanditState {
            q: alloc::vec![init.initial_value(); k],
            n: alloc::vec![0; k],
            t: 0,
            epsilon: 0.0,
            init,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon.clamp(0.0, 1.0);
        self
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn value(&self, a: ActionId) -> f64 {
        self.q[a.index()]
    }

    pub fn counts(&self) -> &[u64] {
        &self.n
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn init_mode(&self) -> InitMode {
        self.init
    }

    /// All arms sharing the maximum value, in arm order.
    pub fn argmax_set(&self) -> Vec<ActionId> {
        let max = self.q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.q
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == max)
            .map(|(i, _)| ActionId::from_index(i))
            .collect()
    }

    /// Greedy choice with uniform tie-breaking; with probability ε a uniform arm.
    ///
    /// With ε = 0 exactly one draw is taken from `rng`, even when the argmax is
    /// unique. With ε > 0 one extra draw decides whether to explore.
    pub fn select_action<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionId {
        if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            return ActionId::from_index(pick_index(rng, self.k()));
        }
        let ties = self.argmax_set();
        ties[pick_index(rng, ties.len())]
    }

    /// Folds one reward into the running mean of arm `a`.
    pub fn update(&mut self, a: ActionId, r: Reward) -> Result<(), BanditError> {
        let i = a.index();
        if i >= self.k() {
            return Err(BanditError::InvalidAction { action: a.get(), k: self.k() });
        }
        self.n[i] += 1;
        let weight = (self.n[i] + self.init.prior_weight()) as f64;
        self.q[i] += (r.0 - self.q[i]) / weight;
        self.t += 1;
        Ok(())
    }

    /// `Learned` if exactly one arm has the maximum value.
    pub fn status(&self) -> MappingStatus {
        match self.argmax_set().as_slice() {
            [only] => MappingStatus::Learned(*only),
            _ => MappingStatus::Unresolved,
        }
    }
}

/// What a single bandit currently maps its command to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingStatus {
    Learned(ActionId),
    Unresolved,
}

impl MappingStatus {
    pub fn is(self, action: ActionId) -> bool {
        self == MappingStatus::Learned(action)
    }
}

#[derive(Deserialize)]
struct RawAgentState {
    bandits: Vec<BanditState>,
    init: InitMode,
}

/// One bandit per command, all with k arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAgentState")]
pub struct AgentState {
    bandits: Vec<BanditState>,
    init: InitMode,
}

impl TryFrom<RawAgentState> for AgentState {
    type Error = BanditError;

    fn try_from(raw: RawAgentState) -> Result<Self, Self::Error> {
        let k = raw.bandits.len();
        if k < 2 {
            return Err(BanditError::InvalidArmCount(k));
        }
        if raw.bandits.iter().any(|b| b.k() != k) {
            return Err(BanditError::InvalidState("every bandit needs one arm per command"));
        }
        Ok(AgentState { bandits: raw.bandits, init: raw.init })
    }
}

impl AgentState {
    pub fn new(k: usize, init: InitMode) -> Result<Self, BanditError> {
        let bandit = BanditState::new(k, init)?;
        Ok(AgentState { bandits: alloc::vec![bandit; k], init })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.bandits = self.bandits.into_iter().map(|b| b.with_epsilon(epsilon)).collect();
        self
    }

    pub fn k(&self) -> usize {
        self.bandits.len()
    }

    pub fn init_mode(&self) -> InitMode {
        self.init
    }

    pub fn bandits(&self) -> &[BanditState] {
        &self.bandits
    }

    pub fn bandit(&self, c: CommandId) -> Result<&BanditState, BanditError> {
        self.bandits
            .get(c.index())
            .ok_or(BanditError::InvalidCommand { command: c.get(), k: self.k() })
    }

    pub fn select_action<R: Rng + ?Sized>(
        &self,
        c: CommandId,
        rng: &mut R,
    ) -> Result<ActionId, BanditError> {
        Ok(self.bandit(c)?.select_action(rng))
    }

    pub fn update(&mut self, c: CommandId, a: ActionId, r: Reward) -> Result<(), BanditError> {
        let k = self.k();
        self.bandits
            .get_mut(c.index())
            .ok_or(BanditError::InvalidCommand { command: c.get(), k })?
            .update(a, r)
    }

    pub fn learned_mapping(&self) -> Vec<MappingStatus> {
        self.bandits.iter().map(BanditState::status).collect()
    }

    /// Number of commands whose bandit has uniquely learned the desired action.
    pub fn correct_count(&self, truth: &CommandActionMapping) -> usize {
        self.bandits
            .iter()
            .zip(truth.actions())
            .filter(|(b, &a)| b.status().is(a))
            .count()
    }

    pub fn is_fully_learned(&self, truth: &CommandActionMapping) -> bool {
        truth.k() == self.k() && self.correct_count(truth) == self.k()
    }

    /// `Q(desired) - Q(a)` for every arm of every command.
    pub fn action_value_gaps(
        &self,
        truth: &CommandActionMapping,
    ) -> Result<Vec<ActionValueGaps>, BanditError> {
        if truth.k() != self.k() {
            return Err(BanditError::MappingMismatch { expected: self.k(), found: truth.k() });
        }
        Ok(self
            .bandits
            .iter()
            .zip(truth.commands())
            .map(|(b, c)| {
                let desired = truth.desired(c);
                let top = b.value(desired);
                ActionValueGaps {
                    command: c,
                    desired,
                    gaps: b.values().iter().map(|q| top - q).collect(),
                }
            })
            .collect())
    }
}

/// Margins of the desired action over every arm of one command's bandit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionValueGaps {
    pub command: CommandId,
    pub desired: ActionId,
    pub gaps: Vec<f64>,
}

impl ActionValueGaps {
    /// Some other arm is valued above the desired one.
    pub fn wrongly_learned(&self) -> bool {
        self.gaps.iter().any(|&d| d < 0.0)
    }
}
