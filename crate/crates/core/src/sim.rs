//! Simulated teachers.
//!
//! A simulated user holds a desired command-action mapping and answers every
//! action with an emotion vector. With probability `p_success` the vector's
//! target emotion comes from the pool matching the user's satisfaction,
//! otherwise from the opposite pool (a feedback error). `p_expressivity` is the
//! weight of the one-hot target against flat Dirichlet(1) noise. Commands can
//! be misrecognized with probability `1 - gesture_accuracy`, in which case the
//! agent updates the wrong command's bandit.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{ActionId, AgentState, BanditError, CommandActionMapping, CommandId};
use crate::emotion::{
    Emotion, EmotionVector, FrameSequence, Reward, RewardConfig, EMOTION_COUNT,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{0} must lie in [0, 1]")]
    ProbabilityOutOfRange(&'static str),
    #[error("valence pools must not be empty")]
    EmptyPool,
    #[error(transparent)]
    Bandit(#[from] BanditError),
}

/// Emotions a simulated user draws its target from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValencePools {
    pub positive: Vec<Emotion>,
    pub negative: Vec<Emotion>,
}

impl Default for ValencePools {
    fn default() -> Self {
        ValencePools {
            positive: alloc::vec![Emotion::Happy],
            negative: alloc::vec![Emotion::Angry, Emotion::Disgust, Emotion::Fear, Emotion::Sad],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandStrategy {
    /// Every command equally likely on every trial.
    #[default]
    UniformRandom,
    /// Only commands the agent has not yet learned correctly; all of them once everything is learned.
    Informed,
}

#[derive(Deserialize)]
struct RawProfile {
    mapping: CommandActionMapping,
    p_success: f64,
    p_expressivity: f64,
    #[serde(default = "one")]
    gesture_accuracy: f64,
    #[serde(default)]
    strategy: CommandStrategy,
    #[serde(default)]
    pools: ValencePools,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct SimUserProfile {
    mapping: CommandActionMapping,
    p_success: f64,
    p_expressivity: f64,
    gesture_accuracy: f64,
    strategy: CommandStrategy,
    pools: ValencePools,
}

impl TryFrom<RawProfile> for SimUserProfile {
    type Error = SimError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        SimUserProfile::new(raw.mapping, raw.p_success, raw.p_expressivity, raw.gesture_accuracy)?
            .with_strategy(raw.strategy)
            .with_pools(raw.pools)
    }
}

fn check_probability(p: f64, name: &'static str) -> Result<f64, SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(SimError::ProbabilityOutOfRange(name))
    }
}

fn pick_index<R: Rng + ?Sized>(rng: &mut R, len: usize) -> usize {
    let u: f64 = rng.random();
    ((u * len as f64) as usize).min(len - 1)
}

/// One generated feedback vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratedFeedback {
    pub vector: EmotionVector,
    pub target: Emotion,
    /// The target came from the pool contradicting the user's satisfaction.
    pub feedback_error: bool,
}

impl SimUserProfile {
    pub fn new(
        mapping: CommandActionMapping,
        p_success: f64,
        p_expressivity: f64,
        gesture_accuracy: f64,
    ) -> Result<Self, SimError> {
        Ok(SimUserProfile {
            mapping,
            p_success: check_probability(p_success, "p_success")?,
            p_expressivity: check_probability(p_expressivity, "p_expressivity")?,
            gesture_accuracy: check_probability(gesture_accuracy, "gesture_accuracy")?,
            strategy: CommandStrategy::UniformRandom,
            pools: ValencePools::default(),
        })
    }

    pub fn with_strategy(mut self, strategy: CommandStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_pools(mut self, pools: ValencePools) -> Result<Self, SimError> {
        if pools.positive.is_empty() || pools.negative.is_empty() {
            return Err(SimError::EmptyPool);
        }
        self.pools = pools;
        Ok(self)
    }

    pub fn mapping(&self) -> &CommandActionMapping {
        &self.mapping
    }

    pub fn p_success(&self) -> f64 {
        self.p_success
    }

    pub fn p_expressivity(&self) -> f64 {
        self.p_expressivity
    }

    pub fn gesture_accuracy(&self) -> f64 {
        self.gesture_accuracy
    }

    pub fn strategy(&self) -> CommandStrategy {
        self.strategy
    }

    pub fn k(&self) -> usize {
        self.mapping.k()
    }

    /// Emotional reaction to an action the user was (not) satisfied with.
    ///
    /// Draws: one for success, one for the target within its pool, seven for the noise.
    pub fn gen_feedback<R: Rng + ?Sized>(&self, satisfied: bool, rng: &mut R) -> GeneratedFeedback {
        let success = rng.random::<f64>() < self.p_success;
        let positive = satisfied == success;
        let pool = if positive { &self.pools.positive } else { &self.pools.negative };
        let target = pool[pick_index(rng, pool.len())];

        // Flat Dirichlet: normalized unit exponentials.
        let mut noise = [0.0; EMOTION_COUNT];
        for x in &mut noise {
            let u: f64 = rng.random();
            *x = -libm::log(1.0 - u);
        }
        let total: f64 = noise.iter().sum();
        let w = self.p_expressivity;
        let mut v = [0.0; EMOTION_COUNT];
        for (i, (out, n)) in v.iter_mut().zip(noise.iter()).enumerate() {
            let hot = if i == target.index() { 1.0 } else { 0.0 };
            *out = w * hot + (1.0 - w) * (n / total);
        }
        let vector = EmotionVector::new(v).expect("convex mixture of distributions");
        GeneratedFeedback { vector, target, feedback_error: !success }
    }

    /// The command the agent recognizes, and whether it differs from the intended one.
    pub fn perceive_command<R: Rng + ?Sized>(
        &self,
        intended: CommandId,
        rng: &mut R,
    ) -> (CommandId, bool) {
        if rng.random::<f64>() < self.gesture_accuracy {
            return (intended, false);
        }
        let mut i = pick_index(rng, self.k() - 1);
        if i >= intended.index() {
            i += 1;
        }
        (CommandId::from_index(i), true)
    }

    pub fn choose_command<R: Rng + ?Sized>(&self, agent: &AgentState, rng: &mut R) -> CommandId {
        match self.strategy {
            CommandStrategy::UniformRandom => CommandId::from_index(pick_index(rng, self.k())),
            CommandStrategy::Informed => {
                let open: Vec<CommandId> = self
                    .mapping
                    .commands()
                    .zip(agent.learned_mapping())
                    .filter(|(c, status)| !status.is(self.mapping.desired(*c)))
                    .map(|(c, _)| c)
                    .collect();
                if open.is_empty() {
                    CommandId::from_index(pick_index(rng, self.k()))
                } else {
                    open[pick_index(rng, open.len())]
                }
            }
        }
    }

    /// Runs `n_trials` teaching rounds against `agent`.
    pub fn run_session<R: Rng + ?Sized>(
        &self,
        agent: AgentState,
        n_trials: usize,
        config: &RewardConfig,
        rng: &mut R,
    ) -> Result<SessionTrace, SimError> {
        self.run_session_observed(agent, n_trials, config, rng, |_, _| {})
    }

    /// Like [`run_session`](Self::run_session), calling `observe` after every update.
    pub fn run_session_observed<R, F>(
        &self,
        mut agent: AgentState,
        n_trials: usize,
        config: &RewardConfig,
        rng: &mut R,
        mut observe: F,
    ) -> Result<SessionTrace, SimError>
    where
        R: Rng + ?Sized,
        F: FnMut(&AgentState, &TrialRecord),
    {
        if agent.k() != self.k() {
            return Err(BanditError::MappingMismatch { expected: agent.k(), found: self.k() }.into());
        }
        let mut trials = Vec::with_capacity(n_trials);
        for t in 0..n_trials {
            let intended = self.choose_command(&agent, rng);
            let (perceived, gesture_error) = self.perceive_command(intended, rng);
            let action = agent.select_action(perceived, rng)?;
            let satisfied = action == self.mapping.desired(intended);
            let fb = self.gen_feedback(satisfied, rng);
            let frames = FrameSequence::single(fb.vector);
            let (_, reward) = config.evaluate(&frames).expect("one valid frame");
            agent.update(perceived, action, reward)?;
            let record = TrialRecord {
                trial: t as u32,
                intended,
                perceived,
                action,
                emotion: fb.vector,
                target: fb.target,
                reward,
                satisfied,
                feedback_error: fb.feedback_error,
                gesture_error,
                q_after: agent.bandit(perceived)?.values().to_vec(),
            };
            observe(&agent, &record);
            trials.push(record);
        }
        Ok(SessionTrace { agent, trials })
    }
}

/// One simulated teaching round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u32,
    pub intended: CommandId,
    pub perceived: CommandId,
    pub action: ActionId,
    pub emotion: EmotionVector,
    pub target: Emotion,
    pub reward: Reward,
    /// The action was the desired one for the intended command.
    pub satisfied: bool,
    pub feedback_error: bool,
    pub gesture_error: bool,
    /// Action values of the perceived command's bandit after the update.
    pub q_after: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub agent: AgentState,
    pub trials: Vec<TrialRecord>,
}
