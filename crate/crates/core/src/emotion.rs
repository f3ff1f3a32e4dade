//! Emotion probability vectors and the valence reward.
//!
//! A facial-emotion classifier emits, per video frame, a probability
//! distribution over the seven Ekman emotions. The reward for one feedback
//! window is obtained by keeping every `stride`-th frame, averaging the kept
//! vectors and taking the dot product with a [`ScalingVector`].

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of emotions in the Ekman set.
pub const EMOTION_COUNT: usize = 7;

/// Frame rate of the feedback camera stream, frames per second.
pub const DEFAULT_FPS: f64 = 25.0;

/// Default down-sampling stride: keep every 12th frame.
pub const DEFAULT_STRIDE: usize = 12;

/// Input vectors whose components sum to within this distance of 1 are renormalized.
pub const NORMALIZATION_BAND: f64 = 0.01;

// Below this deviation from 1 a vector is kept bit-for-bit, so that
// normalizing twice is the identity.
const RENORMALIZE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmotionError {
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(&'static str),
    #[error("unknown emotion label")]
    UnknownEmotion,
    #[error("down-sampling stride must be at least 1")]
    InvalidStride,
}

/// The seven Ekman emotions, in canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Angry,
    Disgust,
    Fear,
    Happy,
    Sad,
    Surprise,
    Neutral,
}

impl Emotion {
    pub const ALL: [Emotion; EMOTION_COUNT] = [
        Emotion::Angry,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happy,
        Emotion::Sad,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Angry => "angry",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Surprise => "surprise",
            Emotion::Neutral => "neutral",
        }
    }

    pub fn valence(self) -> ValenceClass {
        match self {
            Emotion::Happy => ValenceClass::Positive,
            Emotion::Neutral | Emotion::Surprise => ValenceClass::Neutral,
            Emotion::Angry | Emotion::Disgust | Emotion::Fear | Emotion::Sad => {
                ValenceClass::Negative
            }
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = EmotionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or(EmotionError::UnknownEmotion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValenceClass {
    Positive,
    Neutral,
    Negative,
}

/// Valence class of an emotion given by its lowercase label.
pub fn valence_class(label: &str) -> Result<ValenceClass, EmotionError> {
    label.parse::<Emotion>().map(Emotion::valence)
}

/// Wire form shared by emotion vectors and scaling vectors: one named key per emotion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedEmotions {
    pub angry: f64,
    pub disgust: f64,
    pub fear: f64,
    pub happy: f64,
    pub sad: f64,
    pub surprise: f64,
    pub neutral: f64,
}

impl From<[f64; EMOTION_COUNT]> for NamedEmotions {
    fn from(v: [f64; EMOTION_COUNT]) -> Self {
        NamedEmotions {
            angry: v[0],
            disgust: v[1],
            fear: v[2],
            happy: v[3],
            sad: v[4],
            surprise: v[5],
            neutral: v[6],
        }
    }
}

impl From<NamedEmotions> for [f64; EMOTION_COUNT] {
    fn from(n: NamedEmotions) -> Self {
        [n.angry, n.disgust, n.fear, n.happy, n.sad, n.surprise, n.neutral]
    }
}

/// A probability distribution over the seven emotions.
///
/// Construction accepts vectors whose components are non-negative and sum to
/// within [`NORMALIZATION_BAND`] of 1, and rescales them to sum to 1. Anything
/// else is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NamedEmotions", into = "NamedEmotions")]
pub struct EmotionVector([f64; EMOTION_COUNT]);

impl EmotionVector {
    /// Builds a vector from components in canonical order
    /// (angry, disgust, fear, happy, sad, surprise, neutral).
    pub fn new(components: [f64; EMOTION_COUNT]) -> Result<Self, EmotionError> {
        let mut sum = 0.0;
        for &p in &components {
            if !p.is_finite() {
                return Err(EmotionError::NotAProbabilityVector("non-finite component"));
            }
            if p < 0.0 {
                return Err(EmotionError::NotAProbabilityVector("negative component"));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > NORMALIZATION_BAND {
            return Err(EmotionError::NotAProbabilityVector(
                "components do not sum to 1 within tolerance",
            ));
        }
        Ok(Self::renormalized(components, sum))
    }

    fn renormalized(mut components: [f64; EMOTION_COUNT], sum: f64) -> Self {
        if (sum - 1.0).abs() > RENORMALIZE_EPS {
            for p in &mut components {
                *p /= sum;
            }
        }
        EmotionVector(components)
    }

    /// All mass on a single emotion.
    pub fn one_hot(emotion: Emotion) -> Self {
        let mut v = [0.0; EMOTION_COUNT];
        v[emotion.index()] = 1.0;
        EmotionVector(v)
    }

    pub fn uniform() -> Self {
        EmotionVector([1.0 / EMOTION_COUNT as f64; EMOTION_COUNT])
    }

    /// Builds a vector from `(emotion, mass)` pairs; unlisted emotions get 0.
    pub fn from_pairs(pairs: &[(Emotion, f64)]) -> Result<Self, EmotionError> {
        let mut v = [0.0; EMOTION_COUNT];
        for &(e, p) in pairs {
            v[e.index()] += p;
        }
        Self::new(v)
    }

    pub fn get(&self, emotion: Emotion) -> f64 {
        self.0[emotion.index()]
    }

    pub fn as_array(&self) -> &[f64; EMOTION_COUNT] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Most probable emotion; ties resolve to the earliest in canonical order.
    pub fn argmax(&self) -> Emotion {
        let mut best = 0;
        for i in 1..EMOTION_COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Emotion::ALL[best]
    }
}

impl TryFrom<NamedEmotions> for EmotionVector {
    type Error = EmotionError;

    fn try_from(n: NamedEmotions) -> Result<Self, Self::Error> {
        EmotionVector::new(n.into())
    }
}

impl From<EmotionVector> for NamedEmotions {
    fn from(v: EmotionVector) -> Self {
        v.0.into()
    }
}

/// Per-emotion valence weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "NamedEmotions", into = "NamedEmotions")]
pub struct ScalingVector([f64; EMOTION_COUNT]);

impl ScalingVector {
    /// Weights in canonical order.
    pub const fn new(weights: [f64; EMOTION_COUNT]) -> Self {
        ScalingVector(weights)
    }

    pub fn weight(&self, emotion: Emotion) -> f64 {
        self.0[emotion.index()]
    }

    pub fn as_array(&self) -> &[f64; EMOTION_COUNT] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Default for ScalingVector {
    /// happy +3, neutral 0, surprise +1, angry -3, disgust -2, fear -2, sad -3.
    fn default() -> Self {
        ScalingVector([-3.0, -2.0, -2.0, 3.0, -3.0, 1.0, 0.0])
    }
}

impl From<NamedEmotions> for ScalingVector {
    fn from(n: NamedEmotions) -> Self {
        ScalingVector(n.into())
    }
}

impl From<ScalingVector> for NamedEmotions {
    fn from(s: ScalingVector) -> Self {
        s.0.into()
    }
}

/// Scalar reward in valence units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reward(pub f64);

impl Reward {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Valence reward: dot product of the emotion vector with the scaling vector.
pub fn reward(v: &EmotionVector, s: &ScalingVector) -> Reward {
    Reward(v.0.iter().zip(s.0.iter()).map(|(p, w)| p * w).sum())
}

/// Reward of the single most probable emotion.
pub fn argmax_reward(v: &EmotionVector, s: &ScalingVector) -> Reward {
    Reward(s.weight(v.argmax()))
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

#[derive(Deserialize)]
struct RawFrameSequence {
    frames: Vec<EmotionVector>,
    #[serde(default = "default_fps")]
    fps: f64,
    stride: usize,
}

/// Ordered emotion vectors from one feedback window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrameSequence")]
pub struct FrameSequence {
    frames: Vec<EmotionVector>,
    fps: f64,
    stride: usize,
}

impl TryFrom<RawFrameSequence> for FrameSequence {
    type Error = EmotionError;

    fn try_from(raw: RawFrameSequence) -> Result<Self, Self::Error> {
        FrameSequence::new(raw.frames, raw.fps, raw.stride)
    }
}

impl FrameSequence {
    pub fn new(frames: Vec<EmotionVector>, fps: f64, stride: usize) -> Result<Self, EmotionError> {
        if stride == 0 {
            return Err(EmotionError::InvalidStride);
        }
        Ok(FrameSequence { frames, fps, stride })
    }

    /// A one-frame sequence, used for single-vector feedback.
    pub fn single(frame: EmotionVector) -> Self {
        FrameSequence { frames: alloc::vec![frame], fps: DEFAULT_FPS, stride: 1 }
    }

    pub fn frames(&self) -> &[EmotionVector] {
        &self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self, EmotionError> {
        if stride == 0 {
            return Err(EmotionError::InvalidStride);
        }
        self.stride = stride;
        Ok(self)
    }
}

/// Keeps the frames at indices 0, j, 2j, ... where j is the sequence's stride.
///
/// The result has `floor((len - 1) / j) + 1` frames, a frame rate of `fps / j`
/// and stride 1.
pub fn downsample(f: &FrameSequence) -> Result<FrameSequence, EmotionError> {
    if f.frames.is_empty() {
        return Err(EmotionError::EmptySequence);
    }
    Ok(FrameSequence {
        frames: f.frames.iter().step_by(f.stride).copied().collect(),
        fps: f.fps / f.stride as f64,
        stride: 1,
    })
}

/// Component-wise arithmetic mean over all frames of the sequence.
pub fn mean_emotion(f: &FrameSequence) -> Result<EmotionVector, EmotionError> {
    if f.frames.is_empty() {
        return Err(EmotionError::EmptySequence);
    }
    let mut acc = [0.0; EMOTION_COUNT];
    for frame in &f.frames {
        for (a, p) in acc.iter_mut().zip(frame.0.iter()) {
            *a += p;
        }
    }
    let n = f.frames.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    let sum = acc.iter().sum();
    Ok(EmotionVector::renormalized(acc, sum))
}

/// Down-sample, average, then score with the dot product.
pub fn feedback_to_reward(f: &FrameSequence, s: &ScalingVector) -> Result<Reward, EmotionError> {
    let mean = mean_emotion(&downsample(f)?)?;
    Ok(reward(&mean, s))
}

/// How a mean emotion vector is turned into a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardStrategy {
    /// Dot product with the scaling vector.
    #[default]
    DotProduct,
    /// Scaling weight of the most probable emotion only.
    Argmax,
}

/// Reward settings of one teaching session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub scaling: ScalingVector,
    pub stride: usize,
    pub strategy: RewardStrategy,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            scaling: ScalingVector::default(),
            stride: DEFAULT_STRIDE,
            strategy: RewardStrategy::DotProduct,
        }
    }
}

impl RewardConfig {
    /// Mean emotion vector of the down-sampled sequence and its reward.
    ///
    /// The sequence's own stride is used.
    pub fn evaluate(&self, f: &FrameSequence) -> Result<(EmotionVector, Reward), EmotionError> {
        let mean = mean_emotion(&downsample(f)?)?;
        let r = match self.strategy {
            RewardStrategy::DotProduct => reward(&mean, &self.scaling),
            RewardStrategy::Argmax => argmax_reward(&mean, &self.scaling),
        };
        Ok((mean, r))
    }
}
