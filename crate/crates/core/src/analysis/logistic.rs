//! Logistic regression on mean emotion vectors, used to measure how well the
//! seven-dimensional feedback separates positive from negative ratings.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::emotion::{EmotionVector, EMOTION_COUNT};
use crate::Label;

const DIM: usize = EMOTION_COUNT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// L2 penalty on the emotion weights (the intercept is not penalized).
    pub lambda: f64,
    pub learning_rate: f64,
    /// Stop once the gradient's max-norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions { lambda: 1e-4, learning_rate: 0.1, tolerance: 1e-6, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparabilityMode {
    /// Error on the data the model was fit on.
    #[default]
    Training,
    /// Each example is predicted by a model fit on all the others.
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityResult {
    /// Weights in canonical emotion order, fit on the full data set.
    pub weights: [f64; EMOTION_COUNT],
    pub intercept: f64,
    pub error_rate: f64,
    pub misclassified: usize,
    pub total: usize,
    pub iterations: usize,
    pub converged: bool,
    pub mode: SeparabilityMode,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

fn features(v: &EmotionVector) -> [f64; DIM] {
    let mut x = [1.0; DIM];
    x[..EMOTION_COUNT].copy_from_slice(v.as_array());
    x
}

/// Full-batch gradient descent on the regularized mean log-loss.
///
/// Parameters start at zero. The last parameter is the intercept.
#[derive(Debug, Clone)]
pub struct LogisticTrainer {
    x: Vec<[f64; DIM]>,
    y: Vec<f64>,
    w: [f64; DIM],
    options: LogisticOptions,
    iterations: usize,
}

impl LogisticTrainer {
    pub fn new(vectors: &[EmotionVector], labels: &[Label], options: LogisticOptions) -> Self {
        LogisticTrainer {
            x: vectors.iter().map(features).collect(),
            y: labels.iter().map(|l| if l.is_positive() { 1.0 } else { 0.0 }).collect(),
            w: [0.0; DIM],
            options,
            iterations: 0,
        }
    }

    fn score(&self, x: &[f64; DIM]) -> f64 {
        x.iter().zip(&self.w).map(|(a, b)| a * b).sum()
    }

    pub fn loss(&self) -> f64 {
        let n = self.x.len() as f64;
        let data: f64 = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(x, &y)| {
                let z = self.score(x);
                softplus(z) - y * z
            })
            .sum::<f64>()
            / n;
        let penalty: f64 = self.w[..EMOTION_COUNT].iter().map(|w| w * w).sum();
        data + 0.5 * self.options.lambda * penalty
    }

    pub fn gradient(&self) -> [f64; DIM] {
        let n = self.x.len() as f64;
        let mut g = [0.0; DIM];
        for (x, &y) in self.x.iter().zip(&self.y) {
            let residual = sigmoid(self.score(x)) - y;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += residual * xi;
            }
        }
        for (i, gi) in g.iter_mut().enumerate() {
            *gi /= n;
            if i < EMOTION_COUNT {
                *gi += self.options.lambda * self.w[i];
            }
        }
        g
    }

    /// One descent step. Returns `false` without stepping once converged or out of iterations.
    pub fn step(&mut self) -> bool {
        if self.iterations >= self.options.max_iterations {
            return false;
        }
        let g = self.gradient();
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < self.options.tolerance {
            return false;
        }
        for (w, gi) in self.w.iter_mut().zip(g) {
            *w -= self.options.learning_rate * gi;
        }
        self.iterations += 1;
        true
    }

    pub fn fit(&mut self) {
        while self.step() {}
    }

    pub fn converged(&self) -> bool {
        let g = self.gradient();
        g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < self.options.tolerance
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn predict(&self, v: &EmotionVector) -> Label {
        Label::from_satisfied(self.score(&features(v)) >= 0.0)
    }

    pub fn weights(&self) -> &[f64; DIM] {
        &self.w
    }
}

/// Training-set separability with the default options.
pub fn fit_separability(
    vectors: &[EmotionVector],
    labels: &[Label],
) -> Result<SeparabilityResult, AnalysisError> {
    fit_separability_with(vectors, labels, SeparabilityMode::Training, LogisticOptions::default())
}

pub fn fit_separability_with(
    vectors: &[EmotionVector],
    labels: &[Label],
    mode: SeparabilityMode,
    options: LogisticOptions,
) -> Result<SeparabilityResult, AnalysisError> {
    if vectors.len() != labels.len() {
        return Err(AnalysisError::LengthMismatch { vectors: vectors.len(), labels: labels.len() });
    }
    if vectors.len() < 2 {
        return Err(AnalysisError::EmptyInput);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(AnalysisError::SingleClass);
    }

    let mut full = LogisticTrainer::new(vectors, labels, options);
    full.fit();

    let misclassified = match mode {
        SeparabilityMode::Training => {
            vectors.iter().zip(labels).filter(|(v, &l)| full.predict(v) != l).count()
        }
        SeparabilityMode::LeaveOneOut => (0..vectors.len())
            .filter(|&i| {
                let (mut xs, mut ys) = (vectors.to_vec(), labels.to_vec());
                xs.remove(i);
                ys.remove(i);
                let mut t = LogisticTrainer::new(&xs, &ys, options);
                t.fit();
                t.predict(&vectors[i]) != labels[i]
            })
            .count(),
    };

    let mut weights = [0.0; EMOTION_COUNT];
    weights.copy_from_slice(&full.w[..EMOTION_COUNT]);
    Ok(SeparabilityResult {
        weights,
        intercept: full.w[EMOTION_COUNT],
        error_rate: misclassified as f64 / vectors.len() as f64,
        misclassified,
        total: vectors.len(),
        iterations: full.iterations,
        converged: full.converged(),
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::Emotion;
    use crate::sim::SimUserProfile;
    use crate::bandit::CommandActionMapping;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_toy_set() {
        let mut xs = alloc::vec![EmotionVector::one_hot(Emotion::Happy); 10];
        xs.extend([EmotionVector::one_hot(Emotion::Sad); 10]);
        let mut ys = alloc::vec![Label::Positive; 10];
        ys.extend([Label::Negative; 10]);
        let r = fit_separability(&xs, &ys).unwrap();
        assert_eq!(r.error_rate, 0.0);
        assert!(r.weights[Emotion::Happy.index()] > r.weights[Emotion::Sad.index()]);
        let loo =
            fit_separability_with(&xs, &ys, SeparabilityMode::LeaveOneOut, LogisticOptions::default())
                .unwrap();
        assert_eq!(loo.error_rate, 0.0);
    }

    #[test]
    fn uninformative_vectors_give_minority_error() {
        // Best constant classifier errs on exactly the minority class.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ys: Vec<Label> = (0..200).map(|_| Label::from_satisfied(rng.random::<f64>() < 0.3)).collect();
        let xs = alloc::vec![EmotionVector::uniform(); 200];
        let positives = ys.iter().filter(|l| l.is_positive()).count();
        let minority = positives.min(200 - positives) as f64 / 200.0;
        let r = fit_separability(&xs, &ys).unwrap();
        assert_eq!(r.error_rate, minority);
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = SimUserProfile::new(CommandActionMapping::identity(3).unwrap(), 0.7, 0.5, 1.0).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..120 {
            let satisfied = i % 2 == 0;
            xs.push(u.gen_feedback(satisfied, &mut rng).vector);
            ys.push(Label::from_satisfied(satisfied));
        }
        let mut t = LogisticTrainer::new(&xs, &ys, LogisticOptions::default());
        let mut prev = t.loss();
        for _ in 0..2000 {
            if !t.step() {
                break;
            }
            let now = t.loss();
            assert!(now <= prev + 1e-15, "{now} > {prev}");
            prev = now;
        }
    }

    #[test]
    fn errors() {
        let xs = alloc::vec![EmotionVector::uniform(); 3];
        assert_eq!(
            fit_separability(&xs, &[Label::Positive; 3]),
            Err(AnalysisError::SingleClass)
        );
        assert_eq!(
            fit_separability(&xs, &[Label::Positive]),
            Err(AnalysisError::LengthMismatch { vectors: 3, labels: 1 })
        );
        assert_eq!(fit_separability(&xs[..1], &[Label::Positive]), Err(AnalysisError::EmptyInput));
    }

    #[test]
    fn simulated_error_near_feedback_error_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = SimUserProfile::new(CommandActionMapping::identity(3).unwrap(), 0.8, 0.9, 1.0).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..400 {
            let satisfied = rng.random::<bool>();
            xs.push(u.gen_feedback(satisfied, &mut rng).vector);
            ys.push(Label::from_satisfied(satisfied));
        }
        let r = fit_separability(&xs, &ys).unwrap();
        assert!((r.error_rate - 0.2).abs() < 0.06, "{}", r.error_rate);
    }
}
