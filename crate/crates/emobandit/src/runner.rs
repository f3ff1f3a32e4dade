//! Parallel batch execution. Each run owns its seeded RNG, so results are
//! identical to the sequential functions in `emobandit_core::experiment`.

use emobandit_core::experiment::{aggregate, run_single};
use emobandit_core::{ExperimentCondition, ExperimentError, ExperimentResult};
use rayon::prelude::*;

pub fn run_condition(condition: &ExperimentCondition) -> Result<ExperimentResult, ExperimentError> {
    condition.validate()?;
    let runs = (0..condition.n_experiments)
        .into_par_iter()
        .map(|i| run_single(condition, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(condition, runs))
}

pub fn sweep(conditions: &[ExperimentCondition]) -> Result<Vec<ExperimentResult>, ExperimentError> {
    if conditions.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    conditions.iter().map(run_condition).collect()
}
