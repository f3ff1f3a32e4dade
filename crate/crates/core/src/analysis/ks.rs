//! Two-sample Kolmogorov-Smirnov test.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

const SERIES_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// Largest vertical distance between the two empirical CDFs.
    pub d: f64,
    /// Asymptotic p-value.
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if xs.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Sup-norm distance between the right-continuous ECDFs of `a` and `b`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    Ok(d)
}

/// P(K > lambda) for the limiting Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Theta-function form converges fast for small arguments.
        let mut cdf = 0.0;
        let mut j = 1.0;
        loop {
            let odd = 2.0 * j - 1.0;
            let term = libm::exp(-odd * odd * PI * PI / (8.0 * lambda * lambda));
            cdf += term;
            if term < SERIES_TOLERANCE {
                break;
            }
            j += 1.0;
        }
        1.0 - libm::sqrt(2.0 * PI) / lambda * cdf
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        let mut j = 1.0;
        loop {
            let term = libm::exp(-2.0 * j * j * lambda * lambda);
            sum += sign * term;
            if term < SERIES_TOLERANCE {
                break;
            }
            sign = -sign;
            j += 1.0;
        }
        2.0 * sum
    };
    p.clamp(0.0, 1.0)
}

/// KS statistic with the asymptotic p-value at effective size `n1 n2 / (n1 + n2)`.
pub fn ks_two_sample(pos: &[f64], neg: &[f64]) -> Result<KsResult, AnalysisError> {
    let d = ks_statistic(pos, neg)?;
    let (n1, n2) = (pos.len(), neg.len());
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    Ok(KsResult { d, p_value: kolmogorov_survival(libm::sqrt(ne) * d), n1, n2 })
}
