//! Percentile bootstrap over per-question scores.

use super::EvalError;
use crate::rng::SeededRng;

/// Linear-interpolation percentile of sorted data (`q` in `[0, 1]`): the
/// value at fractional rank `q * (n - 1)`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Means of `resamples` draw-with-replacement resamples of `values`.
pub fn bootstrap_means(values: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let n = values.len();
    let mut rng = SeededRng::new(seed);
    (0..resamples)
        .map(|_| {
            let mut sum = 0.0;
            for _ in 0..n {
                sum += values[rng.below(n)];
            }
            sum / n as f64
        })
        .collect()
}

/// Percentile confidence interval of the mean at `level`.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64), EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewValues(values.len()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidLevel(level));
    }
    if resamples == 0 {
        return Err(EvalError::NoResamples);
    }
    let mut means = bootstrap_means(values, resamples, seed);
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((percentile_sorted(&means, tail), percentile_sorted(&means, 1.0 - tail)))
}
