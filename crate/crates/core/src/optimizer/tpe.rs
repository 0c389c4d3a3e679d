//! Parzen estimators and the univariate TPE proposal step.
//!
//! The space has no conditional parameters, so the "tree" is flat: every
//! dimension gets its own pair of densities `l` (good trials) and `g`
//! (the rest), and the proposal maximizes `l / g` per dimension.

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::space::{integer_grid, Dimension, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeSettings {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    pub prior_weight: f64,
}

impl Default for TpeSettings {
    fn default() -> Self {
        TpeSettings { n_startup: 10, gamma: 0.25, n_candidates: 24, prior_weight: 1.0 }
    }
}

impl TpeSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.n_candidates == 0 {
            return Err("n_candidates must be at least 1".into());
        }
        if !(self.prior_weight > 0.0 && self.prior_weight.is_finite()) {
            return Err(format!("prior_weight must be positive, got {}", self.prior_weight));
        }
        Ok(())
    }

    /// Size of the good group among `n` completed trials.
    pub fn n_good(&self, n: usize) -> usize {
        (self.gamma * n as f64).ceil() as usize
    }
}

/// `p(c) = (w + count(c)) / (w * |domain| + |group|)` over category indices
/// `0..n_categories`.
pub fn categorical_density(group: &[usize], n_categories: usize, prior_weight: f64) -> Vec<f64> {
    assert!(n_categories > 0, "empty categorical domain");
    let mut counts = vec![0usize; n_categories];
    for &c in group {
        counts[c] += 1;
    }
    let denom = prior_weight * n_categories as f64 + group.len() as f64;
    counts.into_iter().map(|c| (prior_weight + c as f64) / denom).collect()
}

fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf((x - mu) / (sigma * std::f64::consts::SQRT_2)))
}

/// Cell boundaries around each grid point: midpoints between neighbours,
/// and half a step beyond the ends.
fn cell_edges(grid: &[i64], step: i64) -> Vec<f64> {
    let half = step as f64 / 2.0;
    let mut edges = Vec::with_capacity(grid.len() + 1);
    edges.push(grid[0] as f64 - half);
    for pair in grid.windows(2) {
        edges.push((pair[0] + pair[1]) as f64 / 2.0);
    }
    edges.push(grid[grid.len() - 1] as f64 + half);
    edges
}

/// Probability mass per point of the integer grid `low..=high` (step
/// `step`) under a mixture of a uniform prior (weight `prior_weight`) and
/// one Gaussian per observation (weight 1 each), each truncated to the
/// grid's support. Bandwidth is `max(step, (high - low) / sqrt(n + 1))`.
pub fn numeric_density(group: &[i64], low: i64, high: i64, step: i64, prior_weight: f64) -> Vec<f64> {
    let grid = integer_grid(low, high, step);
    let edges = cell_edges(&grid, step);
    let (a, b) = (edges[0], edges[edges.len() - 1]);
    let mut mass: Vec<f64> = edges.windows(2).map(|e| prior_weight * (e[1] - e[0]) / (b - a)).collect();
    let bandwidth = (step as f64).max((high - low) as f64 / ((group.len() + 1) as f64).sqrt());
    for &obs in group {
        let mu = obs as f64;
        let cdf: Vec<f64> = edges.iter().map(|&e| normal_cdf(e, mu, bandwidth)).collect();
        let z = cdf[cdf.len() - 1] - cdf[0];
        for (i, m) in mass.iter_mut().enumerate() {
            *m += (cdf[i + 1] - cdf[i]) / z;
        }
    }
    let total = prior_weight + group.len() as f64;
    mass.iter_mut().for_each(|m| *m /= total);
    mass
}

/// Index into `domain` of each observed value; values outside the domain
/// are skipped.
fn category_indices(values: &[&ParamValue], domain: &[String]) -> Vec<usize> {
    values
        .iter()
        .filter_map(|v| match v {
            ParamValue::Symbol(s) => domain.iter().position(|d| d == s),
            ParamValue::Int(_) => None,
        })
        .collect()
}

fn integers(values: &[&ParamValue], low: i64, high: i64) -> Vec<i64> {
    values
        .iter()
        .filter_map(|v| match v {
            ParamValue::Int(i) if (low..=high).contains(i) => Some(*i),
            _ => None,
        })
        .collect()
}

/// Draws from `l` and keeps the candidate with the largest `l / g`; the
/// earliest draw wins ties.
fn best_candidate(l: &[f64], g: &[f64], n_candidates: usize, rng: &mut SeededRng) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for _ in 0..n_candidates {
        let i = rng.weighted_index(l);
        let ratio = l[i] / g[i];
        if ratio > best.0 {
            best = (ratio, i);
        }
    }
    best.1
}

/// Uniform draw from one dimension's grid or value list.
pub fn sample_uniform(dim: &Dimension, rng: &mut SeededRng) -> ParamValue {
    match dim {
        Dimension::Categorical { values, .. } => ParamValue::Symbol(values[rng.below(values.len())].clone()),
        Dimension::Integer { low, high, step, .. } => {
            let grid = integer_grid(*low, *high, *step);
            ParamValue::Int(grid[rng.below(grid.len())])
        }
    }
}

/// TPE proposal for one dimension from the good and bad observations.
pub fn sample_tpe(dim: &Dimension, good: &[&ParamValue], bad: &[&ParamValue], settings: &TpeSettings, rng: &mut SeededRng) -> ParamValue {
    match dim {
        Dimension::Categorical { values, .. } => {
            let l = categorical_density(&category_indices(good, values), values.len(), settings.prior_weight);
            let g = categorical_density(&category_indices(bad, values), values.len(), settings.prior_weight);
            ParamValue::Symbol(values[best_candidate(&l, &g, settings.n_candidates, rng)].clone())
        }
        Dimension::Integer { low, high, step, .. } => {
            let l = numeric_density(&integers(good, *low, *high), *low, *high, *step, settings.prior_weight);
            let g = numeric_density(&integers(bad, *low, *high), *low, *high, *step, settings.prior_weight);
            let grid = integer_grid(*low, *high, *step);
            ParamValue::Int(grid[best_candidate(&l, &g, settings.n_candidates, rng)])
        }
    }
}
