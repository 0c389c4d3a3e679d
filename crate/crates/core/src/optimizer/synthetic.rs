//! A deterministic, separable test objective over the pipeline space, used
//! to compare samplers without running the pipeline.

use super::{OptimizerError, Study, TpeSettings};
use crate::evaluation::Metric;
use crate::retrieval::Strategy;
use crate::space::{baseline_config, default_search_space, PipelineConfig};

/// Location of the top_k peak.
pub const PEAK_TOP_K: i64 = 10;
/// Value at the global optimum.
pub const OPTIMUM: f64 = 1.0;

/// `max(0, 1 - |x - peak| / peak)`.
pub fn triangle(x: i64, peak: i64) -> f64 {
    (1.0 - (x - peak).abs() as f64 / peak as f64).max(0.0)
}

/// `0.8 * [search_type = graph_completion] + 0.2 * triangle(top_k; 10)`.
pub fn objective(config: &PipelineConfig) -> f64 {
    let graph = if config.search_type == Strategy::GraphCompletion { 1.0 } else { 0.0 };
    0.8 * graph + 0.2 * triangle(config.top_k as i64, PEAK_TOP_K)
}

/// Sampler settings that never leave the uniform startup phase.
pub fn random_search() -> TpeSettings {
    TpeSettings { n_startup: usize::MAX, ..TpeSettings::default() }
}

/// Best objective found in `n_trials` on the default space.
pub fn best_found(settings: &TpeSettings, seed: u64, n_trials: usize) -> Result<f64, OptimizerError> {
    let mut study = Study::new("synthetic", default_search_space(), Metric::F1, seed, baseline_config(), *settings)?;
    for _ in 0..n_trials {
        let config = study.suggest()?;
        let value = objective(&config);
        study.record(config, value, Vec::new())?;
    }
    Ok(study.best_trial()?.objective.unwrap_or(0.0))
}
