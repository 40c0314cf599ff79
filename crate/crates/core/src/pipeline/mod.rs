//! Per-scenario training and prediction, fusion and post-smoothing.

mod config;
mod run;

use thiserror::Error;

use crate::corpus::{CorpusError, RATING_MAX, RATING_MIN};
use crate::dsp::moving_average;
use crate::features::FeatureError;
use crate::learners::LearnerError;
use crate::scenarios::ScenarioError;

pub use config::{apply_override, load_config, LabelMode, RunConfig};
pub use run::{
    build_quadrant_map, derive_seed, predict_fold, prediction_path, run, run_scenario, write_predictions, FoldData,
    FoldOutcome, GroupReport, LabeledMatrix, PredictionTrack, PreparedFold, Provenance, RunOutcome,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{scenario} fold {fold}, group {group}: {message}")]
    Group {
        scenario: String,
        fold: u32,
        group: String,
        message: String,
    },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to fuse")]
    EmptyList,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Elementwise mean of equal-length prediction vectors. Identical inputs come
/// back unchanged.
pub fn late_fuse_mean(predictions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = predictions.first().ok_or(PipelineError::EmptyList)?;
    if let Some(p) = predictions.iter().find(|p| p.len() != first.len()) {
        return Err(PipelineError::LengthMismatch(first.len(), p.len()));
    }
    let k = predictions.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let base = first[i];
            let (mut lo, mut hi, mut sum) = (base, base, 0.0);
            for p in &predictions[1..] {
                lo = lo.min(p[i]);
                hi = hi.max(p[i]);
                sum += p[i] - base;
            }
            (base + sum / k).clamp(lo, hi)
        })
        .collect())
}

/// Trailing moving average over `n` samples, then clamping to the rating
/// scale.
pub fn postprocess_track(raw: &[f64], n: usize) -> Vec<f64> {
    moving_average(raw, n)
        .into_iter()
        .map(|v| v.clamp(RATING_MIN, RATING_MAX))
        .collect()
}
