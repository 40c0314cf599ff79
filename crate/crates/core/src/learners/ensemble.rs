use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_matrix, LearnerError, Result, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<TrainedModel>,
    pub weights: Vec<f64>,
    /// Validation RMSE reached during selection, if fitted by the selector.
    pub validation_rmse: Option<f64>,
}

impl EnsembleModel {
    pub fn new(members: Vec<TrainedModel>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(LearnerError::EmptyMembers);
        }
        if weights.len() != members.len() {
            return Err(LearnerError::ShapeMismatch {
                expected: members.len(),
                got: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(LearnerError::InvalidHyperparameter(format!(
                "ensemble weights must be nonnegative and sum to 1, got {weights:?}"
            )));
        }
        let width = members[0].feature_width;
        if let Some(m) = members.iter().find(|m| m.feature_width != width) {
            return Err(LearnerError::ShapeMismatch {
                expected: width,
                got: m.feature_width,
            });
        }
        Ok(EnsembleModel {
            members,
            weights,
            validation_rmse: None,
        })
    }

    pub fn feature_width(&self) -> usize {
        self.members[0].feature_width
    }

    /// Weighted mean of member predictions; zero-weight members are skipped.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_matrix(x, Some(self.feature_width()))?;
        let mut out = vec![0.0; x.len()];
        for (m, &w) in self.members.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let p = m.predict(x)?;
            for (o, v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

fn rmse_of_sum(sum: &[f64], extra: &[f64], count: f64, y: &[f64]) -> f64 {
    let mse = sum
        .iter()
        .zip(extra)
        .zip(y)
        .map(|((s, e), t)| ((s + e) / count - t).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    mse.sqrt()
}

/// Forward selection with replacement. Starts from the best single member,
/// then repeatedly adds whichever member most lowers the validation RMSE of
/// the running mean; the best prefix of the selection sequence is kept.
/// Lower member index wins ties.
pub fn fit_greedy_weighted_ensemble(
    members: Vec<TrainedModel>,
    x_val: &[Vec<f64>],
    y_val: &[f64],
    iterations: usize,
) -> Result<EnsembleModel> {
    if members.is_empty() {
        return Err(LearnerError::EmptyMembers);
    }
    if y_val.is_empty() || x_val.len() != y_val.len() {
        return Err(LearnerError::ShapeMismatch {
            expected: x_val.len().max(1),
            got: y_val.len(),
        });
    }
    let preds: Vec<Vec<f64>> = members.par_iter().map(|m| m.predict(x_val)).collect::<Result<_>>()?;
    let mut sum = vec![0.0; y_val.len()];
    let mut counts = vec![0usize; members.len()];
    let mut history: Vec<(f64, Vec<usize>)> = Vec::with_capacity(iterations + 1);
    for step in 0..=iterations {
        let k = (step + 1) as f64;
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in preds.iter().enumerate() {
            let r = rmse_of_sum(&sum, p, k, y_val);
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((i, r));
            }
        }
        let (i, r) = best.expect("nonempty members");
        for (s, v) in sum.iter_mut().zip(&preds[i]) {
            *s += v;
        }
        counts[i] += 1;
        history.push((r, counts.clone()));
    }
    let mut chosen = &history[0];
    for h in &history[1..] {
        if h.0 < chosen.0 {
            chosen = h;
        }
    }
    let total: usize = chosen.1.iter().sum();
    let mut weights: Vec<f64> = chosen.1.iter().map(|&c| c as f64 / total as f64).collect();
    // recheck with the arithmetic `predict` uses; rounding in the weighted sum
    // must not leave the mixture behind the best single member
    let single = &history[0].1;
    let mut rmse = rmse_of_sum(&weighted(&preds, &weights), &vec![0.0; y_val.len()], 1.0, y_val);
    if rmse > history[0].0 {
        weights = single.iter().map(|&c| c as f64).collect();
        rmse = history[0].0;
    }
    let mut model = EnsembleModel::new(members, weights)?;
    model.validation_rmse = Some(rmse);
    Ok(model)
}

fn weighted(preds: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; preds[0].len()];
    for (p, &w) in preds.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    out
}
