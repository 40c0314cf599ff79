//! In-repo regressors and the greedy weighted-ensemble selector.

mod ensemble;
mod knn;
mod linear;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Target;

pub use ensemble::{fit_greedy_weighted_ensemble, EnsembleModel};
pub use knn::KnnState;
pub use linear::RidgeState;
pub use tree::{BoostedState, ForestState, Tree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("ensemble has no members")]
    EmptyMembers,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("unknown model kind: {0}")]
    UnknownKind(String),
    #[error("feature schema mismatch: model {expected}, data {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("model format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LearnerError>;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    KnnUniform,
    KnnDistance,
    RandomForest,
    ExtraTrees,
    GradientBoostedTrees,
    RidgeLinear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::KnnUniform,
        ModelKind::KnnDistance,
        ModelKind::RandomForest,
        ModelKind::ExtraTrees,
        ModelKind::GradientBoostedTrees,
        ModelKind::RidgeLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::KnnUniform => "knn_uniform",
            ModelKind::KnnDistance => "knn_distance",
            ModelKind::RandomForest => "random_forest",
            ModelKind::ExtraTrees => "extra_trees",
            ModelKind::GradientBoostedTrees => "gradient_boosted_trees",
            ModelKind::RidgeLinear => "ridge_linear",
        }
    }

    /// Default hyperparameters.
    pub fn defaults(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            ModelKind::KnnUniform | ModelKind::KnnDistance => &[("k", 5.0)],
            ModelKind::RandomForest => &[
                ("trees", 100.0),
                ("max_depth", 12.0),
                ("min_leaf", 5.0),
                ("max_features", 1.0 / 3.0),
            ],
            ModelKind::ExtraTrees => &[
                ("trees", 100.0),
                ("max_depth", 12.0),
                ("min_leaf", 5.0),
                ("max_features", 1.0),
            ],
            ModelKind::GradientBoostedTrees => &[
                ("rounds", 200.0),
                ("max_depth", 3.0),
                ("min_leaf", 5.0),
                ("learning_rate", 0.1),
            ],
            ModelKind::RidgeLinear => &[("lambda", 1.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = LearnerError;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LearnerError::UnknownKind(s.to_string()))
    }
}

/// A model kind with hyperparameter overrides; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl LearnerSpec {
    pub fn new(kind: ModelKind) -> Self {
        LearnerSpec {
            kind,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// The default roster: one of each kind.
    pub fn default_roster() -> Vec<LearnerSpec> {
        ModelKind::ALL.into_iter().map(LearnerSpec::new).collect()
    }

    /// Defaults merged with overrides, after validation.
    pub fn resolved(&self) -> Result<BTreeMap<String, f64>> {
        let mut params = self.kind.defaults();
        for (k, v) in &self.params {
            if !params.contains_key(k) {
                return Err(LearnerError::InvalidHyperparameter(format!(
                    "{} has no parameter {k}",
                    self.kind
                )));
            }
            params.insert(k.clone(), *v);
        }
        let bad = |msg: String| Err(LearnerError::InvalidHyperparameter(format!("{}: {msg}", self.kind)));
        for (k, &v) in &params {
            if !v.is_finite() {
                return bad(format!("{k} = {v}"));
            }
            let integral = matches!(k.as_str(), "k" | "trees" | "max_depth" | "min_leaf" | "rounds");
            if integral && (v < 1.0 || v.fract() != 0.0) {
                return bad(format!("{k} must be an integer >= 1, got {v}"));
            }
            match k.as_str() {
                "learning_rate" | "max_features" if !(v > 0.0 && v <= 1.0) => {
                    return bad(format!("{k} must be in (0, 1], got {v}"))
                }
                "lambda" if v < 0.0 => return bad(format!("lambda must be >= 0, got {v}")),
                _ => {}
            }
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelState {
    Knn(KnnState),
    Forest(ForestState),
    Boosted(BoostedState),
    Ridge(RidgeState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub params: BTreeMap<String, f64>,
    pub feature_width: usize,
    pub target: Target,
    pub seed: u64,
    pub state: ModelState,
}

/// Mean taken relative to the first value, so equal inputs give that value
/// back exactly.
pub(crate) fn anchored_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    let Some(first) = it.next() else { return f64::NAN };
    let mut sum = 0.0;
    let mut n = 1usize;
    for v in it {
        sum += v - first;
        n += 1;
    }
    first + sum / n as f64
}

pub(crate) fn check_matrix(x: &[Vec<f64>], width: Option<usize>) -> Result<usize> {
    let w = width.unwrap_or_else(|| x.first().map_or(0, |r| r.len()));
    for (i, row) in x.iter().enumerate() {
        if row.len() != w {
            return Err(LearnerError::ShapeMismatch {
                expected: w,
                got: row.len(),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite { row: i, col: j });
        }
    }
    Ok(w)
}

/// Fits one base learner. Deterministic given the data, spec and seed.
pub fn train_base(spec: &LearnerSpec, x: &[Vec<f64>], y: &[f64], target: Target, seed: u64) -> Result<TrainedModel> {
    if x.len() != y.len() {
        return Err(LearnerError::ShapeMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(LearnerError::ShapeMismatch {
            expected: 2,
            got: x.len(),
        });
    }
    let width = check_matrix(x, None)?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite { row: i, col: width });
    }
    let params = spec.resolved()?;
    let p = |k: &str| params[k];
    let state = match spec.kind {
        ModelKind::KnnUniform => ModelState::Knn(KnnState::fit(x, y, p("k") as usize, false)),
        ModelKind::KnnDistance => ModelState::Knn(KnnState::fit(x, y, p("k") as usize, true)),
        ModelKind::RandomForest => ModelState::Forest(ForestState::fit(
            x,
            y,
            tree::ForestParams {
                trees: p("trees") as usize,
                max_depth: p("max_depth") as usize,
                min_leaf: p("min_leaf") as usize,
                max_features: p("max_features"),
                bootstrap: true,
                random_thresholds: false,
            },
            seed,
        )),
        ModelKind::ExtraTrees => ModelState::Forest(ForestState::fit(
            x,
            y,
            tree::ForestParams {
                trees: p("trees") as usize,
                max_depth: p("max_depth") as usize,
                min_leaf: p("min_leaf") as usize,
                max_features: p("max_features"),
                bootstrap: false,
                random_thresholds: true,
            },
            seed,
        )),
        ModelKind::GradientBoostedTrees => ModelState::Boosted(BoostedState::fit(
            x,
            y,
            p("rounds") as usize,
            p("max_depth") as usize,
            p("min_leaf") as usize,
            p("learning_rate"),
        )),
        ModelKind::RidgeLinear => ModelState::Ridge(RidgeState::fit(x, y, p("lambda"))),
    };
    Ok(TrainedModel {
        kind: spec.kind,
        params,
        feature_width: width,
        target,
        seed,
        state,
    })
}

impl TrainedModel {
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_matrix(x, Some(self.feature_width))?;
        Ok(x.par_iter().map(|row| self.predict_row(row)).collect())
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.state {
            ModelState::Knn(s) => s.predict_row(row),
            ModelState::Forest(s) => s.predict_row(row),
            ModelState::Boosted(s) => s.predict_row(row),
            ModelState::Ridge(s) => s.predict_row(row),
        }
    }
}

/// Seed for member `i` of a roster, decorrelated from neighbouring indices.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((i as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Trains every roster entry on (x, y) in parallel; output order follows the
/// roster.
pub fn train_roster(
    roster: &[LearnerSpec],
    x: &[Vec<f64>],
    y: &[f64],
    target: Target,
    seed: u64,
) -> Result<Vec<TrainedModel>> {
    roster
        .par_iter()
        .enumerate()
        .map(|(i, spec)| train_base(spec, x, y, target, member_seed(seed, i)))
        .collect()
}

/// Hash identifying a feature layout by its column names.
pub fn schema_hash(column_names: &[String]) -> String {
    let mut h = Sha256::new();
    for name in column_names {
        h.update(name.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    schema_hash: String,
    model: EnsembleModel,
}

/// Writes an ensemble as JSON tagged with the format version and the hash of
/// the feature columns it was trained on.
pub fn save_model(path: &Path, model: &EnsembleModel, schema: &str) -> Result<()> {
    let doc = ModelFile {
        format_version: FORMAT_VERSION,
        schema_hash: schema.to_string(),
        model: model.clone(),
    };
    let text = serde_json::to_string(&doc).map_err(|e| LearnerError::Format(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| LearnerError::Io(format!("{}: {e}", path.display())))
}

/// Loads an ensemble, refusing files written for another feature layout.
pub fn load_model(path: &Path, expected_schema: &str) -> Result<EnsembleModel> {
    let text = std::fs::read_to_string(path).map_err(|e| LearnerError::Io(format!("{}: {e}", path.display())))?;
    let doc: ModelFile = serde_json::from_str(&text).map_err(|e| LearnerError::Format(e.to_string()))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(LearnerError::Format(format!(
            "format version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    if doc.schema_hash != expected_schema {
        return Err(LearnerError::SchemaMismatch {
            expected: doc.schema_hash,
            found: expected_schema.to_string(),
        });
    }
    Ok(doc.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, w: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..w).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect()
    }

    fn small(kind: ModelKind) -> LearnerSpec {
        match kind {
            ModelKind::RandomForest | ModelKind::ExtraTrees => LearnerSpec::new(kind).with("trees", 10.0),
            ModelKind::GradientBoostedTrees => LearnerSpec::new(kind).with("rounds", 20.0),
            _ => LearnerSpec::new(kind),
        }
    }

    #[test]
    fn constant_target_every_kind() {
        let x = data(60, 4, 1);
        let y = vec![4.2; 60];
        let probe = data(20, 4, 2);
        for kind in ModelKind::ALL {
            let m = train_base(&small(kind), &x, &y, Target::Valence, 3).unwrap();
            for p in m.predict(&probe).unwrap() {
                if kind == ModelKind::RidgeLinear {
                    assert!((p - 4.2).abs() < 1e-6);
                } else {
                    assert_eq!(p, 4.2, "{kind}");
                }
            }
        }
    }

    #[test]
    fn ridge_recovers_linear_map() {
        let x = data(50, 3, 4);
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0]).collect();
        let m = train_base(&LearnerSpec::new(ModelKind::RidgeLinear).with("lambda", 0.0), &x, &y, Target::Arousal, 0)
            .unwrap();
        let pred = m.predict(&x).unwrap();
        let rmse = (pred.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 50.0).sqrt();
        assert!(rmse < 1e-6);
        let slope = m.predict(&[vec![1.0, 0.0, 0.0]]).unwrap()[0] - m.predict(&[vec![0.0, 0.0, 0.0]]).unwrap()[0];
        assert!((slope - 3.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = data(80, 5, 5);
        let y: Vec<f64> = x.iter().map(|r| r[0].sin() + r[1]).collect();
        let probe = data(30, 5, 6);
        for kind in ModelKind::ALL {
            let a = train_base(&small(kind), &x, &y, Target::Valence, 9).unwrap();
            let b = train_base(&small(kind), &x, &y, Target::Valence, 9).unwrap();
            assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
        }
    }

    #[test]
    fn knn_nearest_self() {
        let x = data(40, 3, 7);
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let m = train_base(&LearnerSpec::new(ModelKind::KnnUniform).with("k", 1.0), &x, &y, Target::Valence, 0).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
    }

    #[test]
    fn width_and_param_checks() {
        let x = data(10, 3, 8);
        let y = vec![1.0; 10];
        let m = train_base(&LearnerSpec::new(ModelKind::RidgeLinear), &x, &y, Target::Valence, 0).unwrap();
        assert!(matches!(m.predict(&[vec![0.0; 4]]), Err(LearnerError::ShapeMismatch { .. })));
        for bad in [
            LearnerSpec::new(ModelKind::KnnUniform).with("k", 0.0),
            LearnerSpec::new(ModelKind::GradientBoostedTrees).with("learning_rate", 1.5),
            LearnerSpec::new(ModelKind::RidgeLinear).with("lambda", -1.0),
            LearnerSpec::new(ModelKind::RandomForest).with("max_depth", 0.0),
            LearnerSpec::new(ModelKind::RidgeLinear).with("k", 3.0),
        ] {
            assert!(matches!(bad.resolved(), Err(LearnerError::InvalidHyperparameter(_))));
        }
        assert!(matches!(
            train_base(&LearnerSpec::new(ModelKind::RidgeLinear), &x, &y[..9], Target::Valence, 0),
            Err(LearnerError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn save_and_load_checks_schema() {
        let x = data(30, 2, 10);
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let m = train_base(&small(ModelKind::RandomForest), &x, &y, Target::Valence, 1).unwrap();
        let ens = EnsembleModel::new(vec![m], vec![1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let cols = vec!["a".to_string(), "b".to_string()];
        save_model(&path, &ens, &schema_hash(&cols)).unwrap();
        let back = load_model(&path, &schema_hash(&cols)).unwrap();
        assert_eq!(back.predict(&x).unwrap(), ens.predict(&x).unwrap());
        let other = vec!["a".to_string(), "c".to_string()];
        assert!(matches!(
            load_model(&path, &schema_hash(&other)),
            Err(LearnerError::SchemaMismatch { .. })
        ));
    }
}
