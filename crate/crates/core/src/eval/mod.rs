//! RMSE scoring, fold/scenario aggregation and the delay sweep.

mod lag;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_annotations, CorpusError, DatasetIndex, IndexEntry, Scenario, Split, Target};
use crate::pipeline::{prediction_path, PipelineError, PredictionTrack};

pub use lag::{default_delays, lag_sweep, LagTable, SignalSubset};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("no file scores for {0}")]
    EmptyFold(String),
    #[error("{0}: no prediction file")]
    MissingPrediction(String),
    #[error("{0}: prediction timestamps differ from the rating grid")]
    GridMismatch(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileScore {
    pub scenario: Scenario,
    pub fold: u32,
    pub subject_id: u32,
    pub video_id: u32,
    pub rmse_valence: f64,
    pub rmse_arousal: f64,
}

impl FileScore {
    pub fn get(&self, t: Target) -> f64 {
        match t {
            Target::Valence => self.rmse_valence,
            Target::Arousal => self.rmse_arousal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population SD of the child values.
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Stat { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub scenario: Scenario,
    /// `None` at scenario level.
    pub fold: Option<u32>,
    pub children: usize,
    pub valence: Stat,
    pub arousal: Stat,
}

impl LevelScore {
    pub fn get(&self, t: Target) -> Stat {
        match t {
            Target::Valence => self.valence,
            Target::Arousal => self.arousal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTree {
    pub files: Vec<FileScore>,
    pub folds: Vec<LevelScore>,
    pub scenarios: Vec<LevelScore>,
    /// Mean over (scenario, target) of scenario-level RMSEs.
    pub overall: f64,
    pub overall_valence: f64,
    pub overall_arousal: f64,
    /// Mean over every file and both targets, ignoring the hierarchy.
    pub overall_file_pooled: f64,
}

/// Fold means over files, scenario means over fold means, overall mean over
/// scenario-level values of both targets.
pub fn aggregate_scores(files: &[FileScore]) -> Result<ScoreTree> {
    if files.is_empty() {
        return Err(EvalError::EmptyFold("every fold".into()));
    }
    let mut by_fold: BTreeMap<(Scenario, u32), Vec<&FileScore>> = BTreeMap::new();
    for f in files {
        by_fold.entry((f.scenario, f.fold)).or_default().push(f);
    }
    let mut folds = Vec::new();
    for ((scenario, fold), fs) in &by_fold {
        let v: Vec<f64> = fs.iter().map(|f| f.rmse_valence).collect();
        let a: Vec<f64> = fs.iter().map(|f| f.rmse_arousal).collect();
        folds.push(LevelScore {
            scenario: *scenario,
            fold: Some(*fold),
            children: fs.len(),
            valence: Stat::of(&v),
            arousal: Stat::of(&a),
        });
    }
    let mut scenarios = Vec::new();
    let mut by_scenario: BTreeMap<Scenario, Vec<&LevelScore>> = BTreeMap::new();
    for f in &folds {
        by_scenario.entry(f.scenario).or_default().push(f);
    }
    for (scenario, fs) in by_scenario {
        let v: Vec<f64> = fs.iter().map(|f| f.valence.mean).collect();
        let a: Vec<f64> = fs.iter().map(|f| f.arousal.mean).collect();
        scenarios.push(LevelScore {
            scenario,
            fold: None,
            children: fs.len(),
            valence: Stat::of(&v),
            arousal: Stat::of(&a),
        });
    }
    let sv: Vec<f64> = scenarios.iter().map(|s| s.valence.mean).collect();
    let sa: Vec<f64> = scenarios.iter().map(|s| s.arousal.mean).collect();
    let all: Vec<f64> = sv.iter().chain(&sa).copied().collect();
    let pooled: Vec<f64> = files.iter().flat_map(|f| [f.rmse_valence, f.rmse_arousal]).collect();
    Ok(ScoreTree {
        files: files.to_vec(),
        folds,
        scenarios,
        overall: Stat::of(&all).mean,
        overall_valence: Stat::of(&sv).mean,
        overall_arousal: Stat::of(&sa).mean,
        overall_file_pooled: Stat::of(&pooled).mean,
    })
}

fn score_one(entry: &IndexEntry, track: &PredictionTrack) -> Result<Option<FileScore>> {
    let Some(path) = &entry.annotations else { return Ok(None) };
    let truth = load_annotations(path)?;
    score_against(entry, track, &truth).map(Some)
}

fn score_against(
    entry: &IndexEntry,
    track: &PredictionTrack,
    truth: &crate::corpus::AnnotationTrack,
) -> Result<FileScore> {
    if truth.timestamps.len() != track.timestamps.len()
        || truth.timestamps.iter().zip(&track.timestamps).any(|(a, b)| (a - b).abs() > 1e-6)
    {
        return Err(EvalError::GridMismatch(entry.key()));
    }
    Ok(FileScore {
        scenario: entry.scenario,
        fold: entry.fold,
        subject_id: entry.subject_id,
        video_id: entry.video_id,
        rmse_valence: rmse(&track.valence, &truth.valence)?,
        rmse_arousal: rmse(&track.arousal, &truth.arousal)?,
    })
}

/// Scores in-memory predictions against the ratings of their test files;
/// files without ratings are skipped.
pub fn score_tracks(tracks: &[(IndexEntry, PredictionTrack)]) -> Result<Vec<FileScore>> {
    let mut out = Vec::new();
    for (e, t) in tracks {
        if let Some(s) = score_one(e, t)? {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(out)
}

/// Scores the prediction files a run wrote under `output` against every
/// rated test entry of `index` (optionally one scenario).
pub fn score_output(index: &DatasetIndex, output: &Path, scenario: Option<Scenario>) -> Result<Vec<FileScore>> {
    let mut out = Vec::new();
    for e in index.entries() {
        if e.split != Split::Test || e.annotations.is_none() || scenario.is_some_and(|s| s != e.scenario) {
            continue;
        }
        let path = prediction_path(output, &index.root, e);
        if !path.exists() {
            return Err(EvalError::MissingPrediction(path.display().to_string()));
        }
        let pred = load_annotations(&path)?;
        let truth = load_annotations(e.annotations.as_ref().expect("checked"))?;
        let track = PredictionTrack {
            subject_id: e.subject_id,
            video_id: e.video_id,
            timestamps: pred.timestamps,
            valence: pred.valence,
            arousal: pred.arousal,
            provenance: crate::pipeline::Provenance {
                scenario: e.scenario,
                fold: e.fold,
                model_keys: BTreeMap::new(),
                fusion: String::new(),
                label_mode: Default::default(),
                smoothing: 0,
                clamp: [crate::corpus::RATING_MIN, crate::corpus::RATING_MAX],
            },
        };
        out.push(score_against(e, &track, &truth)?);
    }
    if out.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(out)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))
}

pub fn write_file_scores(path: &Path, files: &[FileScore]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let row = |w: &mut csv::Writer<_>, r: Vec<String>| w.write_record(&r).map_err(|e| io_err(path, e));
    row(
        &mut w,
        ["scenario", "fold", "subject", "video", "valence_rmse", "arousal_rmse"]
            .map(String::from)
            .to_vec(),
    )?;
    for f in files {
        row(
            &mut w,
            vec![
                f.scenario.name().to_string(),
                f.fold.to_string(),
                f.subject_id.to_string(),
                f.video_id.to_string(),
                format!("{:.9}", f.rmse_valence),
                format!("{:.9}", f.rmse_arousal),
            ],
        )?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_file_scores(path: &Path) -> Result<Vec<FileScore>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let bad = |what: &str| io_err(path, format!("bad {what} in row {}", out.len() + 1));
        let num = |i: usize, what: &str| rec.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(what));
        let int = |i: usize, what: &str| rec.get(i).and_then(|s| s.parse::<u32>().ok()).ok_or_else(|| bad(what));
        out.push(FileScore {
            scenario: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("scenario"))?,
            fold: int(1, "fold")?,
            subject_id: int(2, "subject")?,
            video_id: int(3, "video")?,
            rmse_valence: num(4, "valence_rmse")?,
            rmse_arousal: num(5, "arousal_rmse")?,
        });
    }
    Ok(out)
}

/// Fold and scenario rows laid out as Scenario, Fold, Arousal RMSE/STD,
/// Valence RMSE/STD, followed by the overall score.
pub fn write_summary(path: &Path, tree: &ScoreTree) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut row = |r: Vec<String>| w.write_record(&r).map_err(|e| io_err(path, e));
    row(["scenario", "fold", "arousal_rmse", "arousal_std", "valence_rmse", "valence_std"]
        .map(String::from)
        .to_vec())?;
    for s in &tree.scenarios {
        let fold_rows = tree.folds.iter().filter(|f| f.scenario == s.scenario);
        for l in fold_rows.chain(std::iter::once(s)) {
            row(vec![
                l.scenario.name().to_string(),
                l.fold.map_or("scenario".to_string(), |f| f.to_string()),
                format!("{:.6}", l.arousal.mean),
                format!("{:.6}", l.arousal.sd),
                format!("{:.6}", l.valence.mean),
                format!("{:.6}", l.valence.sd),
            ])?;
        }
    }
    row(vec![
        "overall".into(),
        String::new(),
        format!("{:.6}", tree.overall_arousal),
        String::new(),
        format!("{:.6}", tree.overall_valence),
        String::new(),
    ])?;
    row(vec!["overall_mean".into(), format!("{:.6}", tree.overall)])?;
    row(vec!["overall_file_pooled".into(), format!("{:.6}", tree.overall_file_pooled)])?;
    row(vec!["# std columns are population SDs over child values".into()])?;
    w.flush().map_err(|e| io_err(path, e))
}
