use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{LabelMode, RunConfig};
use super::{late_fuse_mean, postprocess_track, PipelineError, Result};
use crate::corpus::{
    enumerate_dataset, load_annotations, load_recording, save_annotations, AnnotationTrack, DatasetIndex,
    IndexEntry, Scenario, Split, Target, TimeUnit, ANNOTATION_STEP, RATING_MAX, RATING_MIN,
};
use crate::features::{FeatureMatrix, PreparedRecording};
use crate::learners::{fit_greedy_weighted_ensemble, save_model, schema_hash, train_roster, EnsembleModel};
use crate::scenarios::{
    build_folds, elicitor_video_groups, quadrant_meta_analysis, training_subsets_for_target, FoldSpec,
    VideoQuadrantMap,
};

const CHAIN_PREFIX: &str = "chain_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: Scenario,
    pub fold: u32,
    /// Model keys used per target.
    pub model_keys: BTreeMap<Target, Vec<String>>,
    pub fusion: String,
    pub label_mode: LabelMode,
    pub smoothing: usize,
    pub clamp: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrack {
    pub subject_id: u32,
    pub video_id: u32,
    pub timestamps: Vec<f64>,
    pub valence: Vec<f64>,
    pub arousal: Vec<f64>,
    pub provenance: Provenance,
}

impl PredictionTrack {
    pub fn target(&self, t: Target) -> &[f64] {
        match t {
            Target::Valence => &self.valence,
            Target::Arousal => &self.arousal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub scenario: Scenario,
    pub fold: u32,
    pub key: String,
    pub target: Target,
    pub members: Vec<String>,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub validation_rmse: f64,
    /// (learner kind, ensemble weight) in roster order.
    pub weights: Vec<(String, f64)>,
}

/// A feature matrix with its ratings, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub features: FeatureMatrix,
    pub annotations: Option<AnnotationTrack>,
}

/// Feature matrices of one fold keyed by `IndexEntry::key`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldData {
    pub train: BTreeMap<String, LabeledMatrix>,
    pub test: BTreeMap<String, LabeledMatrix>,
}

impl FoldData {
    /// The same files restricted to `columns`.
    pub fn select_columns(&self, columns: &[usize]) -> FoldData {
        let pick = |m: &BTreeMap<String, LabeledMatrix>| {
            m.iter()
                .map(|(k, l)| {
                    let features = l.features.select_columns(columns);
                    (k.clone(), LabeledMatrix { features, annotations: l.annotations.clone() })
                })
                .collect()
        };
        FoldData {
            train: pick(&self.train),
            test: pick(&self.test),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: FoldSpec,
    pub predictions: Vec<(IndexEntry, PredictionTrack)>,
    pub groups: Vec<GroupReport>,
    pub models: Vec<((String, Target), EnsembleModel, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub quadrants: Option<VideoQuadrantMap>,
    pub folds: Vec<FoldOutcome>,
}

impl RunOutcome {
    pub fn predictions(&self) -> impl Iterator<Item = &(IndexEntry, PredictionTrack)> {
        self.folds.iter().flat_map(|f| f.predictions.iter())
    }
}

/// Seed for a named unit of work, independent of scheduling.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

struct PreparedEntry {
    entry: IndexEntry,
    recording: PreparedRecording,
    timestamps: Vec<f64>,
    annotations: Option<AnnotationTrack>,
}

/// Cleaned recordings and label grids of one fold, ready to be framed at any
/// delay.
pub struct PreparedFold {
    train: Vec<PreparedEntry>,
    test: Vec<PreparedEntry>,
}

/// 20 Hz grid over a recording's span, used when a test file has no ratings.
fn synthesized_grid(t0: f64, t_end: f64) -> Vec<f64> {
    let n = ((t_end - t0) / ANNOTATION_STEP + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * ANNOTATION_STEP).collect()
}

fn prepare_entry(entry: &IndexEntry, cfg: &RunConfig) -> Result<PreparedEntry> {
    let rec = load_recording(&entry.physiology)?;
    let annotations = match &entry.annotations {
        Some(p) => Some(load_annotations(p)?),
        None => None,
    };
    if entry.split == Split::Train && annotations.is_none() {
        return Err(PipelineError::Config(format!("{}: training file without ratings", entry.key())));
    }
    let timestamps = match &annotations {
        Some(a) => a.timestamps.clone(),
        None => synthesized_grid(rec.t0, rec.t_end()),
    };
    let recording = PreparedRecording::new(&rec, &cfg.window)?;
    Ok(PreparedEntry {
        entry: entry.clone(),
        recording,
        timestamps,
        annotations,
    })
}

impl PreparedFold {
    pub fn new(fold: &FoldSpec, cfg: &RunConfig) -> Result<Self> {
        let load = |entries: &[IndexEntry]| -> Result<Vec<PreparedEntry>> {
            entries.par_iter().map(|e| prepare_entry(e, cfg)).collect()
        };
        Ok(PreparedFold {
            train: load(&fold.train_entries)?,
            test: load(&fold.test_entries)?,
        })
    }

    /// Frames every file with windows ending `delay` s before each label,
    /// keeping only `columns` when given.
    pub fn frames(&self, delay: f64, columns: Option<&[usize]>) -> Result<FoldData> {
        let build = |entries: &[PreparedEntry]| -> Result<BTreeMap<String, LabeledMatrix>> {
            let mats: Vec<(String, LabeledMatrix)> = entries
                .par_iter()
                .map(|p| {
                    let m = p.recording.frames(&p.timestamps, delay)?;
                    let features = match columns {
                        Some(c) => m.select_columns(c),
                        None => m,
                    };
                    Ok((
                        p.entry.key(),
                        LabeledMatrix {
                            features,
                            annotations: p.annotations.clone(),
                        },
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(mats.into_iter().collect())
        };
        Ok(FoldData {
            train: build(&self.train)?,
            test: build(&self.test)?,
        })
    }
}

fn with_chain_column(rows: &[Vec<f64>], values: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .zip(values)
        .map(|(r, v)| {
            let mut r = r.clone();
            r.push(*v);
            r
        })
        .collect()
}

struct TrainedGroup {
    key: String,
    target: Target,
    model: EnsembleModel,
    report: GroupReport,
    schema: String,
}

fn train_group(
    cfg: &RunConfig,
    fold: &FoldSpec,
    data: &FoldData,
    key: &str,
    members: &[IndexEntry],
    target: Target,
) -> Result<TrainedGroup> {
    let group_err = |message: String| PipelineError::Group {
        scenario: fold.scenario.to_string(),
        fold: fold.fold_id,
        group: format!("{key}/{target}"),
        message,
    };
    let chain = cfg.label_mode.first().filter(|f| *f != target);
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut val_x = Vec::new();
    let mut val_y = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    for m in members {
        let lm = data
            .train
            .get(&m.key())
            .ok_or_else(|| group_err(format!("missing features for {}", m.key())))?;
        let ann = lm.annotations.as_ref().ok_or_else(|| group_err(format!("{} has no ratings", m.key())))?;
        let y = ann.target(target);
        let n = y.len();
        if n < 3 {
            return Err(group_err(format!("{} has only {n} labelled rows", m.key())));
        }
        let rows = match chain {
            Some(first) => with_chain_column(&lm.features.rows, ann.target(first)),
            None => lm.features.rows.clone(),
        };
        if columns.is_none() {
            let mut names = lm.features.column_names.clone();
            if let Some(first) = chain {
                names.push(format!("{CHAIN_PREFIX}{first}"));
            }
            columns = Some(names);
        }
        let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 2);
        let cut = n - n_val;
        train_x.extend_from_slice(&rows[..cut]);
        train_y.extend_from_slice(&y[..cut]);
        val_x.extend_from_slice(&rows[cut..]);
        val_y.extend_from_slice(&y[cut..]);
    }
    let seed = derive_seed(cfg.seed, &format!("{}/{}/{key}/{target}", fold.scenario, fold.fold_id));
    let run = || -> Result<EnsembleModel> {
        let roster = train_roster(&cfg.learners, &train_x, &train_y, target, seed)?;
        Ok(fit_greedy_weighted_ensemble(roster, &val_x, &val_y, cfg.ensemble_iterations)?)
    };
    let model = run().map_err(|e| group_err(e.to_string()))?;
    let report = GroupReport {
        scenario: fold.scenario,
        fold: fold.fold_id,
        key: key.to_string(),
        target,
        members: members.iter().map(|m| m.key()).collect(),
        train_rows: train_y.len(),
        validation_rows: val_y.len(),
        validation_rmse: model.validation_rmse.unwrap_or(f64::NAN),
        weights: model
            .members
            .iter()
            .zip(&model.weights)
            .map(|(m, w)| (m.kind.name().to_string(), *w))
            .collect(),
    };
    Ok(TrainedGroup {
        key: key.to_string(),
        target,
        model,
        report,
        schema: schema_hash(&columns.unwrap_or_default()),
    })
}

/// Trains every (group, target) model of a fold and predicts each test file.
pub fn predict_fold(cfg: &RunConfig, fold: &FoldSpec, data: &FoldData) -> Result<FoldOutcome> {
    let jobs: Vec<(&str, &[IndexEntry], Target)> = fold
        .groups
        .iter()
        .flat_map(|g| {
            let targets: Vec<Target> = match g.target {
                Some(t) => vec![t],
                None => Target::BOTH.to_vec(),
            };
            targets.into_iter().map(move |t| (g.key.as_str(), g.members.as_slice(), t))
        })
        .collect();
    let trained: Vec<TrainedGroup> = jobs
        .par_iter()
        .map(|(key, members, target)| train_group(cfg, fold, data, key, members, *target))
        .collect::<Result<_>>()?;
    let models: BTreeMap<(String, Target), &TrainedGroup> =
        trained.iter().map(|t| ((t.key.clone(), t.target), t)).collect();

    let order: Vec<Target> = match cfg.label_mode.first() {
        Some(first) => vec![first, first.other()],
        None => Target::BOTH.to_vec(),
    };
    let predictions: Vec<(IndexEntry, PredictionTrack)> = fold
        .test_entries
        .par_iter()
        .map(|entry| -> Result<(IndexEntry, PredictionTrack)> {
            let lm = data.test.get(&entry.key()).ok_or_else(|| PipelineError::Group {
                scenario: fold.scenario.to_string(),
                fold: fold.fold_id,
                group: entry.key(),
                message: "missing test features".into(),
            })?;
            let mut out: BTreeMap<Target, Vec<f64>> = BTreeMap::new();
            let mut keys: BTreeMap<Target, Vec<String>> = BTreeMap::new();
            for &target in &order {
                let chain = cfg.label_mode.first().filter(|f| *f != target);
                let rows = match chain {
                    Some(first) => with_chain_column(&lm.features.rows, &out[&first]),
                    None => lm.features.rows.clone(),
                };
                let groups = training_subsets_for_target(fold, target, entry)?;
                let mut preds = Vec::with_capacity(groups.len());
                for g in &groups {
                    let m = models[&(g.key.clone(), target)];
                    preds.push(m.model.predict(&rows)?);
                }
                out.insert(target, postprocess_track(&late_fuse_mean(&preds)?, cfg.smoothing));
                keys.insert(target, groups.iter().map(|g| g.key.clone()).collect());
            }
            let track = PredictionTrack {
                subject_id: entry.subject_id,
                video_id: entry.video_id,
                timestamps: lm.features.timestamps.clone(),
                valence: out.remove(&Target::Valence).expect("valence predicted"),
                arousal: out.remove(&Target::Arousal).expect("arousal predicted"),
                provenance: Provenance {
                    scenario: fold.scenario,
                    fold: fold.fold_id,
                    model_keys: keys,
                    fusion: "mean".into(),
                    label_mode: cfg.label_mode,
                    smoothing: cfg.smoothing,
                    clamp: [RATING_MIN, RATING_MAX],
                },
            };
            Ok((entry.clone(), track))
        })
        .collect::<Result<_>>()?;

    let mut groups = Vec::with_capacity(trained.len());
    let mut saved = Vec::with_capacity(trained.len());
    for t in trained {
        groups.push(t.report);
        saved.push(((t.key, t.target), t.model, t.schema));
    }
    Ok(FoldOutcome {
        fold: fold.clone(),
        predictions,
        groups,
        models: saved,
    })
}

/// Quadrant map from every unique training rating track of the
/// across-elicitor folds, with the folds' test video sets as groups.
pub fn build_quadrant_map(index: &DatasetIndex) -> Result<Option<VideoQuadrantMap>> {
    let folds = index.folds(Scenario::AcrossElicitor);
    if folds.is_empty() {
        return Ok(None);
    }
    let mut seen = BTreeMap::new();
    for f in folds {
        for e in index.select(Scenario::AcrossElicitor, f, Split::Train) {
            if let Some(p) = &e.annotations {
                seen.entry((e.subject_id, e.video_id)).or_insert_with(|| p.clone());
            }
        }
    }
    let tracks: Vec<(u32, AnnotationTrack)> = seen
        .into_par_iter()
        .map(|((_, v), p)| Ok((v, load_annotations(&p)?)))
        .collect::<Result<_>>()?;
    let refs: Vec<(u32, &AnnotationTrack)> = tracks.iter().map(|(v, t)| (*v, t)).collect();
    let groups = elicitor_video_groups(index);
    let groups = (groups.len() == 4).then_some(groups);
    Ok(Some(quadrant_meta_analysis(&refs, groups.as_deref())?))
}

/// Trains and predicts every fold of one scenario.
pub fn run_scenario(
    cfg: &RunConfig,
    index: &DatasetIndex,
    scenario: Scenario,
    quadrants: Option<&VideoQuadrantMap>,
) -> Result<Vec<FoldOutcome>> {
    cfg.validate()?;
    let folds = build_folds(scenario, index, quadrants)?;
    let mut out = Vec::with_capacity(folds.len());
    for fold in &folds {
        let prepared = PreparedFold::new(fold, cfg)?;
        let data = prepared.frames(0.0, None)?;
        out.push(predict_fold(cfg, fold, &data)?);
    }
    Ok(out)
}

/// Output path of a test entry's predictions: its annotation path relative to
/// the dataset root, re-rooted under `out/predictions`.
pub fn prediction_path(out: &Path, root: &Path, entry: &IndexEntry) -> PathBuf {
    let base = out.join("predictions");
    match entry.physiology.strip_prefix(root) {
        Ok(rel) => {
            let mut p = base;
            for c in rel.components() {
                match c {
                    Component::Normal(s) if s == "physiology" => p.push("annotations"),
                    other => p.push(other),
                }
            }
            p
        }
        Err(_) => base
            .join(entry.scenario.dir_name())
            .join(format!("fold_{}", entry.fold))
            .join(entry.split.name())
            .join("annotations")
            .join(entry.file_name()),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes each track as `time,valence,arousal` in the time unit of the
/// matching input file; returns (relative path, sha256) pairs.
pub fn write_predictions(
    out: &Path,
    index: &DatasetIndex,
    tracks: &[(IndexEntry, PredictionTrack)],
) -> Result<BTreeMap<String, String>> {
    let written: Vec<(String, String)> = tracks
        .par_iter()
        .map(|(entry, track)| {
            let path = prediction_path(out, &index.root, entry);
            if let Some(d) = path.parent() {
                std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
            }
            let unit = match &entry.annotations {
                Some(p) => load_annotations(p).map(|a| a.time_unit).unwrap_or(TimeUnit::Milliseconds),
                None => TimeUnit::Milliseconds,
            };
            let ann = AnnotationTrack {
                timestamps: track.timestamps.clone(),
                valence: track.valence.clone(),
                arousal: track.arousal.clone(),
                time_unit: unit,
            };
            save_annotations(&path, &ann, Some(6))?;
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            let rel = path.strip_prefix(out).unwrap_or(&path).display().to_string();
            Ok((rel, hex::encode(Sha256::digest(&bytes))))
        })
        .collect::<Result<_>>()?;
    Ok(written.into_iter().collect())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Full run: indexes `cfg.data`, trains and predicts the configured
/// scenarios, and writes predictions, fold manifests and `manifest.json`
/// under `cfg.output`. Returns the outcome and the manifest hash.
pub fn run(cfg: &RunConfig) -> Result<(RunOutcome, String)> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> Result<(RunOutcome, String)> {
    let index = enumerate_dataset(&cfg.data)?;
    let scenarios: Vec<Scenario> = match cfg.scenario {
        Some(s) => vec![s],
        None => index.scenarios(),
    };
    let quadrants = if scenarios.contains(&Scenario::AcrossElicitor) {
        build_quadrant_map(&index)?
    } else {
        None
    };
    let mut folds = Vec::new();
    for &s in &scenarios {
        folds.extend(run_scenario(cfg, &index, s, quadrants.as_ref())?);
    }
    let outcome = RunOutcome { quadrants, folds };

    let out = &cfg.output;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let tracks: Vec<(IndexEntry, PredictionTrack)> = outcome.predictions().cloned().collect();
    let hashes = write_predictions(out, &index, &tracks)?;
    for f in &outcome.folds {
        let name = format!("{}_fold_{}.json", f.fold.scenario.dir_name(), f.fold.fold_id);
        write_json(&out.join("folds").join(name), &f.fold)?;
        if cfg.save_models {
            let dir = out.join("models").join(f.fold.scenario.dir_name()).join(format!("fold_{}", f.fold.fold_id));
            std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            for ((key, target), model, schema) in &f.models {
                save_model(&dir.join(format!("{key}_{target}.json")), model, schema)?;
            }
        }
    }
    let groups: Vec<&GroupReport> = outcome.folds.iter().flat_map(|f| f.groups.iter()).collect();
    let manifest = serde_json::json!({
        "format_version": 1,
        "config": cfg,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "scenarios": scenarios,
        "quadrants": outcome.quadrants,
        "groups": groups,
        "predictions": hashes,
    });
    let path = out.join("manifest.json");
    write_json(&path, &manifest)?;
    let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    std::fs::write(out.join("manifest.sha256"), format!("{hash}\n")).map_err(|e| io_err(out, e))?;
    Ok((outcome, hash))
}
