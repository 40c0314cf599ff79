//! `vapipe` commands: corpus validation, synthesis, runs, scoring, the delay
//! sweep and per-file inspection.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use vapipe_core::corpus::{
    enumerate_dataset, generate_synthetic_dataset, load_annotations, load_recording, CorpusError, DatasetIndex,
    Scenario, SynthSpec,
};
use vapipe_core::eval::{
    aggregate_scores, default_delays, lag_sweep, score_output, write_file_scores, write_summary, EvalError,
    SignalSubset,
};
use vapipe_core::features::{build_feature_frames, FeatureError};
use vapipe_core::learners::LearnerError;
use vapipe_core::pipeline::{self, apply_override, load_config, PipelineError, RunConfig};
use vapipe_core::scenarios::ScenarioError;

#[derive(Debug, Parser)]
#[command(name = "vapipe", version, about = "Continuous valence/arousal regression from physiology")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run config (TOML), or a run manifest (JSON) to re-execute.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Dataset root.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub scenario: Option<Scenario>,
    /// Dotted-path config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check every file of a corpus and report fold counts.
    Validate,
    /// Write a seeded synthetic corpus to --output.
    Synth,
    /// Train and predict; writes predictions and manifest.json.
    Run,
    /// Score a run's predictions against the test ratings.
    Score,
    /// RMSE over feature delays and signal subsets.
    LagSweep,
    /// Per-file recording and rating summaries.
    Inspect {
        /// Also build feature frames and report their shape.
        #[arg(long)]
        features: bool,
    },
}

fn parse_sets(sets: &[String]) -> Result<Vec<(String, String)>> {
    sets.iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn toml_str(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

/// The run config after the file, `--set` overrides and dedicated flags, in
/// that order.
pub fn effective_config(common: &Common) -> Result<RunConfig> {
    let mut overrides = parse_sets(&common.set)?;
    if let Some(d) = &common.data {
        overrides.push(("data".into(), toml_str(d)));
    }
    if let Some(o) = &common.output {
        overrides.push(("output".into(), toml_str(o)));
    }
    if let Some(s) = common.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(w) = common.workers {
        overrides.push(("workers".into(), w.to_string()));
    }
    if let Some(s) = common.scenario {
        overrides.push(("scenario".into(), format!("\"{}\"", s.name())));
    }
    Ok(load_config(common.config.as_deref(), &overrides)?)
}

fn synth_spec(common: &Common) -> Result<SynthSpec> {
    let mut table = match &common.config {
        None => toml::Table::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            if p.extension().is_some_and(|e| e == "json") {
                let v: serde_json::Value = serde_json::from_str(&text).with_context(|| p.display().to_string())?;
                let spec: SynthSpec = serde_json::from_value(v.get("spec").cloned().unwrap_or(v))
                    .with_context(|| p.display().to_string())?;
                toml::Table::try_from(&spec)?
            } else {
                toml::from_str(&text).with_context(|| p.display().to_string())?
            }
        }
    };
    for (k, v) in parse_sets(&common.set)? {
        apply_override(&mut table, &k, &v)?;
    }
    let spec: SynthSpec = table.try_into().context("synthesis spec")?;
    spec.validate()?;
    Ok(spec)
}

fn set_workers(workers: usize) {
    // the global pool can only be built once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
}

fn validate(index: &DatasetIndex) -> Result<serde_json::Value> {
    index.entries().par_iter().try_for_each(|e| -> std::result::Result<(), CorpusError> {
        load_recording(&e.physiology)?;
        if let Some(a) = &e.annotations {
            load_annotations(a)?;
        }
        Ok(())
    })?;
    let folds: Vec<serde_json::Value> = index
        .counts()
        .into_iter()
        .map(|((s, f), (train, test))| json!({ "scenario": s.name(), "fold": f, "train": train, "test": test }))
        .collect();
    Ok(json!({ "root": index.root, "entries": index.len(), "folds": folds, "ok": true }))
}

fn inspect(index: &DatasetIndex, cfg: &RunConfig, features: bool) -> Result<Vec<String>> {
    let lines: Vec<Result<String>> = index
        .entries()
        .par_iter()
        .filter(|e| cfg.scenario.is_none_or(|s| s == e.scenario))
        .map(|e| {
            let rec = load_recording(&e.physiology)?;
            let mut v = json!({
                "entry": e.key(),
                "samples": rec.len(),
                "t0": rec.t0,
                "duration": rec.duration(),
            });
            let ann = match &e.annotations {
                Some(p) => Some(load_annotations(p)?),
                None => None,
            };
            if let Some(a) = &ann {
                let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
                v["annotation_rows"] = json!(a.len());
                v["valence_mean"] = json!(mean(&a.valence));
                v["arousal_mean"] = json!(mean(&a.arousal));
            }
            if features {
                if let Some(a) = &ann {
                    let m = build_feature_frames(&rec, &a.timestamps, &cfg.window)?;
                    v["feature_rows"] = json!(m.len());
                    v["feature_width"] = json!(m.width());
                }
            }
            Ok(v.to_string())
        })
        .collect();
    lines.into_iter().collect()
}

/// Runs one command; returns the lines to print on stdout.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let common = &cli.common;
    if let Some(w) = common.workers {
        set_workers(w);
    }
    match &cli.command {
        Command::Synth => {
            let Some(root) = &common.output else { bail!("synth needs --output") };
            let spec = synth_spec(common)?;
            let index = generate_synthetic_dataset(root, common.seed.unwrap_or(0), &spec)?;
            Ok(vec![json!({ "root": root, "entries": index.len() }).to_string()])
        }
        Command::Validate => {
            let data = match &common.data {
                Some(d) => d.clone(),
                None => effective_config(common)?.data,
            };
            let index = enumerate_dataset(&data)?;
            Ok(vec![validate(&index)?.to_string()])
        }
        Command::Run => {
            let cfg = effective_config(common)?;
            let (outcome, hash) = pipeline::run(&cfg)?;
            let n = outcome.predictions().count();
            Ok(vec![json!({
                "output": cfg.output,
                "predictions": n,
                "manifest_hash": hash,
            })
            .to_string()])
        }
        Command::Score => {
            let cfg = effective_config(common)?;
            let index = enumerate_dataset(&cfg.data)?;
            let files = score_output(&index, &cfg.output, cfg.scenario)?;
            let tree = aggregate_scores(&files)?;
            let dir = cfg.output.join("scores");
            write_file_scores(&dir.join("file_scores.csv"), &files)?;
            write_summary(&dir.join("summary.csv"), &tree)?;
            std::fs::write(dir.join("score_tree.json"), serde_json::to_string_pretty(&tree)? + "\n")?;
            let mut out = Vec::new();
            for s in &tree.scenarios {
                out.push(format!(
                    "{} valence {:.6} arousal {:.6}",
                    s.scenario.name(),
                    s.valence.mean,
                    s.arousal.mean
                ));
            }
            out.push(format!("overall RMSE {:.6}", tree.overall));
            Ok(out)
        }
        Command::LagSweep => {
            let cfg = effective_config(common)?;
            let index = enumerate_dataset(&cfg.data)?;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
            let table = pool.install(|| lag_sweep(&cfg, &index, &SignalSubset::table_columns(), &default_delays()))?;
            std::fs::create_dir_all(&cfg.output)?;
            let path = cfg.output.join("lag_table.csv");
            table.write_csv(&path)?;
            Ok(std::fs::read_to_string(&path)?.lines().map(String::from).collect())
        }
        Command::Inspect { features } => {
            let cfg = effective_config(common)?;
            let index = enumerate_dataset(&cfg.data)?;
            inspect(&index, &cfg, *features)
        }
    }
}

/// Single-line JSON description of a failure.
pub fn error_line(err: &anyhow::Error) -> String {
    let kind = if let Some(e) = err.downcast_ref::<PipelineError>() {
        match e {
            PipelineError::Config(_) => "config",
            PipelineError::Group { .. } => "group",
            _ => "pipeline",
        }
    } else if err.is::<CorpusError>() {
        "corpus"
    } else if err.is::<EvalError>() {
        "eval"
    } else if err.is::<FeatureError>() {
        "features"
    } else if err.is::<LearnerError>() {
        "learner"
    } else if err.is::<ScenarioError>() {
        "scenario"
    } else if err.is::<clap::Error>() {
        "usage"
    } else {
        "error"
    };
    let message = format!("{err:#}").split_whitespace().collect::<Vec<_>>().join(" ");
    json!({ "error": kind, "message": message }).to_string()
}
