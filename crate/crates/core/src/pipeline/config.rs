use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Result};
use crate::corpus::{Scenario, Target};
use crate::features::WindowConfig;
use crate::learners::LearnerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Independent,
    ChainValenceFirst,
    ChainArousalFirst,
}

impl LabelMode {
    /// The target predicted first and fed to the other, if chained.
    pub fn first(self) -> Option<Target> {
        match self {
            LabelMode::Independent => None,
            LabelMode::ChainValenceFirst => Some(Target::Valence),
            LabelMode::ChainArousalFirst => Some(Target::Arousal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset root in the challenge layout.
    pub data: PathBuf,
    /// Everything a run writes goes under this directory.
    pub output: PathBuf,
    /// Scenario to run; every scenario present in the index when unset.
    pub scenario: Option<Scenario>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub label_mode: LabelMode,
    /// Moving-average length applied to predictions (1 disables smoothing).
    pub smoothing: usize,
    pub ensemble_iterations: usize,
    /// Trailing share of each training file held out for ensemble selection.
    pub validation_fraction: f64,
    pub save_models: bool,
    pub window: WindowConfig,
    pub learners: Vec<LearnerSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: PathBuf::from("data"),
            output: PathBuf::from("out"),
            scenario: None,
            seed: 0,
            workers: 0,
            label_mode: LabelMode::Independent,
            smoothing: 10,
            ensemble_iterations: 25,
            validation_fraction: 0.2,
            save_models: false,
            window: WindowConfig::default(),
            learners: LearnerSpec::default_roster(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.window.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.learners.is_empty() {
            return bad("learners must not be empty".into());
        }
        for l in &self.learners {
            l.resolved().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.smoothing == 0 {
            return bad("smoothing must be >= 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction must be in (0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(one_line(&e.to_string())))?;
        Ok(cfg)
    }

    /// Hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Sets `key` (dotted path) in a TOML table. The value is read as a TOML
/// literal, falling back to a plain string.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(PipelineError::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Reads a TOML config, or the `config` member of a run manifest (`.json`),
/// applies `key=value` overrides and validates the result.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut table = match path {
        None => toml::Table::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            if p.extension().is_some_and(|e| e == "json") {
                let doc: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
                let cfg: RunConfig = serde_json::from_value(doc.get("config").cloned().unwrap_or(doc))
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
                toml::Table::try_from(&cfg).map_err(|e| PipelineError::Config(e.to_string()))?
            } else {
                toml::from_str(&text)
                    .map_err(|e| PipelineError::Config(format!("{}: {}", p.display(), one_line(&e.to_string()))))?
            }
        }
    };
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| PipelineError::Config(one_line(&e.to_string())))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ModelKind;

    #[test]
    fn parses_and_overrides() {
        let text = r#"
            data = "d"
            scenario = "across_time"
            smoothing = 1
            [window]
            emg = 2.0
            [[learners]]
            kind = "ridge_linear"
            params = { lambda = 0.5 }
        "#;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, text).unwrap();
        let cfg = load_config(
            Some(&p),
            &[
                ("seed".into(), "7".into()),
                ("window.gsr".into(), "5.0".into()),
                ("output".into(), "somewhere/else".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.scenario, Some(Scenario::AcrossTime));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.window.emg, 2.0);
        assert_eq!(cfg.window.gsr, 5.0);
        assert_eq!(cfg.output, PathBuf::from("somewhere/else"));
        assert_eq!(cfg.learners[0].kind, ModelKind::RidgeLinear);
        assert_eq!(cfg.learners[0].params["lambda"], 0.5);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(RunConfig::from_toml_str("colour = 3"), Err(PipelineError::Config(_))));
        assert!(matches!(
            load_config(None, &[("window.bogus".into(), "1".into())]),
            Err(PipelineError::Config(_))
        ));
        assert!(matches!(
            load_config(None, &[("smoothing".into(), "0".into())]),
            Err(PipelineError::Config(_))
        ));
    }

    #[test]
    fn manifest_config_round_trip() {
        let cfg = RunConfig {
            seed: 3,
            scenario: Some(Scenario::AcrossSubject),
            ..RunConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(&p, serde_json::json!({ "config": cfg }).to_string()).unwrap();
        let back = load_config(Some(&p), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}
