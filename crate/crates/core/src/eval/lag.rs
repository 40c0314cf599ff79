use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aggregate_scores, io_err, score_tracks, Result};
use crate::corpus::{Channel, DatasetIndex, Scenario};
use crate::features::{channel_columns, column_names};
use crate::pipeline::{build_quadrant_map, predict_fold, FoldData, PreparedFold, RunConfig};
use crate::scenarios::build_folds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalSubset {
    All,
    Only(Channel),
}

impl SignalSubset {
    /// The grid's columns: all signals, then each signal alone.
    pub fn table_columns() -> Vec<SignalSubset> {
        [
            SignalSubset::All,
            SignalSubset::Only(Channel::Bvp),
            SignalSubset::Only(Channel::Ecg),
            SignalSubset::Only(Channel::EmgCoru),
            SignalSubset::Only(Channel::EmgTrap),
            SignalSubset::Only(Channel::EmgZygo),
            SignalSubset::Only(Channel::Gsr),
            SignalSubset::Only(Channel::Rsp),
            SignalSubset::Only(Channel::Skt),
        ]
        .to_vec()
    }

    pub fn columns(self, names: &[String]) -> Option<Vec<usize>> {
        match self {
            SignalSubset::All => None,
            SignalSubset::Only(ch) => Some(channel_columns(names, ch)),
        }
    }
}

impl fmt::Display for SignalSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalSubset::All => f.write_str("ALL"),
            SignalSubset::Only(ch) => {
                let name = match ch {
                    Channel::EmgCoru => "EMG_coru".to_string(),
                    Channel::EmgTrap => "EMG_trap".to_string(),
                    Channel::EmgZygo => "EMG_zygo".to_string(),
                    other => other.name().to_uppercase(),
                };
                f.write_str(&name)
            }
        }
    }
}

/// RMSE per (delay, subset); rows are delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagTable {
    pub delays: Vec<f64>,
    pub subsets: Vec<SignalSubset>,
    pub cells: Vec<Vec<f64>>,
}

impl LagTable {
    /// Delay of the smallest RMSE in a column; the earlier delay wins ties.
    pub fn argmin_delay(&self, col: usize) -> f64 {
        let mut best = 0;
        for r in 1..self.delays.len() {
            if self.cells[r][col] < self.cells[best][col] {
                best = r;
            }
        }
        self.delays[best]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        let mut header = vec!["delay".to_string()];
        header.extend(self.subsets.iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(|e| io_err(path, e))?;
        let minima: Vec<f64> = (0..self.subsets.len()).map(|c| self.argmin_delay(c)).collect();
        for (r, d) in self.delays.iter().enumerate() {
            let mut rec = vec![format!("{d:.3}")];
            for (c, v) in self.cells[r].iter().enumerate() {
                let flag = if minima[c] == *d { "*" } else { "" };
                rec.push(format!("{v:.6}{flag}"));
            }
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

/// Default delay grid: 0 to 0.05 s in 5 ms steps.
pub fn default_delays() -> Vec<f64> {
    (0..=10).map(|k| k as f64 * 0.005).collect()
}

/// Trains and scores the configured scenario once per (subset, delay) with
/// feature windows ending `delay` s before each rating. A cell is the mean of
/// the two targets' scenario-level RMSEs.
pub fn lag_sweep(cfg: &RunConfig, index: &DatasetIndex, subsets: &[SignalSubset], delays: &[f64]) -> Result<LagTable> {
    cfg.validate()?;
    let scenario = cfg.scenario.unwrap_or(Scenario::AcrossTime);
    let quadrants = match scenario {
        Scenario::AcrossElicitor => build_quadrant_map(index)?,
        _ => None,
    };
    let folds = build_folds(scenario, index, quadrants.as_ref()).map_err(crate::pipeline::PipelineError::from)?;
    let prepared: Vec<PreparedFold> = folds.iter().map(|f| PreparedFold::new(f, cfg)).collect::<std::result::Result<_, _>>()?;
    let names = column_names(&cfg.window);
    let mut cells = vec![vec![f64::NAN; subsets.len()]; delays.len()];
    for (r, &delay) in delays.iter().enumerate() {
        let full: Vec<FoldData> = prepared.iter().map(|p| p.frames(delay, None)).collect::<std::result::Result<_, _>>()?;
        for (c, subset) in subsets.iter().enumerate() {
            let cols = subset.columns(&names);
            let mut tracks = Vec::new();
            for (fold, data) in folds.iter().zip(&full) {
                let outcome = match &cols {
                    Some(cols) => predict_fold(cfg, fold, &data.select_columns(cols))?,
                    None => predict_fold(cfg, fold, data)?,
                };
                tracks.extend(outcome.predictions);
            }
            let tree = aggregate_scores(&score_tracks(&tracks)?)?;
            cells[r][c] = 0.5 * (tree.overall_valence + tree.overall_arousal);
        }
    }
    Ok(LagTable {
        delays: delays.to_vec(),
        subsets: subsets.to_vec(),
        cells,
    })
}
