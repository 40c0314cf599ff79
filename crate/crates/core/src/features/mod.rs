//! Per-timestamp feature frames: cleaned channels, windowed Table-style
//! statistics and a flattened raw-context block.
//!
//! Column order: `bvp_*` (10), `ecg_*` (15), `rsp_*` (20), `eda_*` (6),
//! `emg_zygo_*`, `emg_coru_*`, `emg_trap_*` (6 each), then `ctx_<channel>_<k>`
//! for every channel in [`Channel::ALL`] order.

mod clean;
mod extract;

pub use clean::{clean_channel, clean_emg, eda_decompose};
pub use extract::{extract_features, rate_track_from_peaks, FeatureKind, WindowInput};

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Channel, Recording};
use crate::dsp::{detect_peaks, DspError, Signal, Sos};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown feature kind `{0}`")]
    UnknownKind(String),
    #[error("need at least 2 peaks, got {0}")]
    TooFewPeaks(usize),
    #[error("timestamp {t} s outside recording span [{start}, {end}] s")]
    TimestampOutOfRange { t: f64, start: f64, end: f64 },
    #[error("delay {delay} s outside [0, {max}] s")]
    DelayOutOfRange { delay: f64, max: f64 },
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Feature window lengths in seconds and the raw-context sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub ecg: f64,
    pub bvp: f64,
    pub rsp: f64,
    pub gsr: f64,
    pub skt: f64,
    pub emg: f64,
    pub raw_context_halfwidth: f64,
    pub raw_context_rate: f64,
    /// Largest delay accepted when shifting frames.
    pub max_delay: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            ecg: 10.0,
            bvp: 10.0,
            rsp: 10.0,
            gsr: 4.0,
            skt: 4.0,
            emg: 1.0,
            raw_context_halfwidth: 0.25,
            raw_context_rate: 20.0,
            max_delay: 0.05,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.ecg,
            self.bvp,
            self.rsp,
            self.gsr,
            self.skt,
            self.emg,
            self.raw_context_halfwidth,
            self.raw_context_rate,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(FeatureError::InvalidConfig("all window values must be positive".into()));
        }
        if !(self.max_delay.is_finite() && self.max_delay >= 0.0) {
            return Err(FeatureError::InvalidConfig("max_delay must be non-negative".into()));
        }
        let long = self.ecg.min(self.bvp).min(self.rsp);
        if !(self.emg <= self.gsr && self.gsr <= long) {
            return Err(FeatureError::InvalidConfig(
                "expected emg <= gsr <= ecg, bvp and rsp windows".into(),
            ));
        }
        if self.context_len() == 0 {
            return Err(FeatureError::InvalidConfig("raw context holds no samples".into()));
        }
        Ok(())
    }

    /// Context samples per channel: 2 * halfwidth * rate.
    pub fn context_len(&self) -> usize {
        (2.0 * self.raw_context_halfwidth * self.raw_context_rate).round() as usize
    }
}

/// The windowed blocks in column order: (kind, source channel, prefix).
pub const FEATURE_BLOCKS: [(FeatureKind, Channel, &str); 7] = [
    (FeatureKind::Bvp, Channel::Bvp, "bvp"),
    (FeatureKind::Ecg, Channel::Ecg, "ecg"),
    (FeatureKind::Rsp, Channel::Rsp, "rsp"),
    (FeatureKind::Eda, Channel::Gsr, "eda"),
    (FeatureKind::Emg, Channel::EmgZygo, "emg_zygo"),
    (FeatureKind::Emg, Channel::EmgCoru, "emg_coru"),
    (FeatureKind::Emg, Channel::EmgTrap, "emg_trap"),
];

/// Width of the windowed (non-context) block.
pub fn table_width() -> usize {
    FEATURE_BLOCKS.iter().map(|b| b.0.width()).sum()
}

pub fn column_names(cfg: &WindowConfig) -> Vec<String> {
    let mut names = Vec::new();
    for (kind, _, prefix) in FEATURE_BLOCKS {
        names.extend(kind.names().iter().map(|n| format!("{prefix}_{n}")));
    }
    for ch in Channel::ALL {
        names.extend((0..cfg.context_len()).map(|k| format!("ctx_{}_{k:02}", ch.name())));
    }
    names
}

/// Indices of the columns derived from one channel.
pub fn channel_columns(column_names: &[String], channel: Channel) -> Vec<usize> {
    let prefix = FEATURE_BLOCKS
        .iter()
        .find(|b| b.1 == channel)
        .map(|b| format!("{}_", b.2));
    let ctx = format!("ctx_{}_", channel.name());
    column_names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with(&ctx) || prefix.as_ref().is_some_and(|p| n.starts_with(p)))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub subject_id: u32,
    pub video_id: u32,
    pub timestamps: Vec<f64>,
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: cols.iter().map(|&j| self.column_names[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&j| r[j]).collect())
                .collect(),
            ..self.clone_header()
        }
    }

    /// Appends one column.
    pub fn with_column(mut self, name: &str, values: &[f64]) -> FeatureMatrix {
        assert_eq!(values.len(), self.rows.len(), "column length mismatch");
        self.column_names.push(name.to_string());
        for (r, v) in self.rows.iter_mut().zip(values) {
            r.push(*v);
        }
        self
    }

    fn clone_header(&self) -> FeatureMatrix {
        FeatureMatrix {
            subject_id: self.subject_id,
            video_id: self.video_id,
            timestamps: self.timestamps.clone(),
            column_names: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("time");
        for n in &self.column_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, row) in self.timestamps.iter().zip(&self.rows) {
            out.push_str(&format!("{t}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))
    }
}

/// A recording after cleaning and whole-signal event detection, ready to be
/// framed at any timestamps and delay.
#[derive(Debug, Clone)]
pub struct PreparedRecording {
    pub subject_id: u32,
    pub video_id: u32,
    pub t0: f64,
    pub sample_rate: f64,
    cfg: WindowConfig,
    cleaned: [Vec<f64>; 8],
    ecg_peaks: Vec<usize>,
    bvp_peaks: Vec<usize>,
    rsp_peaks: Vec<usize>,
    rsp_troughs: Vec<usize>,
    tonic: Sos,
}

impl PreparedRecording {
    pub fn new(rec: &Recording, cfg: &WindowConfig) -> Result<Self> {
        cfg.validate()?;
        let fs = rec.sample_rate;
        let cleaned: Vec<Vec<f64>> = Channel::ALL
            .par_iter()
            .map(|&ch| {
                let raw = Signal::new(rec.channel(ch).to_vec(), fs)?;
                Ok(clean_channel(ch, &raw)?.into_samples())
            })
            .collect::<Result<_>>()?;
        let cleaned: [Vec<f64>; 8] = cleaned.try_into().expect("eight channels");
        let sig = |ch: Channel| Signal::new(cleaned[ch.index()].clone(), fs);
        let ecg_peaks = detect_peaks(&sig(Channel::Ecg)?, 0.3, 0.4);
        let bvp_peaks = detect_peaks(&sig(Channel::Bvp)?, 0.3, 0.3);
        let rsp = sig(Channel::Rsp)?;
        let rsp_peaks = detect_peaks(&rsp, 1.5, 0.3);
        let inverted = Signal::new(rsp.samples().iter().map(|v| -v).collect(), fs)?;
        let rsp_troughs = detect_peaks(&inverted, 1.5, 0.3);
        Ok(PreparedRecording {
            subject_id: rec.subject_id,
            video_id: rec.video_id,
            t0: rec.t0,
            sample_rate: fs,
            cfg: cfg.clone(),
            cleaned,
            ecg_peaks,
            bvp_peaks,
            rsp_peaks,
            rsp_troughs,
            tonic: clean::eda_tonic_filter(fs)?,
        })
    }

    pub fn config(&self) -> &WindowConfig {
        &self.cfg
    }

    pub fn cleaned(&self, ch: Channel) -> &[f64] {
        &self.cleaned[ch.index()]
    }

    pub fn len(&self) -> usize {
        self.cleaned[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn window_len(&self, seconds: f64) -> usize {
        ((seconds * self.sample_rate).round() as usize).max(1)
    }

    fn events(&self, kind: FeatureKind) -> (&[usize], &[usize]) {
        match kind {
            FeatureKind::Ecg => (&self.ecg_peaks, &[]),
            FeatureKind::Bvp => (&self.bvp_peaks, &[]),
            FeatureKind::Rsp => (&self.rsp_peaks, &self.rsp_troughs),
            _ => (&[], &[]),
        }
    }

    fn row(&self, end: usize) -> Vec<f64> {
        let fs = self.sample_rate;
        let mut row = Vec::with_capacity(table_width() + 8 * self.cfg.context_len());
        for (kind, ch, _) in FEATURE_BLOCKS {
            let seconds = match ch {
                Channel::Ecg => self.cfg.ecg,
                Channel::Bvp => self.cfg.bvp,
                Channel::Rsp => self.cfg.rsp,
                Channel::Gsr => self.cfg.gsr,
                _ => self.cfg.emg,
            };
            let start = (end + 1).saturating_sub(self.window_len(seconds));
            let (peaks, troughs) = self.events(kind);
            let rebase = |idx: &[usize]| -> Vec<usize> {
                let a = idx.partition_point(|&p| p < start);
                let b = idx.partition_point(|&p| p <= end);
                idx[a..b].iter().map(|p| p - start).collect()
            };
            let (ev, tr) = (rebase(peaks), rebase(troughs));
            let input = WindowInput {
                samples: &self.cleaned[ch.index()][start..=end],
                sample_rate: fs,
                events: &ev,
                troughs: &tr,
            };
            let values = match kind {
                FeatureKind::Eda => extract::extract_eda(&input, &self.tonic),
                _ => extract_features(kind, &input).expect("window is non-empty"),
            };
            row.extend(values);
        }
        let half = (self.cfg.raw_context_halfwidth * self.cfg.raw_context_rate).round() as i64;
        let step = fs / self.cfg.raw_context_rate;
        let last = self.len() as i64 - 1;
        for ch in Channel::ALL {
            let x = &self.cleaned[ch.index()];
            for k in 0..self.cfg.context_len() as i64 {
                let offset = ((k - half) as f64 * step).round() as i64;
                let idx = (end as i64 + offset).clamp(0, last) as usize;
                row.push(x[idx]);
            }
        }
        row
    }

    /// One row per timestamp, every window ending at `timestamp - delay` on
    /// the sample grid.
    pub fn frames(&self, timestamps: &[f64], delay: f64) -> Result<FeatureMatrix> {
        if !(delay >= 0.0 && delay <= self.cfg.max_delay + 1e-12) {
            return Err(FeatureError::DelayOutOfRange {
                delay,
                max: self.cfg.max_delay,
            });
        }
        let n = self.len();
        let t_end = self.t0 + (n as f64 - 1.0) / self.sample_rate;
        let tol = 0.5 / self.sample_rate;
        let mut ends = Vec::with_capacity(timestamps.len());
        for &t in timestamps {
            if !(t >= self.t0 - tol && t <= t_end + tol) {
                return Err(FeatureError::TimestampOutOfRange {
                    t,
                    start: self.t0,
                    end: t_end,
                });
            }
            let idx = ((t - delay - self.t0) * self.sample_rate).round();
            ends.push(idx.clamp(0.0, (n - 1) as f64) as usize);
        }
        let mut rows: Vec<Vec<f64>> = ends.par_iter().map(|&e| self.row(e)).collect();
        // undefined rate-style values carry the previous row forward
        for i in 0..rows.len() {
            for j in 0..rows[i].len() {
                if !rows[i][j].is_finite() {
                    rows[i][j] = if i > 0 { rows[i - 1][j] } else { 0.0 };
                }
            }
        }
        Ok(FeatureMatrix {
            subject_id: self.subject_id,
            video_id: self.video_id,
            timestamps: timestamps.to_vec(),
            column_names: column_names(&self.cfg),
            rows,
        })
    }
}

pub fn build_feature_frames(
    recording: &Recording,
    annotation_timestamps: &[f64],
    cfg: &WindowConfig,
) -> Result<FeatureMatrix> {
    PreparedRecording::new(recording, cfg)?.frames(annotation_timestamps, 0.0)
}

/// Recomputes `matrix` with all windows ending `delay` seconds earlier.
pub fn shift_features(
    prepared: &PreparedRecording,
    matrix: &FeatureMatrix,
    delay: f64,
) -> Result<FeatureMatrix> {
    prepared.frames(&matrix.timestamps, delay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{latent_trajectory, synthesize_session};
    use crate::corpus::{SynthSpec, TimeUnit};

    fn recording(channels: [Vec<f64>; 8]) -> Recording {
        Recording {
            subject_id: 1,
            video_id: 2,
            sample_rate: 1000.0,
            t0: 0.0,
            time_unit: TimeUnit::Milliseconds,
            channels,
        }
    }

    fn synthetic(seconds: usize) -> Recording {
        let spec = SynthSpec::default();
        let latent = latent_trajectory(5, 1, 0, seconds * 1000, &spec);
        recording(synthesize_session(&latent, &spec, 5))
    }

    fn grid(seconds: usize) -> Vec<f64> {
        (0..seconds * 20).map(|k| k as f64 * 0.05).collect()
    }

    #[test]
    fn schema_width() {
        let names = column_names(&WindowConfig::default());
        assert_eq!(table_width(), 69);
        assert_eq!(names.len(), 149);
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        let skt = channel_columns(&names, Channel::Skt);
        assert_eq!(skt.len(), 10);
        assert_eq!(channel_columns(&names, Channel::Ecg).len(), 25);
        assert_eq!(channel_columns(&names, Channel::Gsr).len(), 16);
        assert_eq!(channel_columns(&names, Channel::EmgZygo).len(), 16);
    }

    #[test]
    fn fifty_second_recording() {
        let rec = synthetic(50);
        let m = build_feature_frames(&rec, &grid(50), &WindowConfig::default()).unwrap();
        assert_eq!((m.len(), m.width()), (1000, 149));
        assert!(m.rows.iter().flatten().all(|v| v.is_finite()));
        // heart rate is recovered late in the record
        let hr = m.column(m.column_names.iter().position(|n| n == "ecg_rate_mean").unwrap());
        assert!(hr[999] > 35.0 && hr[999] < 110.0, "{}", hr[999]);
        let again = build_feature_frames(&rec, &grid(50), &WindowConfig::default()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn zero_recording() {
        let rec = recording(Default::default()).clone();
        let rec = Recording {
            channels: std::array::from_fn(|_| vec![0.0; 20_000]),
            ..rec
        };
        let m = build_feature_frames(&rec, &grid(20), &WindowConfig::default()).unwrap();
        for row in &m.rows {
            assert!(row.iter().all(|v| v.is_finite()));
            assert!(row[..table_width()].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn rates_carry_forward_over_a_flat_prefix() {
        let mut rec = synthetic(30);
        for v in &mut rec.channels[Channel::Bvp.index()][..12_000] {
            *v = 0.0;
        }
        let m = build_feature_frames(&rec, &grid(30), &WindowConfig::default()).unwrap();
        let j = m.column_names.iter().position(|n| n == "bvp_rate_mean").unwrap();
        let col = m.column(j);
        assert_eq!(col[0], 0.0);
        assert!(col.iter().all(|v| v.is_finite()));
        assert!(col[599] > 30.0);
    }

    #[test]
    fn delay_moves_context() {
        let ramp: Vec<f64> = (0..20_000).map(|i| i as f64 * 1e-3).collect();
        let mut channels: [Vec<f64>; 8] = std::array::from_fn(|_| vec![0.0; 20_000]);
        channels[Channel::Skt.index()] = ramp;
        let rec = recording(channels);
        let cfg = WindowConfig::default();
        let prep = PreparedRecording::new(&rec, &cfg).unwrap();
        let ts = grid(20);
        let base = prep.frames(&ts, 0.0).unwrap();
        assert_eq!(base, build_feature_frames(&rec, &ts, &cfg).unwrap());
        let shifted = shift_features(&prep, &base, 0.05).unwrap();
        let small = shift_features(&prep, &base, 0.005).unwrap();
        let skt = channel_columns(&base.column_names, Channel::Skt);
        for i in 100..300 {
            for &j in &skt {
                assert!((base.rows[i][j] - shifted.rows[i][j] - 0.05).abs() < 1e-12);
            }
        }
        assert_ne!(base, small);
        assert!(matches!(
            prep.frames(&ts, 0.06),
            Err(FeatureError::DelayOutOfRange { .. })
        ));
        assert!(matches!(
            prep.frames(&[25.0], 0.0),
            Err(FeatureError::TimestampOutOfRange { .. })
        ));
    }

    #[test]
    fn appending_data_barely_moves_earlier_rows() {
        let long = synthetic(40);
        let mut short = long.clone();
        for ch in &mut short.channels {
            ch.truncate(30_000);
        }
        let cfg = WindowConfig::default();
        // rows at least 20 s before the cut
        let ts: Vec<f64> = grid(10);
        let a = build_feature_frames(&short, &ts, &cfg).unwrap();
        let b = build_feature_frames(&long, &ts, &cfg).unwrap();
        let ctx = table_width();
        let skt = channel_columns(&a.column_names, Channel::Skt);
        for i in 0..ts.len() {
            for &j in &skt {
                assert_eq!(a.rows[i][j], b.rows[i][j]);
            }
            // zero-phase filters see the whole record, so only approximately
            for (j, tol) in [(ctx + 2 * 10, 1e-3), (ctx + 3 * 10, 2e-2)] {
                assert!((a.rows[i][j] - b.rows[i][j]).abs() < tol);
            }
        }
    }
}
